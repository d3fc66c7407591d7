#include "dmc/model.hpp"

#include <cmath>
#include <numbers>

#include "dmc/errors.hpp"
#include "dmc/motion_io.hpp"
#include "dmc/rng.hpp"

namespace dmc {

using nlohmann::json;

std::string to_string(CalibratorMode mode) { return mode == CalibratorMode::direct ? "direct" : "residual"; }

CalibratorMode calibrator_mode_from_string(const std::string& s) {
    if (s == "direct") return CalibratorMode::direct;
    if (s == "residual") return CalibratorMode::residual;
    throw ParseError("mode: expected 'direct' or 'residual', got '" + s + "'");
}

namespace {

void check_encoder(const nn::EncoderShape& s, Index d_p, Index d_e, Index max_frames, const char* what) {
    const std::string w(what);
    if (d_p < 1 || d_e < 1 || s.d_model < 1 || s.n_layers < 1 || s.n_heads < 1 || s.ffn_dim < 1 || max_frames < 1) {
        throw ParameterError(w + ": all sizes must be >= 1");
    }
    if (s.d_model % s.n_heads != 0) throw ParameterError(w + ": d_model must be divisible by n_heads");
}

Index read_index(const json& doc, const char* key, Index fallback) {
    if (!doc.contains(key)) return fallback;
    if (!doc.at(key).is_number_integer()) throw ParseError(std::string(key) + ": expected an integer");
    return doc.at(key).get<Index>();
}

}  // namespace

void CalibratorConfig::validate() const {
    check_encoder(encoder_shape(), d_p, d_e, max_frames, "calibrator");
    if (denoise_steps < 1) throw ParameterError("calibrator: denoise_steps must be >= 1");
}

void DiscriminatorConfig::validate() const { check_encoder(encoder_shape(), d_p, d_e, max_frames, "discriminator"); }

json to_json(const CalibratorConfig& c) {
    return {{"d_p", c.d_p},           {"d_e", c.d_e},         {"d_model", c.d_model},
            {"n_layers", c.n_layers}, {"n_heads", c.n_heads}, {"ffn_dim", c.ffn_dim},
            {"max_frames", c.max_frames}, {"denoise_steps", c.denoise_steps},
            {"mode", to_string(c.mode)}, {"aux_head", c.aux_head}};
}

json to_json(const DiscriminatorConfig& c) {
    return {{"d_p", c.d_p},         {"d_e", c.d_e},         {"d_model", c.d_model}, {"n_layers", c.n_layers},
            {"n_heads", c.n_heads}, {"ffn_dim", c.ffn_dim}, {"max_frames", c.max_frames}};
}

CalibratorConfig calibrator_config_from_json(const json& doc) {
    CalibratorConfig c;
    if (doc.is_null()) return c;
    if (!doc.is_object()) throw ParseError("calibrator config: expected an object");
    c.d_p = read_index(doc, "d_p", c.d_p);
    c.d_e = read_index(doc, "d_e", c.d_e);
    c.d_model = read_index(doc, "d_model", c.d_model);
    c.n_layers = read_index(doc, "n_layers", c.n_layers);
    c.n_heads = read_index(doc, "n_heads", c.n_heads);
    c.ffn_dim = read_index(doc, "ffn_dim", c.ffn_dim);
    c.max_frames = read_index(doc, "max_frames", c.max_frames);
    c.denoise_steps = read_index(doc, "denoise_steps", c.denoise_steps);
    if (doc.contains("mode")) c.mode = calibrator_mode_from_string(doc.at("mode").get<std::string>());
    if (doc.contains("aux_head")) c.aux_head = doc.at("aux_head").get<bool>();
    c.validate();
    return c;
}

DiscriminatorConfig discriminator_config_from_json(const json& doc) {
    DiscriminatorConfig c;
    if (doc.is_null()) return c;
    if (!doc.is_object()) throw ParseError("discriminator config: expected an object");
    c.d_p = read_index(doc, "d_p", c.d_p);
    c.d_e = read_index(doc, "d_e", c.d_e);
    c.d_model = read_index(doc, "d_model", c.d_model);
    c.n_layers = read_index(doc, "n_layers", c.n_layers);
    c.n_heads = read_index(doc, "n_heads", c.n_heads);
    c.ffn_dim = read_index(doc, "ffn_dim", c.ffn_dim);
    c.max_frames = read_index(doc, "max_frames", c.max_frames);
    c.validate();
    return c;
}

std::shared_ptr<const nn::ParameterLayout> make_layout(const CalibratorConfig& c) {
    c.validate();
    auto layout = std::make_shared<nn::ParameterLayout>();
    layout->add("cond_proj.w", c.d_e, c.d_p);
    layout->add("cond_proj.b", 1, c.d_p);
    layout->add("input.w", c.d_p, c.d_model);
    layout->add("input.b", 1, c.d_model);
    if (c.mode == CalibratorMode::residual) {
        layout->add("time.w", c.d_model, c.d_model);
        layout->add("time.b", 1, c.d_model);
    }
    nn::add_encoder_parameters(*layout, "encoder", c.encoder_shape());
    layout->add("head.w", c.d_model, c.d_p);
    layout->add("head.b", 1, c.d_p);
    if (c.aux_head) {
        layout->add("aux.w", c.d_model, 2);
        layout->add("aux.b", 1, 2);
    }
    return layout;
}

std::shared_ptr<const nn::ParameterLayout> make_layout(const DiscriminatorConfig& c) {
    c.validate();
    auto layout = std::make_shared<nn::ParameterLayout>();
    layout->add("cond.w", c.d_e, c.d_model);
    layout->add("cond.b", 1, c.d_model);
    layout->add("input.w", c.d_p, c.d_model);
    layout->add("input.b", 1, c.d_model);
    nn::add_encoder_parameters(*layout, "encoder", c.encoder_shape());
    layout->add("score.w", c.d_model, 1);
    layout->add("score.b", 1, 1);
    return layout;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void standard_init(nn::Parameters<double>& params, std::uint64_t seed) {
    Rng rng(mix64(seed));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const auto& spec : params.layout().entries()) {
        auto block = params[spec.name];
        if (ends_with(spec.name, ".gain")) {
            block.setOnes();
        } else if (spec.rows == 1) {
            block.setZero();
        } else {
            const double scale = 1.0 / std::sqrt(static_cast<double>(spec.rows));
            for (Index i = 0; i < block.size(); ++i) block.data()[i] = scale * normal(rng);
        }
    }
}

}  // namespace

CalibratorModel::CalibratorModel(CalibratorConfig config, nn::Parameters<double> params)
    : config_(std::move(config)), params_(std::move(params)) {
    if (!(params_.layout() == *make_layout(config_))) throw ShapeError("calibrator parameters do not match config");
}

CalibratorModel CalibratorModel::initialize(const CalibratorConfig& config, std::uint64_t seed) {
    nn::Parameters<double> params(make_layout(config));
    standard_init(params, seed);
    params["head.w"].setZero();
    return {config, std::move(params)};
}

DiscriminatorModel::DiscriminatorModel(DiscriminatorConfig config, nn::Parameters<double> params)
    : config_(std::move(config)), params_(std::move(params)) {
    if (!(params_.layout() == *make_layout(config_))) throw ShapeError("discriminator parameters do not match config");
}

DiscriminatorModel DiscriminatorModel::initialize(const DiscriminatorConfig& config, std::uint64_t seed) {
    nn::Parameters<double> params(make_layout(config));
    standard_init(params, seed);
    return {config, std::move(params)};
}

void randomize_parameters(nn::Parameters<double>& params, std::uint64_t seed, double scale) {
    Rng rng(mix64(seed));
    std::normal_distribution<double> normal(0.0, scale);
    for (Index i = 0; i < params.size(); ++i) params.values()(i) = normal(rng);
}

void check_inputs(const CalibratorConfig& cfg, const ConditionVector& condition, const Matrix& motion,
                  std::optional<int> timestep) {
    if (condition.size() != cfg.d_e) throw ShapeError("condition width does not match d_e");
    if (motion.cols() != cfg.d_p) throw ShapeError("motion frame width does not match d_p");
    if (motion.rows() < 1) throw ShapeError("motion has no frames");
    if (motion.rows() > cfg.max_frames) throw ShapeError("motion longer than max_frames");
    if (cfg.mode == CalibratorMode::residual && !timestep) {
        throw UsageError("residual-mode calibrator needs a timestep");
    }
    if (cfg.mode == CalibratorMode::direct && timestep) throw UsageError("direct-mode calibrator takes no timestep");
    if (timestep && *timestep < 1) throw UsageError("timestep must be >= 1");
}

void check_inputs(const DiscriminatorConfig& cfg, const ConditionVector& condition, const Matrix& motion) {
    if (condition.size() != cfg.d_e) throw ShapeError("condition width does not match d_e");
    if (motion.cols() != cfg.d_p) throw ShapeError("motion frame width does not match d_p");
    if (motion.rows() < 1 || motion.rows() > cfg.max_frames) throw ShapeError("motion length outside [1, max_frames]");
}

MotionSequence forward(const CalibratorModel& model, const ConditionVector& condition, const MotionSequence& motion,
                       std::optional<int> timestep) {
    check_inputs(model.config(), condition, motion.frames, timestep);
    CalibratorTape<double> tape;
    auto out = calibrator_forward<double>(model.config(), model.parameters(), condition.values.transpose(),
                                          motion.frames, timestep, tape);
    return motion.with_frames(std::move(out.motion));
}

Eigen::Vector2d predict_distortion(const CalibratorModel& model, const ConditionVector& condition,
                                   const MotionSequence& motion) {
    if (!model.config().aux_head) throw UsageError("calibrator has no distortion head");
    check_inputs(model.config(), condition, motion.frames, std::nullopt);
    CalibratorTape<double> tape;
    const auto out = calibrator_forward<double>(model.config(), model.parameters(), condition.values.transpose(),
                                                motion.frames, std::nullopt, tape);
    return out.aux.transpose();
}

double discriminate(const DiscriminatorModel& disc, const ConditionVector& condition, const MotionSequence& motion) {
    check_inputs(disc.config(), condition, motion.frames);
    DiscriminatorTape<double> tape;
    return discriminator_forward<double>(disc.config(), disc.parameters(), condition.values.transpose(),
                                         motion.frames, tape);
}

Matrix discriminator_input_gradient(const DiscriminatorModel& disc, const ConditionVector& condition,
                                    const Matrix& motion) {
    check_inputs(disc.config(), condition, motion);
    DiscriminatorTape<double> tape;
    discriminator_forward<double>(disc.config(), disc.parameters(), condition.values.transpose(), motion, tape);
    auto scratch = disc.parameters().zeros_like();
    return discriminator_backward<double>(disc.config(), disc.parameters(), tape, 1.0, scratch);
}

// ---------------------------------------------------------- checkpoints

namespace {

constexpr const char* kCheckpointFormat = "dmc-checkpoint";
constexpr int kCheckpointVersion = 1;

json parameters_to_json(const nn::Parameters<double>& params) {
    json out = json::object();
    for (const auto& spec : params.layout().entries()) {
        const auto block = params[spec.name];
        out[spec.name] = {{"rows", spec.rows},
                          {"cols", spec.cols},
                          {"data", std::vector<double>(block.data(), block.data() + block.size())}};
    }
    return out;
}

nn::Parameters<double> parameters_from_json(const json& doc, std::shared_ptr<const nn::ParameterLayout> layout) {
    if (!doc.is_object()) throw ParseError("checkpoint.parameters: expected an object");
    nn::Parameters<double> params(layout);
    if (doc.size() != layout->entries().size()) throw ParseError("checkpoint.parameters: wrong number of arrays");
    for (const auto& spec : layout->entries()) {
        if (!doc.contains(spec.name)) throw ParseError("checkpoint.parameters." + spec.name + ": missing");
        const auto& entry = doc.at(spec.name);
        const auto& data = entry.at("data");
        if (entry.at("rows").get<Index>() != spec.rows || entry.at("cols").get<Index>() != spec.cols ||
            !data.is_array() || static_cast<Index>(data.size()) != spec.size()) {
            throw ShapeError("checkpoint.parameters." + spec.name + ": shape does not match config");
        }
        auto block = params[spec.name];
        for (Index i = 0; i < spec.size(); ++i) {
            const auto& v = data[static_cast<std::size_t>(i)];
            if (!v.is_number()) throw ParseError("checkpoint.parameters." + spec.name + ": non-numeric entry");
            block.data()[i] = v.get<double>();
        }
    }
    if (!params.values().allFinite()) throw ParseError("checkpoint: non-finite parameter");
    return params;
}

json read_checkpoint(const std::filesystem::path& path, const std::string& kind) {
    auto doc = read_json_file(path);
    auto text = [&doc](const char* key) {
        return doc.contains(key) && doc.at(key).is_string() ? doc.at(key).get<std::string>() : std::string();
    };
    if (!doc.is_object() || text("format") != kCheckpointFormat) {
        throw ParseError(path.string() + ": not a checkpoint file");
    }
    if (!doc.contains("version") || doc.at("version") != kCheckpointVersion) {
        throw ParseError(path.string() + ": unsupported version");
    }
    if (text("kind") != kind) throw ParseError(path.string() + ": checkpoint holds a " + text("kind"));
    return doc;
}

}  // namespace

void save_checkpoint(const CalibratorModel& model, const std::filesystem::path& path) {
    json doc{{"format", kCheckpointFormat},
             {"version", kCheckpointVersion},
             {"kind", "calibrator"},
             {"config", to_json(model.config())},
             {"parameters", parameters_to_json(model.parameters())}};
    write_json_file(doc, path, -1);
}

void save_checkpoint(const DiscriminatorModel& model, const std::filesystem::path& path) {
    json doc{{"format", kCheckpointFormat},
             {"version", kCheckpointVersion},
             {"kind", "discriminator"},
             {"config", to_json(model.config())},
             {"parameters", parameters_to_json(model.parameters())}};
    write_json_file(doc, path, -1);
}

CalibratorModel load_calibrator(const std::filesystem::path& path) {
    const auto doc = read_checkpoint(path, "calibrator");
    try {
        const auto config = calibrator_config_from_json(doc.at("config"));
        return {config, parameters_from_json(doc.at("parameters"), make_layout(config))};
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

CalibratorModel load_calibrator(const std::filesystem::path& path, const CalibratorConfig& expected) {
    auto model = load_calibrator(path);
    if (!(model.config() == expected)) {
        throw UsageError(path.string() + ": checkpoint config " + to_json(model.config()).dump() +
                         " does not match expected " + to_json(expected).dump());
    }
    return model;
}

DiscriminatorModel load_discriminator(const std::filesystem::path& path) {
    const auto doc = read_checkpoint(path, "discriminator");
    try {
        const auto config = discriminator_config_from_json(doc.at("config"));
        return {config, parameters_from_json(doc.at("parameters"), make_layout(config))};
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

// ------------------------------------------------------------ regressor

namespace {

// Frames covering roughly the first half second, at least one step.
Index lead_frames(const MotionSequence& m) {
    return std::clamp<Index>(static_cast<Index>(std::lround(0.5 * m.fps)), 1, m.frame_count() - 1);
}

Eigen::Vector2d root_xz(const MotionSequence& m, Index t) { return {m.frames(t, 0), m.frames(t, 2)}; }

double heading_of(const Eigen::Vector2d& d) { return std::atan2(d.x(), d.y()); }

double wrap(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

}  // namespace

Vector regressor_features(const MotionSequence& m, const ContactParams& params) {
    const Vector base = motion_features(m, params);
    const Index T = m.frame_count();
    Vector f(base.size() + 7);
    f.head(base.size()) = base;
    Index k = base.size();
    if (T < 2) {
        f.tail(7).setZero();
        return f;
    }
    const double duration = static_cast<double>(T - 1) / m.fps;
    double path = 0;
    for (Index t = 1; t < T; ++t) path += (root_xz(m, t) - root_xz(m, t - 1)).norm();
    const Index lead = lead_frames(m);
    const Eigen::Vector2d first = root_xz(m, lead) - root_xz(m, 0);
    const Eigen::Vector2d last = root_xz(m, T - 1) - root_xz(m, T - 1 - lead);
    const Eigen::Vector2d dir = first.norm() > 1e-9 ? Eigen::Vector2d(first.normalized()) : Eigen::Vector2d::Zero();
    double turn = 0;
    if (first.norm() > 1e-9 && last.norm() > 1e-9 && T - 1 > lead) {
        const double span = static_cast<double>(T - 1 - lead) / m.fps;
        turn = wrap(heading_of(last) - heading_of(first)) / span;
    }
    double peak = 0;
    for (Index t = 0; t < T; ++t) peak = std::max({peak, m.height(t, m.skeleton->left_foot()),
                                                   m.height(t, m.skeleton->right_foot())});
    f(k++) = path / duration;
    f(k++) = dir.y();  // cos heading
    f(k++) = dir.x();  // sin heading
    f(k++) = turn;
    f(k++) = duration;
    f(k++) = peak;
    f(k++) = 1.0 / duration;
    return f;
}

ConditionRegressor ConditionRegressor::fit(std::span<const MotionRecord> corpus, double ridge,
                                           const ContactParams& params) {
    if (corpus.size() < 2) throw UsageError("condition regressor: need at least 2 records");
    if (!(ridge >= 0)) throw ParameterError("condition regressor: ridge must be >= 0");
    const auto n = static_cast<Index>(corpus.size());
    Matrix X, Y;
    for (Index i = 0; i < n; ++i) {
        const auto& rec = corpus[static_cast<std::size_t>(i)];
        if (!rec.condition) throw UsageError("condition regressor: record " + std::to_string(i) + " has no condition");
        const Vector f = regressor_features(rec.motion, params);
        if (i == 0) {
            X.resize(n, f.size() + 1);
            Y.resize(n, rec.condition->values.size());
        }
        if (rec.condition->values.size() != Y.cols()) throw ShapeError("condition regressor: condition sizes differ");
        X.row(i).head(f.size()) = f.transpose();
        Y.row(i) = rec.condition->values.transpose();
    }
    const Index F = X.cols() - 1;
    ConditionRegressor r;
    r.params_ = params;
    r.mean_ = X.leftCols(F).colwise().mean().transpose();
    r.scale_ = ((X.leftCols(F).rowwise() - r.mean_.transpose()).colwise().squaredNorm() / static_cast<double>(n))
                   .cwiseSqrt()
                   .transpose();
    for (Index j = 0; j < F; ++j)
        if (r.scale_(j) < 1e-12) r.scale_(j) = 1.0;
    X.leftCols(F) = (X.leftCols(F).rowwise() - r.mean_.transpose()).array().rowwise() / r.scale_.transpose().array();
    X.col(F).setOnes();
    Matrix A = X.transpose() * X;
    A.diagonal().head(F).array() += ridge * static_cast<double>(n);
    r.weights_ = A.ldlt().solve(X.transpose() * Y);
    return r;
}

Vector ConditionRegressor::embed(const MotionSequence& m) const {
    if (weights_.size() == 0) throw UsageError("condition regressor: not fitted");
    const Vector f = regressor_features(m, params_);
    if (f.size() != mean_.size()) throw ShapeError("condition regressor: feature size mismatch");
    const Index F = mean_.size();
    Vector z = ((f - mean_).array() / scale_.array()).matrix();
    return weights_.topRows(F).transpose() * z + weights_.row(F).transpose();
}

MotionEmbedder ConditionRegressor::embedder() const {
    return [self = *this](const MotionSequence& m) { return self.embed(m); };
}

json ConditionRegressor::to_json() const {
    const auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    std::vector<std::vector<double>> w;
    for (Index i = 0; i < weights_.rows(); ++i) w.push_back(vec(weights_.row(i).transpose()));
    return {{"format", "dmc-condition-regressor"},
            {"mean", vec(mean_)},
            {"scale", vec(scale_)},
            {"weights", w},
            {"contact", dmc::to_json(params_)}};
}

ConditionRegressor ConditionRegressor::from_json(const json& doc) {
    try {
        if (doc.at("format") != "dmc-condition-regressor") throw ParseError("not a condition regressor document");
        const auto vec = [](const json& j) {
            const auto v = j.get<std::vector<double>>();
            return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())));
        };
        ConditionRegressor r;
        r.mean_ = vec(doc.at("mean"));
        r.scale_ = vec(doc.at("scale"));
        const auto& w = doc.at("weights");
        if (w.empty() || static_cast<Index>(w.size()) != r.mean_.size() + 1 || r.scale_.size() != r.mean_.size()) {
            throw ParseError("condition regressor: inconsistent sizes");
        }
        r.weights_.resize(static_cast<Index>(w.size()), static_cast<Index>(w[0].size()));
        for (Index i = 0; i < r.weights_.rows(); ++i) {
            const Vector row = vec(w[static_cast<std::size_t>(i)]);
            if (row.size() != r.weights_.cols()) throw ParseError("condition regressor: ragged weights");
            r.weights_.row(i) = row.transpose();
        }
        r.params_ = contact_params_from_json(doc.at("contact"));
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("condition regressor: ") + e.what());
    }
}

}  // namespace dmc
