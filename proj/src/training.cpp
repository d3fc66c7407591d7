#include "dmc/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dmc/errors.hpp"

namespace dmc {

using nlohmann::json;
using DualD = Dual<double>;

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::supervised: return "supervised";
        case Strategy::wgan: return "wgan";
        case Strategy::denoise: return "denoise";
    }
    return "denoise";
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "supervised") return Strategy::supervised;
    if (s == "wgan") return Strategy::wgan;
    if (s == "denoise") return Strategy::denoise;
    throw ParseError("strategy: expected supervised, wgan or denoise, got '" + s + "'");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ParameterError("train.epochs must be >= 1");
    if (batch_size < 1) throw ParameterError("train.batch_size must be >= 1");
    if (!(learning_rate > 0)) throw ParameterError("train.learning_rate must be > 0");
    if (!(lambda_init >= lambda_final && lambda_final >= 0)) {
        throw ParameterError("train: need lambda_init >= lambda_final >= 0");
    }
    if (!(gamma >= 0)) throw ParameterError("train.gamma must be >= 0");
    if (T_train < 1) throw ParameterError("train.T_train must be >= 1");
    if (critic_steps < 1) throw ParameterError("train.critic_steps must be >= 1");
}

json to_json(const TrainConfig& c) {
    return {{"strategy", to_string(c.strategy)}, {"epochs", c.epochs},
            {"batch_size", c.batch_size},         {"learning_rate", c.learning_rate},
            {"lambda_init", c.lambda_init},       {"lambda_final", c.lambda_final},
            {"gamma", c.gamma},                   {"T_train", c.T_train},
            {"critic_steps", c.critic_steps},     {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& doc) {
    TrainConfig c;
    if (doc.is_null()) return c;
    if (!doc.is_object()) throw ParseError("train: expected an object");
    try {
        if (doc.contains("strategy")) c.strategy = strategy_from_string(doc.at("strategy").get<std::string>());
        c.epochs = doc.value("epochs", c.epochs);
        c.batch_size = doc.value("batch_size", c.batch_size);
        c.learning_rate = doc.value("learning_rate", c.learning_rate);
        c.lambda_init = doc.value("lambda_init", c.lambda_init);
        c.lambda_final = doc.value("lambda_final", c.lambda_final);
        c.gamma = doc.value("gamma", c.gamma);
        c.T_train = doc.value("T_train", c.T_train);
        c.critic_steps = doc.value("critic_steps", c.critic_steps);
        c.seed = doc.value("seed", c.seed);
    } catch (const json::type_error& e) {
        throw ParseError(std::string("train: ") + e.what());
    }
    c.validate();
    return c;
}

double lambda_at(const TrainConfig& c, int epoch) {
    if (c.epochs <= 1) return c.lambda_init;
    const double f = static_cast<double>(epoch) / static_cast<double>(c.epochs - 1);
    return c.lambda_init + f * (c.lambda_final - c.lambda_init);
}

TrainingExample make_example(const MotionRecord& record, const DistortionSpec& spec) {
    if (!record.condition) throw UsageError("training records need a condition vector");
    return {*record.condition, record.motion.frames, apply_distortion(record.motion, spec).frames, spec};
}

double mse(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("mse: shape mismatch");
    return (a - b).squaredNorm() / static_cast<double>(a.size());
}

namespace {

void check_example(const CalibratorConfig& cfg, const TrainingExample& ex) {
    if (ex.clean.rows() != ex.distorted.rows() || ex.clean.cols() != ex.distorted.cols()) {
        throw ShapeError("training example: clean and distorted shapes differ");
    }
    check_inputs(cfg, ex.condition, ex.distorted, cfg.mode == CalibratorMode::residual ? std::optional<int>(1)
                                                                                      : std::nullopt);
}

void reset(nn::Parameters<double>* grad, const nn::Parameters<double>& like) {
    if (grad) *grad = like.zeros_like();
}

}  // namespace

// ---------------------------------------------------------------- supervised

SupervisedLoss supervised_objective(const Matrix& refined, const Eigen::Vector2d& predicted_spec,
                                    const TrainingExample& example) {
    SupervisedLoss l;
    l.motion = mse(refined, example.clean);
    l.bias = std::pow(predicted_spec(0) - example.spec.bias, 2);
    l.sigma = std::pow(predicted_spec(1) - example.spec.sigma, 2);
    l.total = l.motion + l.bias + l.sigma;
    return l;
}

SupervisedLoss loss_supervised(const CalibratorModel& model, Batch batch, nn::Parameters<double>* grad) {
    const auto& cfg = model.config();
    if (cfg.mode != CalibratorMode::direct || !cfg.aux_head) {
        throw UsageError("supervised loss needs a direct-mode calibrator with the distortion head");
    }
    reset(grad, model.parameters());
    SupervisedLoss total;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto& ex : batch) {
        check_example(cfg, ex);
        CalibratorTape<double> tape;
        const auto out = calibrator_forward<double>(cfg, model.parameters(), ex.condition.values.transpose(),
                                                    ex.distorted, std::nullopt, tape);
        const auto l = supervised_objective(out.motion, out.aux.transpose(), ex);
        total.total += inv * l.total;
        total.motion += inv * l.motion;
        total.bias += inv * l.bias;
        total.sigma += inv * l.sigma;
        if (grad) {
            const Matrix d_motion = (2.0 * inv / static_cast<double>(out.motion.size())) * (out.motion - ex.clean);
            RowVecX<double> d_aux(2);
            d_aux << 2.0 * inv * (out.aux(0) - ex.spec.bias), 2.0 * inv * (out.aux(1) - ex.spec.sigma);
            calibrator_backward<double>(cfg, model.parameters(), tape, d_motion, &d_aux, *grad);
        }
    }
    return total;
}

// ---------------------------------------------------------------------- WGAN

double ModelCritic::score(const ConditionVector& e, const Matrix& m) const {
    check_inputs(disc.config(), e, m);
    DiscriminatorTape<double> tape;
    return discriminator_forward<double>(disc.config(), disc.parameters(), e.values.transpose(), m, tape);
}

Matrix ModelCritic::input_gradient(const ConditionVector& e, const Matrix& m) const {
    return discriminator_input_gradient(disc, e, m);
}

Matrix penalty_point(const CriticSample& s, double alpha) {
    if (s.real.rows() != s.fake.rows() || s.real.cols() != s.fake.cols()) {
        throw ShapeError("critic sample: real and fake shapes differ");
    }
    return alpha * s.real + (1.0 - alpha) * s.fake;
}

GeneratorLoss loss_generator(const CalibratorModel& model, const DiscriminatorModel& disc, Batch batch,
                             double lambda, nn::Parameters<double>* grad) {
    const auto& cfg = model.config();
    if (cfg.mode != CalibratorMode::direct) throw UsageError("generator loss needs a direct-mode calibrator");
    reset(grad, model.parameters());
    const ModelCritic critic{disc};
    GeneratorLoss total;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto& ex : batch) {
        check_example(cfg, ex);
        CalibratorTape<double> tape;
        const auto out = calibrator_forward<double>(cfg, model.parameters(), ex.condition.values.transpose(),
                                                    ex.distorted, std::nullopt, tape);
        const auto l = generator_objective(critic, ex.condition, out.motion, ex.clean, lambda);
        total.total += inv * l.total;
        total.adversarial += inv * l.adversarial;
        total.reconstruction += inv * l.reconstruction;
        if (grad) {
            Matrix d_motion = -inv * critic.input_gradient(ex.condition, out.motion);
            d_motion += (2.0 * lambda * inv / static_cast<double>(out.motion.size())) * (out.motion - ex.clean);
            calibrator_backward<double>(cfg, model.parameters(), tape, d_motion, nullptr, *grad);
        }
    }
    return total;
}

DiscriminatorLoss loss_discriminator(const DiscriminatorModel& disc, std::span<const CriticSample> batch,
                                     double gamma, std::span<const double> alphas, nn::Parameters<double>* grad) {
    if (alphas.size() != batch.size()) throw ShapeError("loss_discriminator: one alpha per sample");
    const auto& cfg = disc.config();
    const auto& p = disc.parameters();
    reset(grad, p);
    const double inv = 1.0 / static_cast<double>(batch.size());
    DiscriminatorLoss total;

    std::optional<nn::Parameters<DualD>> p_dual;
    if (grad && gamma > 0) p_dual = p.cast<DualD>();

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& s = batch[i];
        check_inputs(cfg, s.condition, s.real);
        check_inputs(cfg, s.condition, s.fake);
        const RowVecX<double> e = s.condition.values.transpose();

        DiscriminatorTape<double> tape;
        const double d_fake = discriminator_forward<double>(cfg, p, e, s.fake, tape);
        if (grad) discriminator_backward<double>(cfg, p, tape, inv, *grad);
        const double d_real = discriminator_forward<double>(cfg, p, e, s.real, tape);
        if (grad) discriminator_backward<double>(cfg, p, tape, -inv, *grad);

        const Matrix m_hat = penalty_point(s, alphas[i]);
        discriminator_forward<double>(cfg, p, e, m_hat, tape);
        auto scratch = p.zeros_like();
        const Matrix g = discriminator_backward<double>(cfg, p, tape, 1.0, scratch);
        const double norm = g.norm();

        total.fake += inv * d_fake;
        total.real += inv * d_real;
        total.penalty += inv * (norm - 1.0) * (norm - 1.0);

        if (grad && gamma > 0 && norm > 0) {
            // d/dtheta (||g|| - 1)^2 = 2 (||g|| - 1) d/dtheta <g, u>, u = g / ||g|| held fixed.
            // <g, u> is the directional derivative of D along u, so push u in as the input tangent
            // and read d/dtheta of it from the tangent part of the dual parameter gradient.
            const Matrix u = g / norm;
            MatX<DualD> x(m_hat.rows(), m_hat.cols());
            for (Index r = 0; r < x.rows(); ++r)
                for (Index c = 0; c < x.cols(); ++c) x(r, c) = DualD(m_hat(r, c), u(r, c));
            DiscriminatorTape<DualD> dtape;
            discriminator_forward<DualD>(cfg, *p_dual, e.cast<DualD>(), x, dtape);
            auto dgrad = p_dual->zeros_like();
            discriminator_backward<DualD>(cfg, *p_dual, dtape, DualD(1.0), dgrad);
            const double coef = gamma * inv * 2.0 * (norm - 1.0);
            for (Index k = 0; k < grad->size(); ++k) grad->values()(k) += coef * dgrad.values()(k).d;
        }
    }
    total.total = total.fake - total.real + gamma * total.penalty;
    return total;
}

DiscriminatorLoss loss_discriminator(const DiscriminatorModel& disc, std::span<const CriticSample> batch,
                                     double gamma, Rng& rng, nn::Parameters<double>* grad) {
    std::vector<double> alphas(batch.size());
    for (auto& a : alphas) a = uniform(rng, 0.0, 1.0);
    return loss_discriminator(disc, batch, gamma, alphas, grad);
}

// ------------------------------------------------------------------- denoise

Matrix interpolate_mt(const Matrix& clean, const Matrix& distorted, int t, int T) {
    if (T < 1 || t < 0 || t > T) throw UsageError("interpolate_mt: need 0 <= t <= T, T >= 1");
    if (clean.rows() != distorted.rows() || clean.cols() != distorted.cols()) {
        throw ShapeError("interpolate_mt: shape mismatch");
    }
    if (t == 0) return clean;
    if (t == T) return distorted;
    const double w = static_cast<double>(t) / static_cast<double>(T);
    return (static_cast<double>(T - t) / static_cast<double>(T)) * clean + w * distorted;
}

MotionSequence interpolate_mt(const MotionSequence& clean, const MotionSequence& distorted, int t, int T) {
    return clean.with_frames(interpolate_mt(clean.frames, distorted.frames, t, T));
}

DenoiseLoss loss_denoise(const CalibratorModel& model, Batch batch, int T_train, std::span<const int> timesteps,
                         nn::Parameters<double>* grad) {
    const auto& cfg = model.config();
    if (cfg.mode != CalibratorMode::residual) throw UsageError("denoise loss needs a residual-mode calibrator");
    if (timesteps.size() != batch.size()) throw ShapeError("loss_denoise: one timestep per example");
    reset(grad, model.parameters());
    DenoiseLoss total;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& ex = batch[i];
        const int t = timesteps[i];
        if (t < 1 || t > T_train) throw UsageError("loss_denoise: timestep outside [1, T_train]");
        check_example(cfg, ex);
        const Matrix m_t = interpolate_mt(ex.clean, ex.distorted, t, T_train);
        const Matrix target = (ex.distorted - ex.clean) / static_cast<double>(T_train);
        CalibratorTape<double> tape;
        const auto out =
            calibrator_forward<double>(cfg, model.parameters(), ex.condition.values.transpose(), m_t, t, tape);
        total.total += inv * mse(out.motion, target);
        if (grad) {
            const Matrix d_out = (2.0 * inv / static_cast<double>(target.size())) * (out.motion - target);
            calibrator_backward<double>(cfg, model.parameters(), tape, d_out, nullptr, *grad);
        }
    }
    return total;
}

DenoiseLoss loss_denoise(const CalibratorModel& model, Batch batch, int T_train, Rng& rng,
                         nn::Parameters<double>* grad) {
    std::vector<int> timesteps(batch.size());
    std::uniform_int_distribution<int> pick(1, T_train);
    for (auto& t : timesteps) t = pick(rng);
    return loss_denoise(model, batch, T_train, timesteps, grad);
}

// ----------------------------------------------------------------- inference

Matrix refine_iterative(const ResidualFn& residual, const Matrix& input, int T_hat) {
    if (T_hat < 1) throw UsageError("refine_iterative: T_hat must be >= 1");
    Matrix m = input;
    for (int t = T_hat; t >= 1; --t) {
        const Matrix r = residual(m, t);
        if (r.rows() != m.rows() || r.cols() != m.cols()) throw ShapeError("refine_iterative: residual shape");
        m -= r;
    }
    return m;
}

MotionSequence refine_iterative(const CalibratorModel& model, const ConditionVector& condition,
                                const MotionSequence& input, int T_hat) {
    if (model.config().mode != CalibratorMode::residual) {
        throw UsageError("iterative refinement needs a residual-mode calibrator");
    }
    check_inputs(model.config(), condition, input.frames, 1);
    const RowVecX<double> e = condition.values.transpose();
    const ResidualFn step = [&](const Matrix& m_t, int t) {
        CalibratorTape<double> tape;
        return calibrator_forward<double>(model.config(), model.parameters(), e, m_t, t, tape).motion;
    };
    return input.with_frames(refine_iterative(step, input.frames, T_hat));
}

MotionSequence refine_single(const CalibratorModel& model, const ConditionVector& condition,
                             const MotionSequence& input) {
    if (model.config().mode != CalibratorMode::direct) {
        throw UsageError("single-step refinement needs a direct-mode calibrator");
    }
    return forward(model, condition, input);
}

MotionSequence refine(const CalibratorModel& model, const ConditionVector& condition, const MotionSequence& input,
                      int T_hat) {
    return model.config().mode == CalibratorMode::residual ? refine_iterative(model, condition, input, T_hat)
                                                           : refine_single(model, condition, input);
}

// -------------------------------------------------------------------- Adam

Adam::Adam(Index size, AdamConfig config)
    : config_(config), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

void Adam::step(Vector& params, const Vector& grad) {
    ++t_;
    m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
    v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config_.beta1, t_);
    const double c2 = 1.0 - std::pow(config_.beta2, t_);
    params.array() -= config_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
}

// ------------------------------------------------------------------ training

json to_json(const EpochLog& e) {
    return {{"epoch", e.epoch}, {"steps", e.steps}, {"lambda", e.lambda}, {"terms", e.terms}};
}

json summary_json(const TrainReport& r) {
    json j{{"epochs", r.epochs.size()},
           {"wall_seconds", r.wall_seconds},
           {"seed", r.seed},
           {"checkpoint", r.checkpoint_path},
           {"config", r.config}};
    j["final"] = r.epochs.empty() ? json(nullptr) : to_json(r.epochs.back());
    return j;
}

CalibratorConfig configure_for(Strategy s, CalibratorConfig base) {
    base.mode = s == Strategy::denoise ? CalibratorMode::residual : CalibratorMode::direct;
    base.aux_head = s == Strategy::supervised;
    return base;
}

namespace {

class TermMeans {
public:
    void add(const std::map<std::string, double>& terms) {
        for (const auto& [k, v] : terms) sums_[k] += v;
        ++count_;
    }
    std::map<std::string, double> means() const {
        std::map<std::string, double> out;
        for (const auto& [k, v] : sums_) out[k] = v / static_cast<double>(std::max(count_, 1));
        return out;
    }

private:
    std::map<std::string, double> sums_;
    int count_ = 0;
};

Matrix run_direct(const CalibratorModel& model, const TrainingExample& ex) {
    CalibratorTape<double> tape;
    return calibrator_forward<double>(model.config(), model.parameters(), ex.condition.values.transpose(),
                                      ex.distorted, std::nullopt, tape)
        .motion;
}

void guard_finite(const std::map<std::string, double>& terms, const Vector& grad, int epoch, int step) {
    for (const auto& [k, v] : terms) {
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << "training diverged at epoch " << epoch << ", step " << step << ": loss term '" << k << "' = " << v;
            throw DivergenceError(os.str());
        }
    }
    if (!grad.allFinite()) {
        std::ostringstream os;
        os << "training diverged at epoch " << epoch << ", step " << step << ": non-finite gradient";
        throw DivergenceError(os.str());
    }
}

}  // namespace

TrainResult train(std::span<const MotionRecord> corpus, const TrainConfig& config, const CalibratorConfig& calibrator,
                  const DiscriminatorConfig& discriminator, DistortionToggles toggles, const StepObserver& observer) {
    config.validate();
    if (corpus.empty()) throw UsageError("train: empty corpus");
    if (!toggles.bias && !toggles.smoothing) throw UsageError("train: at least one distortion must be enabled");
    const auto started = std::chrono::steady_clock::now();

    auto cal_cfg = configure_for(config.strategy, calibrator);
    if (config.strategy == Strategy::denoise) cal_cfg.denoise_steps = config.T_train;
    TrainResult result{CalibratorModel::initialize(cal_cfg, derive_seed(config.seed, 1)), std::nullopt, {}};
    auto& model = result.model;
    const AdamConfig adam_cfg{config.learning_rate};
    Adam opt(model.parameters().size(), adam_cfg);
    Adam critic_opt;
    if (config.strategy == Strategy::wgan) {
        result.discriminator = DiscriminatorModel::initialize(discriminator, derive_seed(config.seed, 2));
        critic_opt = Adam(result.discriminator->parameters().size(), adam_cfg);
    }

    Rng rng(derive_seed(config.seed, 3));
    auto draw_examples = [&](std::span<const std::size_t> indices) {
        std::vector<TrainingExample> batch;
        batch.reserve(indices.size());
        for (auto i : indices) batch.push_back(make_example(corpus[i], sample_distortion(rng, toggles)));
        return batch;
    };

    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto bs = static_cast<std::size_t>(config.batch_size);
    int step = 0;
    auto grad = model.parameters().zeros_like();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lambda = lambda_at(config, epoch);
        std::shuffle(order.begin(), order.end(), rng);
        TermMeans means;
        int epoch_steps = 0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const auto idx = std::span<const std::size_t>(order).subspan(start, std::min(bs, order.size() - start));
            const auto batch = draw_examples(idx);
            std::map<std::string, double> terms;

            switch (config.strategy) {
                case Strategy::supervised: {
                    const auto l = loss_supervised(model, batch, &grad);
                    terms = {{"total", l.total}, {"motion", l.motion}, {"bias", l.bias}, {"sigma", l.sigma}};
                    break;
                }
                case Strategy::denoise: {
                    const auto l = loss_denoise(model, batch, config.T_train, rng, &grad);
                    terms = {{"denoise", l.total}};
                    break;
                }
                case Strategy::wgan: {
                    auto& disc = *result.discriminator;
                    DiscriminatorLoss dl;
                    for (int k = 0; k < config.critic_steps; ++k) {
                        std::vector<std::size_t> pick(bs);
                        std::uniform_int_distribution<std::size_t> any(0, corpus.size() - 1);
                        for (auto& p : pick) p = any(rng);
                        const auto critic_batch = draw_examples(pick);
                        std::vector<CriticSample> samples;
                        samples.reserve(critic_batch.size());
                        for (const auto& ex : critic_batch) {
                            samples.push_back({ex.condition, ex.clean, run_direct(model, ex)});
                        }
                        auto dgrad = disc.parameters().zeros_like();
                        dl = loss_discriminator(disc, samples, config.gamma, rng, &dgrad);
                        guard_finite({{"critic", dl.total}}, dgrad.values(), epoch, step + 1);
                        critic_opt.step(disc.parameters().values(), dgrad.values());
                    }
                    const auto gl = loss_generator(model, disc, batch, lambda, &grad);
                    terms = {{"generator", gl.total},       {"adversarial", gl.adversarial},
                             {"reconstruction", gl.reconstruction}, {"critic", dl.total},
                             {"critic_penalty", dl.penalty}, {"wasserstein", dl.real - dl.fake}};
                    break;
                }
            }
            ++step;
            ++epoch_steps;
            guard_finite(terms, grad.values(), epoch, step);
            opt.step(model.parameters().values(), grad.values());
            means.add(terms);
            if (observer) observer({step, epoch, &model, terms});
        }
        result.report.epochs.push_back({epoch, epoch_steps, lambda, means.means()});
    }

    result.report.seed = config.seed;
    result.report.config = {{"train", to_json(config)},
                            {"calibrator", to_json(cal_cfg)},
                            {"toggles", {{"bias", toggles.bias}, {"smoothing", toggles.smoothing}}}};
    if (config.strategy == Strategy::wgan) result.report.config["discriminator"] = to_json(discriminator);
    result.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

}  // namespace dmc
