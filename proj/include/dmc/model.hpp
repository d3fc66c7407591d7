#pragma once

// Calibrator: a transformer encoder over [Proj(e); m] that returns either a
// refined motion (direct mode) or the per-step residual m_t - m_{t-1}
// (residual mode). Discriminator: a token transformer critic over
// [condition token; motion tokens] with a linear score.
//
// The *_forward / *_backward templates are the differentiable core; the
// free functions at the bottom are the double-precision public surface.

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>

#include "dmc/metrics.hpp"
#include "dmc/motion.hpp"
#include "dmc/nn/layers.hpp"
#include "dmc/nn/parameters.hpp"

namespace dmc {

enum class CalibratorMode { direct, residual };

std::string to_string(CalibratorMode mode);

/// Residual mode: the head estimates the whole distortion m_d - m_gt in units
/// of this many meters; the step residual is that estimate / denoise_steps.
inline constexpr double kResidualScale = 0.1;
CalibratorMode calibrator_mode_from_string(const std::string& s);

struct CalibratorConfig {
    Index d_p = 21;  // 3 * joints
    Index d_e = kConditionDim;
    Index d_model = 128;
    Index n_layers = 4;
    Index n_heads = 4;
    Index ffn_dim = 256;
    Index max_frames = 200;
    Index denoise_steps = 100;  // residual mode: interpolation steps seen in training
    CalibratorMode mode = CalibratorMode::direct;
    bool aux_head = false;  // pooled (bias, sigma) regression head

    void validate() const;
    nn::EncoderShape encoder_shape() const { return {d_model, n_layers, n_heads, ffn_dim}; }
    friend bool operator==(const CalibratorConfig&, const CalibratorConfig&) = default;
};

struct DiscriminatorConfig {
    Index d_p = 21;
    Index d_e = kConditionDim;
    Index d_model = 64;
    Index n_layers = 2;
    Index n_heads = 4;
    Index ffn_dim = 128;
    Index max_frames = 200;

    void validate() const;
    nn::EncoderShape encoder_shape() const { return {d_model, n_layers, n_heads, ffn_dim}; }
    friend bool operator==(const DiscriminatorConfig&, const DiscriminatorConfig&) = default;
};

nlohmann::json to_json(const CalibratorConfig& c);
nlohmann::json to_json(const DiscriminatorConfig& c);
/// Missing keys keep defaults.
CalibratorConfig calibrator_config_from_json(const nlohmann::json& doc);
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& doc);

std::shared_ptr<const nn::ParameterLayout> make_layout(const CalibratorConfig& c);
std::shared_ptr<const nn::ParameterLayout> make_layout(const DiscriminatorConfig& c);

// ------------------------------------------------------------ centering

/// Models see motions with the sequence-mean ground position removed
/// (mean over all frames and joints of x, and of z); heights are untouched.
template <typename S>
MatX<S> center_ground_plane(const MatX<S>& m) {
    MatX<S> out = m;
    const Index joints = m.cols() / 3;
    const S inv = S(1.0 / static_cast<double>(m.rows() * joints));
    for (Index axis : {Index(0), Index(2)}) {
        S total = S(0.0);
        for (Index j = 0; j < joints; ++j) total += m.col(3 * j + axis).sum();
        const S mean = total * inv;
        for (Index j = 0; j < joints; ++j) out.col(3 * j + axis).array() -= mean;
    }
    return out;
}

/// Adjoint of center_ground_plane (it is a linear projection).
template <typename S>
MatX<S> center_ground_plane_backward(const MatX<S>& d) {
    return center_ground_plane(d);
}

// ----------------------------------------------------------- calibrator

template <typename S>
struct CalibratorTape {
    MatX<S> tokens;  // (T+1) x d_p : [Proj(e); centred motion]
    MatX<S> hidden;  // (T+1) x d_model encoder output
    RowVecX<S> condition;
    RowVecX<S> pooled;
    nn::EncoderCache<S> encoder;
    std::optional<int> timestep;
};

template <typename S>
struct CalibratorOutput {
    MatX<S> motion;   // T x d_p
    RowVecX<S> aux;   // (bias, sigma) when aux_head
};

template <typename S>
CalibratorOutput<S> calibrator_forward(const CalibratorConfig& cfg, const nn::Parameters<S>& p,
                                       const RowVecX<S>& condition, const MatX<S>& motion,
                                       std::optional<int> timestep, CalibratorTape<S>& tape) {
    const Index T = motion.rows();
    tape.condition = condition;
    tape.timestep = timestep;
    tape.tokens.resize(T + 1, cfg.d_p);
    tape.tokens.row(0) = nn::linear(MatX<S>(condition), p["cond_proj.w"], p["cond_proj.b"]).row(0);
    tape.tokens.bottomRows(T) = center_ground_plane(motion);

    MatX<S> h = nn::linear(tape.tokens, p["input.w"], p["input.b"]);
    h += lift<S>(nn::sinusoidal_table(T + 1, cfg.d_model));
    if (cfg.mode == CalibratorMode::residual) {
        const MatX<S> step = lift<S>(nn::sinusoidal_table(1, cfg.d_model, *timestep));
        h.rowwise() += nn::linear(step, p["time.w"], p["time.b"]).row(0);
    }
    tape.hidden = nn::encoder(p, "encoder", cfg.encoder_shape(), std::move(h), tape.encoder);

    CalibratorOutput<S> out;
    const MatX<S> frames_hidden = tape.hidden.bottomRows(T);
    out.motion = nn::linear(frames_hidden, p["head.w"], p["head.b"]);
    if (cfg.mode == CalibratorMode::direct) {
        out.motion += motion;
    } else {
        out.motion *= S(kResidualScale / static_cast<double>(cfg.denoise_steps));
    }
    if (cfg.aux_head) {
        tape.pooled = frames_hidden.colwise().mean();
        out.aux = nn::linear(MatX<S>(tape.pooled), p["aux.w"], p["aux.b"]).row(0);
    }
    return out;
}

/// Accumulates parameter gradients into `g`; returns d loss / d motion.
template <typename S>
MatX<S> calibrator_backward(const CalibratorConfig& cfg, const nn::Parameters<S>& p, const CalibratorTape<S>& tape,
                            const MatX<S>& d_motion_out, const RowVecX<S>* d_aux, nn::Parameters<S>& g) {
    const Index T = tape.tokens.rows() - 1;
    MatX<S> d_head = d_motion_out;
    if (cfg.mode == CalibratorMode::residual) d_head *= S(kResidualScale / static_cast<double>(cfg.denoise_steps));

    const MatX<S> frames_hidden = tape.hidden.bottomRows(T);
    MatX<S> d_hidden = MatX<S>::Zero(T + 1, cfg.d_model);
    {
        auto dw = g["head.w"];
        auto db = g["head.b"];
        d_hidden.bottomRows(T) = nn::linear_backward(frames_hidden, p["head.w"], d_head, dw, db);
    }
    if (cfg.aux_head && d_aux) {
        auto dw = g["aux.w"];
        auto db = g["aux.b"];
        const MatX<S> d_pooled = nn::linear_backward(MatX<S>(tape.pooled), p["aux.w"], MatX<S>(*d_aux), dw, db);
        d_hidden.bottomRows(T).rowwise() += d_pooled.row(0) * S(1.0 / static_cast<double>(T));
    }

    const MatX<S> d_h0 = nn::encoder_backward(p, g, "encoder", cfg.encoder_shape(), tape.encoder, d_hidden);
    if (cfg.mode == CalibratorMode::residual) {
        const MatX<S> step = lift<S>(nn::sinusoidal_table(1, cfg.d_model, *tape.timestep));
        auto dw = g["time.w"];
        auto db = g["time.b"];
        const MatX<S> d_step_out = d_h0.colwise().sum();
        nn::linear_backward(step, p["time.w"], d_step_out, dw, db);
    }
    MatX<S> d_tokens;
    {
        auto dw = g["input.w"];
        auto db = g["input.b"];
        d_tokens = nn::linear_backward(tape.tokens, p["input.w"], d_h0, dw, db);
    }
    {
        auto dw = g["cond_proj.w"];
        auto db = g["cond_proj.b"];
        nn::linear_backward(MatX<S>(tape.condition), p["cond_proj.w"], MatX<S>(d_tokens.topRows(1)), dw, db);
    }
    MatX<S> d_motion = center_ground_plane_backward(MatX<S>(d_tokens.bottomRows(T)));
    if (cfg.mode == CalibratorMode::direct) d_motion += d_motion_out;
    return d_motion;
}

// -------------------------------------------------------- discriminator

template <typename S>
struct DiscriminatorTape {
    MatX<S> motion_centred;
    MatX<S> hidden;
    RowVecX<S> condition;
    RowVecX<S> pooled;
    nn::EncoderCache<S> encoder;
};

template <typename S>
S discriminator_forward(const DiscriminatorConfig& cfg, const nn::Parameters<S>& p, const RowVecX<S>& condition,
                        const MatX<S>& motion, DiscriminatorTape<S>& tape) {
    const Index T = motion.rows();
    tape.condition = condition;
    tape.motion_centred = center_ground_plane(motion);
    MatX<S> h(T + 1, cfg.d_model);
    h.row(0) = nn::linear(MatX<S>(condition), p["cond.w"], p["cond.b"]).row(0);
    h.bottomRows(T) = nn::linear(tape.motion_centred, p["input.w"], p["input.b"]);
    h += lift<S>(nn::sinusoidal_table(T + 1, cfg.d_model));
    tape.hidden = nn::encoder(p, "encoder", cfg.encoder_shape(), std::move(h), tape.encoder);
    tape.pooled = tape.hidden.colwise().mean();
    return nn::linear(MatX<S>(tape.pooled), p["score.w"], p["score.b"])(0, 0);
}

/// Accumulates d_score * dD/dtheta into `g`; returns d_score * dD/dmotion.
template <typename S>
MatX<S> discriminator_backward(const DiscriminatorConfig& cfg, const nn::Parameters<S>& p,
                               const DiscriminatorTape<S>& tape, const S& d_score, nn::Parameters<S>& g) {
    const Index N = tape.hidden.rows();
    MatX<S> d_out(1, 1);
    d_out(0, 0) = d_score;
    MatX<S> d_pooled;
    {
        auto dw = g["score.w"];
        auto db = g["score.b"];
        d_pooled = nn::linear_backward(MatX<S>(tape.pooled), p["score.w"], d_out, dw, db);
    }
    MatX<S> d_hidden(N, cfg.d_model);
    d_hidden.rowwise() = d_pooled.row(0) * S(1.0 / static_cast<double>(N));
    const MatX<S> d_h0 = nn::encoder_backward(p, g, "encoder", cfg.encoder_shape(), tape.encoder, d_hidden);
    {
        auto dw = g["cond.w"];
        auto db = g["cond.b"];
        nn::linear_backward(MatX<S>(tape.condition), p["cond.w"], MatX<S>(d_h0.topRows(1)), dw, db);
    }
    auto dw = g["input.w"];
    auto db = g["input.b"];
    const MatX<S> d_centred =
        nn::linear_backward(tape.motion_centred, p["input.w"], MatX<S>(d_h0.bottomRows(N - 1)), dw, db);
    return center_ground_plane_backward(d_centred);
}

// ------------------------------------------------------- public surface

class CalibratorModel {
public:
    CalibratorModel() = default;
    CalibratorModel(CalibratorConfig config, nn::Parameters<double> params);

    /// Scaled-normal weights (std 1/sqrt(fan_in)), unit LayerNorm gains, zero
    /// biases. The motion head starts at zero, so a fresh direct model is the
    /// identity map and a fresh residual model predicts no correction.
    static CalibratorModel initialize(const CalibratorConfig& config, std::uint64_t seed);

    const CalibratorConfig& config() const { return config_; }
    const nn::Parameters<double>& parameters() const { return params_; }
    nn::Parameters<double>& parameters() { return params_; }

private:
    CalibratorConfig config_;
    nn::Parameters<double> params_;
};

class DiscriminatorModel {
public:
    DiscriminatorModel() = default;
    DiscriminatorModel(DiscriminatorConfig config, nn::Parameters<double> params);

    static DiscriminatorModel initialize(const DiscriminatorConfig& config, std::uint64_t seed);

    const DiscriminatorConfig& config() const { return config_; }
    const nn::Parameters<double>& parameters() const { return params_; }
    nn::Parameters<double>& parameters() { return params_; }

private:
    DiscriminatorConfig config_;
    nn::Parameters<double> params_;
};

/// Overwrites every parameter with N(0, scale^2) draws (tests, probes).
void randomize_parameters(nn::Parameters<double>& params, std::uint64_t seed, double scale = 0.3);

/// Direct mode: the refined motion. Residual mode: the predicted residual
/// m_t - m_{t-1}, which needs `timestep` >= 1.
MotionSequence forward(const CalibratorModel& model, const ConditionVector& condition, const MotionSequence& motion,
                       std::optional<int> timestep = std::nullopt);

/// (bias, sigma) prediction of the auxiliary head.
Eigen::Vector2d predict_distortion(const CalibratorModel& model, const ConditionVector& condition,
                                   const MotionSequence& motion);

double discriminate(const DiscriminatorModel& disc, const ConditionVector& condition, const MotionSequence& motion);

/// dD/dmotion, T x 3J.
Matrix discriminator_input_gradient(const DiscriminatorModel& disc, const ConditionVector& condition,
                                    const Matrix& motion);

/// Throws ShapeError / UsageError when the inputs do not fit the config.
void check_inputs(const CalibratorConfig& cfg, const ConditionVector& condition, const Matrix& motion,
                  std::optional<int> timestep);
void check_inputs(const DiscriminatorConfig& cfg, const ConditionVector& condition, const Matrix& motion);

// ---------------------------------------------------------- checkpoints

/// JSON container {format, kind, config, parameters: {name: {rows, cols,
/// data}}}; doubles are written in shortest round-trip form, so reloading is
/// bit-exact.
void save_checkpoint(const CalibratorModel& model, const std::filesystem::path& path);
void save_checkpoint(const DiscriminatorModel& model, const std::filesystem::path& path);

CalibratorModel load_calibrator(const std::filesystem::path& path);
/// Also rejects a checkpoint whose stored config differs from `expected`.
CalibratorModel load_calibrator(const std::filesystem::path& path, const CalibratorConfig& expected);
DiscriminatorModel load_discriminator(const std::filesystem::path& path);

// ------------------------------------------------- condition regressor

/// Motion descriptor for the regressor: motion_features plus root travel
/// statistics (mean horizontal speed, initial unit direction, mean turn
/// rate, duration, peak foot height).
Vector regressor_features(const MotionSequence& m, const ContactParams& params = {});

/// Ridge regression from regressor_features to the condition vector. Its
/// prediction is the motion-side embedding for R-Precision; the condition
/// vector itself is the condition-side embedding.
class ConditionRegressor {
public:
    ConditionRegressor() = default;

    /// Records need conditions. Features are standardised before the fit.
    static ConditionRegressor fit(std::span<const MotionRecord> corpus, double ridge = 1e-3,
                                  const ContactParams& params = {});

    Vector embed(const MotionSequence& m) const;
    MotionEmbedder embedder() const;

    nlohmann::json to_json() const;
    static ConditionRegressor from_json(const nlohmann::json& doc);

private:
    Vector mean_, scale_;
    Matrix weights_;  // (features + 1) x d_e, last row is the intercept
    ContactParams params_;
};

}  // namespace dmc
