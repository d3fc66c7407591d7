#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmc/distortion.hpp"
#include "dmc/model.hpp"
#include "dmc/rng.hpp"

namespace dmc {

enum class Strategy { supervised, wgan, denoise };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct TrainConfig {
    Strategy strategy = Strategy::denoise;
    int epochs = 20;
    int batch_size = 16;
    double learning_rate = 1e-4;
    double lambda_init = 5.0;   // reconstruction weight at the first epoch
    double lambda_final = 1.0;  // ... and at the last
    double gamma = 10.0;        // gradient-penalty weight
    int T_train = 100;          // interpolation steps
    int critic_steps = 5;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& doc);

/// Linear decay from lambda_init (epoch 0) to lambda_final (last epoch).
double lambda_at(const TrainConfig& c, int epoch);

/// One self-supervised triplet (m_d, e, m_gt) plus the spec that produced m_d.
struct TrainingExample {
    ConditionVector condition;
    Matrix clean;      // m_gt
    Matrix distorted;  // m_d
    DistortionSpec spec;
};

using Batch = std::span<const TrainingExample>;

TrainingExample make_example(const MotionRecord& record, const DistortionSpec& spec);

// ------------------------------------------------------------- objectives

struct SupervisedLoss {
    double total = 0, motion = 0, bias = 0, sigma = 0;
};

struct GeneratorLoss {
    double total = 0, adversarial = 0, reconstruction = 0;  // reconstruction excludes lambda
};

struct DiscriminatorLoss {
    double total = 0, fake = 0, real = 0, penalty = 0;  // fake = mean D(m_r), real = mean D(m_gt)
};

struct DenoiseLoss {
    double total = 0;
};

/// Mean squared error over all entries.
double mse(const Matrix& a, const Matrix& b);

/// MSE(m_r, m_gt) + (b_hat - b)^2 + (sigma_hat - sigma)^2, batch mean.
/// Needs a direct-mode model with the auxiliary head.
SupervisedLoss loss_supervised(const CalibratorModel& model, Batch batch, nn::Parameters<double>* grad = nullptr);

/// Same objective from explicit predictions (no model).
SupervisedLoss supervised_objective(const Matrix& refined, const Eigen::Vector2d& predicted_spec,
                                    const TrainingExample& example);

/// A critic only needs a score and its input gradient for the objective values.
template <typename C>
concept Critic = requires(const C& c, const ConditionVector& e, const Matrix& m) {
    { c.score(e, m) } -> std::convertible_to<double>;
    { c.input_gradient(e, m) } -> std::convertible_to<Matrix>;
};

/// Adapts a DiscriminatorModel to the Critic concept.
struct ModelCritic {
    const DiscriminatorModel& disc;
    double score(const ConditionVector& e, const Matrix& m) const;
    Matrix input_gradient(const ConditionVector& e, const Matrix& m) const;
};

/// -D(m_r) + lambda * MSE(m_r, m_gt) for one refined motion.
template <Critic C>
GeneratorLoss generator_objective(const C& critic, const ConditionVector& e, const Matrix& refined,
                                  const Matrix& clean, double lambda) {
    GeneratorLoss l;
    l.adversarial = -critic.score(e, refined);
    l.reconstruction = mse(refined, clean);
    l.total = l.adversarial + lambda * l.reconstruction;
    return l;
}

struct CriticSample {
    ConditionVector condition;
    Matrix real;  // m_gt
    Matrix fake;  // m_r
};

/// m_hat = alpha * m_gt + (1 - alpha) * m_r.
Matrix penalty_point(const CriticSample& s, double alpha);

/// Batch mean of D(m_r) - D(m_gt) + gamma (||grad D(m_hat)||_2 - 1)^2, with
/// the gradient taken over the motion input only.
template <Critic C>
DiscriminatorLoss discriminator_objective(const C& critic, std::span<const CriticSample> batch,
                                          std::span<const double> alphas, double gamma) {
    DiscriminatorLoss l;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& s = batch[i];
        l.fake += inv * critic.score(s.condition, s.fake);
        l.real += inv * critic.score(s.condition, s.real);
        const double norm = critic.input_gradient(s.condition, penalty_point(s, alphas[i])).norm();
        l.penalty += inv * (norm - 1.0) * (norm - 1.0);
    }
    l.total = l.fake - l.real + gamma * l.penalty;
    return l;
}

/// Generator objective of the WGAN strategy, batch mean; m_r = forward(model, e, m_d).
GeneratorLoss loss_generator(const CalibratorModel& model, const DiscriminatorModel& disc, Batch batch,
                             double lambda, nn::Parameters<double>* grad = nullptr);

/// Critic objective with alpha ~ U(0, 1) drawn per sample from `rng`. The
/// penalty's parameter gradient is exact: the input gradient is itself
/// differentiated by running the critic's backward pass in dual numbers
/// along the unit direction grad D / ||grad D||.
DiscriminatorLoss loss_discriminator(const DiscriminatorModel& disc, std::span<const CriticSample> batch,
                                     double gamma, Rng& rng, nn::Parameters<double>* grad = nullptr);

/// Fixed-alpha variant (used by loss_discriminator and gradient checks).
DiscriminatorLoss loss_discriminator(const DiscriminatorModel& disc, std::span<const CriticSample> batch,
                                     double gamma, std::span<const double> alphas,
                                     nn::Parameters<double>* grad = nullptr);

/// m_t = ((T - t) / T) m_gt + (t / T) m_d, 0 <= t <= T.
Matrix interpolate_mt(const Matrix& clean, const Matrix& distorted, int t, int T);
MotionSequence interpolate_mt(const MotionSequence& clean, const MotionSequence& distorted, int t, int T);

/// Residual-denoising objective with t ~ U{1..T_train} per example: MSE
/// between DMC([Proj(e); m_t]; t) and the exact step (m_d - m_gt) / T_train.
DenoiseLoss loss_denoise(const CalibratorModel& model, Batch batch, int T_train, Rng& rng,
                         nn::Parameters<double>* grad = nullptr);

/// Fixed-timestep variant.
DenoiseLoss loss_denoise(const CalibratorModel& model, Batch batch, int T_train, std::span<const int> timesteps,
                         nn::Parameters<double>* grad = nullptr);

// -------------------------------------------------------------- inference

/// (m_t, t) -> predicted m_t - m_{t-1}.
using ResidualFn = std::function<Matrix(const Matrix&, int)>;

/// m_{T_hat} = m_input;  m_{t-1} = m_t - residual(m_t, t);  returns m_0.
Matrix refine_iterative(const ResidualFn& residual, const Matrix& input, int T_hat);
MotionSequence refine_iterative(const CalibratorModel& model, const ConditionVector& condition,
                                const MotionSequence& input, int T_hat);

/// One direct-mode forward pass.
MotionSequence refine_single(const CalibratorModel& model, const ConditionVector& condition,
                             const MotionSequence& input);

/// Dispatches on the model's mode; T_hat is ignored for direct models.
MotionSequence refine(const CalibratorModel& model, const ConditionVector& condition, const MotionSequence& input,
                      int T_hat);

// --------------------------------------------------------------- training

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-14;
};

class Adam {
public:
    Adam() = default;
    Adam(Index size, AdamConfig config);
    void step(Vector& params, const Vector& grad);
    int steps() const { return t_; }

private:
    AdamConfig config_;
    Vector m_, v_;
    int t_ = 0;
};

struct EpochLog {
    int epoch = 0;
    int steps = 0;
    double lambda = 0;
    std::map<std::string, double> terms;  // per-epoch means
};

struct TrainReport {
    std::vector<EpochLog> epochs;
    std::string checkpoint_path;
    double wall_seconds = 0;
    std::uint64_t seed = 0;
    nlohmann::json config;
};

nlohmann::json to_json(const EpochLog& e);
nlohmann::json summary_json(const TrainReport& r);

struct TrainResult {
    CalibratorModel model;
    std::optional<DiscriminatorModel> discriminator;
    TrainReport report;
};

struct StepInfo {
    int step = 0;  // 1-based generator/model update count
    int epoch = 0;
    const CalibratorModel* model = nullptr;
    std::map<std::string, double> terms;
};

using StepObserver = std::function<void(const StepInfo&)>;

/// Calibrator config adjusted to a strategy: residual mode for denoise,
/// direct mode otherwise, auxiliary head only for supervised.
CalibratorConfig configure_for(Strategy s, CalibratorConfig base);

/// Trains on clean records, drawing a fresh distortion for every example
/// visit. Deterministic for a fixed config and seed. Throws DivergenceError
/// if any loss term becomes non-finite.
TrainResult train(std::span<const MotionRecord> corpus, const TrainConfig& config,
                  const CalibratorConfig& calibrator, const DiscriminatorConfig& discriminator = {},
                  DistortionToggles toggles = {}, const StepObserver& observer = {});

}  // namespace dmc
