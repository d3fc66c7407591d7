#include <doctest.h>

#include <cmath>

#include "dmc/errors.hpp"
#include "dmc/training.hpp"
#include "helpers.hpp"
#include "oracle.hpp"

using namespace testing;
using dmc::CalibratorMode;

namespace {

// D(x) = <W, x>, gradient W everywhere.
struct LinearCritic {
    Matrix w;
    double score(const dmc::ConditionVector&, const Matrix& m) const { return (w.array() * m.array()).sum(); }
    Matrix input_gradient(const dmc::ConditionVector&, const Matrix&) const { return w; }
};

struct ConstantCritic {
    double value = 0.7;
    double score(const dmc::ConditionVector&, const Matrix&) const { return value; }
    Matrix input_gradient(const dmc::ConditionVector&, const Matrix& m) const {
        return Matrix::Zero(m.rows(), m.cols());
    }
};

static_assert(dmc::Critic<LinearCritic>);
static_assert(dmc::Critic<dmc::ModelCritic>);

std::vector<dmc::CriticSample> critic_batch(int n, Index T, std::uint64_t seed) {
    std::vector<dmc::CriticSample> out;
    for (int i = 0; i < n; ++i) {
        const auto ex = random_example(T, seed + static_cast<std::uint64_t>(i));
        out.push_back({ex.condition, ex.clean, ex.distorted});
    }
    return out;
}

std::vector<dmc::TrainingExample> examples(int n, Index T, std::uint64_t seed) {
    std::vector<dmc::TrainingExample> out;
    for (int i = 0; i < n; ++i) out.push_back(random_example(T, seed + static_cast<std::uint64_t>(i)));
    return out;
}

dmc::TrainConfig micro_train(dmc::Strategy s) {
    dmc::TrainConfig c;
    c.strategy = s;
    c.epochs = 2;
    c.batch_size = 4;
    c.learning_rate = 1e-3;
    c.T_train = 10;
    c.critic_steps = 2;
    c.seed = 5;
    return c;
}

dmc::Corpus short_corpus(std::size_t n, std::uint64_t seed) {
    dmc::ParamDistribution d;
    d.duration = {1.0, 1.0};
    return dmc::generate_corpus(n, d, 10.0, seed);
}

}  // namespace

TEST_CASE("train config validation and JSON") {
    dmc::TrainConfig c;
    CHECK(c.lambda_init == 5.0);
    CHECK(c.gamma == 10.0);
    CHECK(c.T_train == 100);
    CHECK(c.critic_steps == 5);
    CHECK_NOTHROW(c.validate());
    auto bad = c;
    bad.lambda_final = 6;
    CHECK_THROWS_AS(bad.validate(), dmc::ParameterError);
    bad = c;
    bad.gamma = -1;
    CHECK_THROWS_AS(bad.validate(), dmc::ParameterError);
    bad = c;
    bad.T_train = 0;
    CHECK_THROWS_AS(bad.validate(), dmc::ParameterError);
    bad = c;
    bad.critic_steps = 0;
    CHECK_THROWS_AS(bad.validate(), dmc::ParameterError);

    c.strategy = dmc::Strategy::wgan;
    c.epochs = 7;
    const auto back = dmc::train_config_from_json(dmc::to_json(c));
    CHECK(back.strategy == dmc::Strategy::wgan);
    CHECK(back.epochs == 7);
    CHECK_THROWS_AS(dmc::train_config_from_json({{"strategy", "diffusion"}}), dmc::ParseError);
    CHECK_THROWS_AS(dmc::train_config_from_json({{"epochs", "many"}}), dmc::ParseError);
}

TEST_CASE("lambda decays linearly") {
    dmc::TrainConfig c;
    c.epochs = 11;
    CHECK(dmc::lambda_at(c, 0) == 5.0);
    CHECK(dmc::lambda_at(c, 10) == 1.0);
    CHECK(dmc::lambda_at(c, 5) == doctest::Approx(3.0).epsilon(1e-15));
    c.epochs = 1;
    CHECK(dmc::lambda_at(c, 0) == 5.0);
}

TEST_CASE("supervised objective closed forms") {
    const auto ex = random_example(4, 1);
    const Eigen::Vector2d truth(ex.spec.bias, ex.spec.sigma);
    CHECK(dmc::supervised_objective(ex.clean, truth, ex).total == 0.0);

    auto unit = ex;
    unit.clean = Matrix::Ones(4, 21) / std::sqrt(84.0);
    const auto l = dmc::supervised_objective(Matrix::Zero(4, 21), Eigen::Vector2d::Zero(), unit);
    const double expected = unit.clean.array().square().mean() + ex.spec.bias * ex.spec.bias +
                            ex.spec.sigma * ex.spec.sigma;
    CHECK(std::abs(l.total - expected) < 1e-15);
    CHECK(std::abs(l.motion - 1.0 / 84.0) < 1e-15);
}

TEST_CASE("loss_supervised matches the objective on model outputs") {
    auto model = dmc::CalibratorModel::initialize(micro_calibrator(CalibratorMode::direct, true), 3);
    dmc::randomize_parameters(model.parameters(), 4);
    const auto batch = examples(3, 5, 10);
    double expected = 0;
    for (const auto& ex : batch) {
        const auto m = dmc::MotionSequence{20.0, ex.distorted, dmc::Skeleton::locomotion7()};
        const auto out = dmc::forward(model, ex.condition, m);
        expected += dmc::supervised_objective(out.frames, dmc::predict_distortion(model, ex.condition, m), ex).total;
    }
    CHECK(std::abs(dmc::loss_supervised(model, batch).total - expected / 3) < 1e-12);
    const auto no_aux = dmc::CalibratorModel::initialize(micro_calibrator(), 3);
    CHECK_THROWS_AS(dmc::loss_supervised(no_aux, batch), dmc::UsageError);
}

TEST_CASE("generator objective term isolation and hand computation") {
    dmc::ConditionVector e{Vector::Zero(16)};
    Matrix w(2, 21);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = 0.01 * static_cast<double>(i % 7) - 0.02;
    const LinearCritic critic{w};
    Matrix refined(2, 21), clean(2, 21);
    for (Index i = 0; i < refined.size(); ++i) {
        refined.data()[i] = 0.1 * static_cast<double>(i % 5);
        clean.data()[i] = 0.05 * static_cast<double>(i % 3);
    }
    const auto l0 = dmc::generator_objective(critic, e, refined, clean, 0.0);
    CHECK(l0.total == -critic.score(e, refined));
    const auto oracle_gen = dmc::generator_objective(critic, e, clean, clean, 5.0);
    CHECK(oracle_gen.total == -critic.score(e, clean));

    double dot = 0, sq = 0;
    for (Index r = 0; r < 2; ++r)
        for (Index c = 0; c < 21; ++c) {
            dot += w(r, c) * refined(r, c);
            sq += (refined(r, c) - clean(r, c)) * (refined(r, c) - clean(r, c));
        }
    const auto l = dmc::generator_objective(critic, e, refined, clean, 2.5);
    CHECK(std::abs(l.total - (-dot + 2.5 * sq / 42.0)) < 1e-9);
}

TEST_CASE("loss_generator with lambda = 0 and with a perfect generator") {
    auto model = dmc::CalibratorModel::initialize(micro_calibrator(), 3);
    auto disc = dmc::DiscriminatorModel::initialize(micro_discriminator(), 4);
    dmc::randomize_parameters(disc.parameters(), 5);
    auto batch = examples(3, 4, 20);
    // A fresh direct model is the identity, so m_r = m_d; set m_d = m_gt.
    for (auto& ex : batch) ex.distorted = ex.clean;
    const auto l = dmc::loss_generator(model, disc, batch, 5.0);
    double mean_d = 0;
    for (const auto& ex : batch) {
        mean_d += dmc::discriminate(disc, ex.condition, {20.0, ex.clean, dmc::Skeleton::locomotion7()}) / 3;
    }
    CHECK(std::abs(l.total + mean_d) < 1e-12);
    CHECK(l.reconstruction == 0.0);

    auto shifted = examples(3, 4, 20);
    const auto l0 = dmc::loss_generator(model, disc, shifted, 0.0);
    CHECK(std::abs(l0.total - l0.adversarial) < 1e-15);
}

TEST_CASE("gradient penalty closed forms") {
    const auto batch = critic_batch(4, 3, 7);
    const std::vector<double> alphas{0.1, 0.5, 0.9, 0.3};
    Matrix w = Matrix::Random(3, 21);
    w /= w.norm();
    const auto lin = dmc::discriminator_objective(LinearCritic{w}, std::span(batch), alphas, 10.0);
    CHECK(std::abs(lin.penalty) < 1e-12);

    const auto flat = dmc::discriminator_objective(ConstantCritic{}, std::span(batch), alphas, 10.0);
    CHECK(std::abs(flat.penalty - 1.0) < 1e-12);
    CHECK(std::abs(flat.total - 10.0) < 1e-12);
}

TEST_CASE("penalty point and model critic penalty") {
    const auto batch = critic_batch(3, 4, 9);
    const Matrix p = dmc::penalty_point(batch[0], 0.25);
    CHECK((p - (0.25 * batch[0].real + 0.75 * batch[0].fake)).cwiseAbs().maxCoeff() < 1e-15);

    auto disc = dmc::DiscriminatorModel::initialize(micro_discriminator(), 3);
    dmc::randomize_parameters(disc.parameters(), 4);
    dmc::Rng rng(1);
    for (int i = 0; i < 5; ++i) {
        const auto l = dmc::loss_discriminator(disc, batch, 10.0, rng);
        CHECK(l.penalty >= 0.0);
        CHECK(std::isfinite(l.total));
    }
    const std::vector<double> alphas{0.2, 0.4, 0.6};
    const auto fixed = dmc::loss_discriminator(disc, batch, 10.0, alphas);
    const auto generic = dmc::discriminator_objective(dmc::ModelCritic{disc}, std::span(batch), alphas, 10.0);
    CHECK(std::abs(fixed.total - generic.total) < 1e-12);
    CHECK(std::abs(fixed.penalty - generic.penalty) < 1e-12);
}

TEST_CASE("interpolation endpoints and constant step") {
    const auto ex = random_example(6, 3);
    CHECK(dmc::interpolate_mt(ex.clean, ex.distorted, 0, 10) == ex.clean);
    CHECK(dmc::interpolate_mt(ex.clean, ex.distorted, 10, 10) == ex.distorted);
    const Matrix step = (ex.distorted - ex.clean) / 10.0;
    for (int t = 1; t <= 10; ++t) {
        const Matrix d = dmc::interpolate_mt(ex.clean, ex.distorted, t, 10) -
                         dmc::interpolate_mt(ex.clean, ex.distorted, t - 1, 10);
        CHECK((d - step).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK_THROWS_AS(dmc::interpolate_mt(ex.clean, ex.distorted, 11, 10), dmc::UsageError);
    CHECK_THROWS_AS(dmc::interpolate_mt(ex.clean, ex.distorted, -1, 10), dmc::UsageError);
    CHECK_THROWS_AS(dmc::interpolate_mt(ex.clean, Matrix(ex.distorted.topRows(3)), 1, 10), dmc::ShapeError);
}

TEST_CASE("denoise loss: zero target with a fresh head, and consistency with forward") {
    auto model = dmc::CalibratorModel::initialize(micro_calibrator(CalibratorMode::residual), 1);
    auto same = examples(3, 5, 30);
    for (auto& ex : same) ex.distorted = ex.clean;
    dmc::Rng rng(2);
    CHECK(dmc::loss_denoise(model, same, 10, rng).total == 0.0);

    dmc::randomize_parameters(model.parameters(), 3);
    const auto batch = examples(3, 5, 40);
    const std::vector<int> ts{1, 4, 10};
    double expected = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& ex = batch[i];
        const Matrix m_t = dmc::interpolate_mt(ex.clean, ex.distorted, ts[i], 10);
        const auto out = dmc::forward(model, ex.condition, {20.0, m_t, dmc::Skeleton::locomotion7()}, ts[i]);
        expected += dmc::mse(out.frames, (ex.distorted - ex.clean) / 10.0) / 3.0;
    }
    CHECK(std::abs(dmc::loss_denoise(model, batch, 10, ts).total - expected) < 1e-15);
    CHECK_THROWS_AS(dmc::loss_denoise(dmc::CalibratorModel::initialize(micro_calibrator(), 1), batch, 10, ts),
                    dmc::UsageError);
}

TEST_CASE("refine_iterative with the oracle residual telescopes") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto ex = random_example(12, seed);
        const int T = 5 + static_cast<int>(seed) * 7;
        const auto fn = oracle::oracle_residual_model(ex.clean, ex.distorted, T);
        CHECK((dmc::refine_iterative(fn, ex.distorted, T) - ex.clean).cwiseAbs().maxCoeff() < 1e-9);
        const int half = T / 2;
        CHECK((dmc::refine_iterative(fn, ex.distorted, half) -
               dmc::interpolate_mt(ex.clean, ex.distorted, T - half, T))
                  .cwiseAbs()
                  .maxCoeff() < 1e-9);
    }
    const auto ex = random_example(4, 1);
    const auto zero = oracle::oracle_residual_model(ex.clean, ex.clean, 10);
    CHECK(zero(ex.distorted, 3).isZero(0));
    CHECK(dmc::refine_iterative(zero, ex.distorted, 10) == ex.distorted);
    CHECK_THROWS_AS(dmc::refine_iterative(zero, ex.distorted, 0), dmc::UsageError);
}

TEST_CASE("refine_iterative visits timesteps from T_hat down to 1") {
    std::vector<int> seen;
    const dmc::ResidualFn probe = [&seen](const Matrix& m, int t) {
        seen.push_back(t);
        return Matrix::Zero(m.rows(), m.cols()).eval();
    };
    dmc::refine_iterative(probe, Matrix::Ones(2, 3), 4);
    CHECK(seen == std::vector<int>{4, 3, 2, 1});
}

TEST_CASE("model-driven refinement") {
    const auto rec = clean_record(3, 1.0);
    auto residual = dmc::CalibratorModel::initialize(micro_calibrator(CalibratorMode::residual), 1);
    auto m = rec.motion;
    m.frames.conservativeResize(16, Eigen::NoChange);
    for (int t_hat : {1, 10, 50, 100}) {
        CHECK(dmc::refine_iterative(residual, *rec.condition, m, t_hat).frames == m.frames);
    }
    dmc::randomize_parameters(residual.parameters(), 2, 0.05);
    const auto r = dmc::refine(residual, *rec.condition, m, 3);
    CHECK(r.frame_count() == m.frame_count());
    CHECK_THROWS_AS(dmc::refine_single(residual, *rec.condition, m), dmc::UsageError);

    auto direct = dmc::CalibratorModel::initialize(micro_calibrator(), 1);
    dmc::randomize_parameters(direct.parameters(), 2, 0.05);
    const auto a = dmc::refine_single(direct, *rec.condition, m);
    const auto b = dmc::refine_single(direct, *rec.condition, m);
    CHECK(a.frames == b.frames);
    CHECK(dmc::validate(a).empty());
    CHECK(dmc::refine(direct, *rec.condition, m, 50).frames == a.frames);
    CHECK_THROWS_AS(dmc::refine_iterative(direct, *rec.condition, m, 3), dmc::UsageError);
}

TEST_CASE("Adam minimises a quadratic") {
    dmc::Adam opt(3, {0.05});
    Vector x(3);
    x << 1.0, -2.0, 0.5;
    for (int i = 0; i < 2000; ++i) {
        const Vector g = 2.0 * x;
        opt.step(x, g);
    }
    CHECK(x.norm() < 1e-3);
    CHECK(opt.steps() == 2000);
}

TEST_CASE("configure_for picks the mode and head") {
    dmc::CalibratorConfig base;
    CHECK(dmc::configure_for(dmc::Strategy::denoise, base).mode == CalibratorMode::residual);
    CHECK(dmc::configure_for(dmc::Strategy::wgan, base).mode == CalibratorMode::direct);
    const auto sup = dmc::configure_for(dmc::Strategy::supervised, base);
    CHECK(sup.mode == CalibratorMode::direct);
    CHECK(sup.aux_head);
}

TEST_CASE("training is deterministic for every strategy") {
    const auto corpus = short_corpus(8, 3);
    for (auto s : {dmc::Strategy::supervised, dmc::Strategy::wgan, dmc::Strategy::denoise}) {
        const auto cfg = micro_train(s);
        const auto a = dmc::train(corpus, cfg, micro_calibrator(), micro_discriminator());
        const auto b = dmc::train(corpus, cfg, micro_calibrator(), micro_discriminator());
        CHECK(a.model.parameters().values() == b.model.parameters().values());
        REQUIRE(a.report.epochs.size() == 2);
        for (std::size_t e = 0; e < 2; ++e) CHECK(a.report.epochs[e].terms == b.report.epochs[e].terms);
        CHECK(a.report.epochs[0].lambda == 5.0);
        CHECK(a.report.epochs[1].lambda == 1.0);
        CHECK(a.report.epochs[0].steps == 2);
        CHECK(a.discriminator.has_value() == (s == dmc::Strategy::wgan));
        for (const auto& [name, v] : a.report.epochs[1].terms) CHECK(std::isfinite(v));

        auto other = cfg;
        other.seed = 6;
        const auto c = dmc::train(corpus, other, micro_calibrator(), micro_discriminator());
        CHECK(c.model.parameters().values() != a.model.parameters().values());
    }
}

TEST_CASE("report logs every loss term per epoch") {
    const auto corpus = short_corpus(8, 3);
    const auto sup = dmc::train(corpus, micro_train(dmc::Strategy::supervised), micro_calibrator());
    for (const char* k : {"total", "motion", "bias", "sigma"}) CHECK(sup.report.epochs[0].terms.count(k) == 1);
    const auto gan = dmc::train(corpus, micro_train(dmc::Strategy::wgan), micro_calibrator(), micro_discriminator());
    for (const char* k : {"generator", "adversarial", "reconstruction", "critic", "critic_penalty"}) {
        CHECK(gan.report.epochs[0].terms.count(k) == 1);
    }
    CHECK(gan.report.config.contains("discriminator"));
    const auto summary = dmc::summary_json(gan.report);
    CHECK(summary.at("seed").get<std::uint64_t>() == 5);
    CHECK(dmc::to_json(gan.report.epochs[1]).at("epoch").get<int>() == 1);
}

TEST_CASE("observer sees every step") {
    const auto corpus = short_corpus(8, 3);
    std::vector<int> steps;
    dmc::train(corpus, micro_train(dmc::Strategy::denoise), micro_calibrator(), {}, {},
               [&steps](const dmc::StepInfo& s) {
                   steps.push_back(s.step);
                   CHECK(s.model != nullptr);
               });
    CHECK(steps == std::vector<int>{1, 2, 3, 4});
}

TEST_CASE("training rejects bad inputs and diverging losses") {
    const auto corpus = short_corpus(4, 3);
    CHECK_THROWS_AS(dmc::train({}, micro_train(dmc::Strategy::denoise), micro_calibrator()), dmc::UsageError);
    CHECK_THROWS_AS(dmc::train(corpus, micro_train(dmc::Strategy::denoise), micro_calibrator(), {}, {false, false}),
                    dmc::UsageError);
    auto huge = corpus;
    for (auto& r : huge) r.motion.frames.array() *= 1e200;
    CHECK_THROWS_AS(dmc::train(huge, micro_train(dmc::Strategy::supervised), micro_calibrator()),
                    dmc::DivergenceError);
}

TEST_CASE("denoise training on bias-only distortions cuts the probe loss by more than 5x") {
    const auto corpus = dmc::generate_corpus(200, {}, 20.0, 17);
    auto cfg = micro_train(dmc::Strategy::denoise);
    cfg.epochs = 40;
    cfg.batch_size = 8;
    cfg.learning_rate = 3e-3;
    cfg.T_train = 10;
    auto cal = micro_calibrator();
    cal.max_frames = 200;

    // Fixed probe: 16 held-out clips, fixed distortions and timesteps.
    const auto probe_clips = dmc::generate_corpus(16, {}, 20.0, 18);
    std::vector<dmc::TrainingExample> probe;
    std::vector<int> ts;
    const dmc::DistortionToggles bias_only{true, false};
    dmc::Rng rng(4);
    for (const auto& r : probe_clips) {
        probe.push_back(dmc::make_example(r, dmc::sample_distortion(rng, bias_only)));
        ts.push_back(1 + static_cast<int>(probe.size()) % cfg.T_train);
    }

    const auto trained = dmc::train(corpus, cfg, cal, {}, bias_only);
    auto fresh_cfg = trained.model.config();
    const auto fresh = dmc::CalibratorModel::initialize(fresh_cfg, 1);
    const double before = dmc::loss_denoise(fresh, probe, cfg.T_train, ts).total;
    const double after = dmc::loss_denoise(trained.model, probe, cfg.T_train, ts).total;
    INFO("before " << before << " after " << after);
    CHECK(after < 0.2 * before);
}
