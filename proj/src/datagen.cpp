#include "dmc/datagen.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "dmc/errors.hpp"
#include "dmc/rng.hpp"

namespace dmc {

namespace {

constexpr double kPi = std::numbers::pi;

// Fraction of the swing spent lifting (and, mirrored, landing) before the
// foot starts travelling horizontally.
constexpr double kLiftMargin = 0.3;

double smoothstep5(double u) {
    u = std::clamp(u, 0.0, 1.0);
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

double normalise(double x, double lo, double hi) {
    return std::clamp(2.0 * (x - lo) / (hi - lo) - 1.0, -1.0, 1.0);
}

struct SeedState {
    double phase;
    Eigen::Vector2d origin;
};

SeedState seed_state(std::uint64_t seed) {
    Rng rng(mix64(seed));
    SeedState s{};
    s.phase = uniform(rng, 0.0, 1.0);
    s.origin = {uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)};
    return s;
}

Eigen::Vector2d forward_dir(double heading) { return {std::sin(heading), std::cos(heading)}; }
Eigen::Vector2d left_dir(double heading) { return {std::cos(heading), -std::sin(heading)}; }

double side_sign(int foot) { return foot == 0 ? 1.0 : -1.0; }

double cycle_frequency(const GaitParams& p) { return 0.5 * p.step_frequency; }

double phase_offset(const GaitParams& p, int foot) { return seed_state(p.seed).phase + 0.5 * foot; }

// Ground position of the foot during its k-th stance: the hip anchor at mid-stance.
Eigen::Vector2d plant_position(const GaitParams& p, int foot, double k) {
    const double fc = cycle_frequency(p);
    const double t_mid = (k + 0.5 * p.stance_ratio - phase_offset(p, foot)) / fc;
    const double heading = p.heading + p.turn_rate * t_mid;
    return pelvis_track(p, t_mid) + side_sign(foot) * kLateralFootOffset * left_dir(heading);
}

Eigen::Vector3d foot_position(const GaitParams& p, int foot, double t) {
    const double u = cycle_frequency(p) * t + phase_offset(p, foot);
    const double k = std::floor(u);
    const double frac = u - k;
    if (frac < p.stance_ratio) {
        const auto g = plant_position(p, foot, k);
        return {g.x(), 0.0, g.y()};
    }
    const double s = (frac - p.stance_ratio) / (1.0 - p.stance_ratio);
    const auto from = plant_position(p, foot, k);
    const auto to = plant_position(p, foot, k + 1.0);
    const double q = smoothstep5((s - kLiftMargin) / (1.0 - 2.0 * kLiftMargin));
    const Eigen::Vector2d g = from + q * (to - from);
    return {g.x(), p.step_height * std::sin(kPi * s), g.y()};
}

std::string describe(const GaitParams& p) {
    std::ostringstream os;
    os.precision(2);
    os << std::fixed;
    if (p.speed < 0.05) {
        os << "step in place";
    } else {
        os << "walk at " << p.speed << " m/s";
    }
    if (p.turn_rate > 0.05) {
        os << " turning right";
    } else if (p.turn_rate < -0.05) {
        os << " turning left";
    }
    os << ", " << p.step_frequency << " steps/s, feet lifted " << p.step_height << " m";
    return os.str();
}

}  // namespace

void GaitParams::validate() const {
    auto finite = [](double x) { return std::isfinite(x); };
    if (!finite(speed) || speed < 0.0) throw ParameterError("gait.speed must be >= 0");
    if (!finite(heading)) throw ParameterError("gait.heading must be finite");
    if (!finite(turn_rate)) throw ParameterError("gait.turn_rate must be finite");
    if (!finite(step_frequency) || step_frequency <= 0.0) throw ParameterError("gait.step_frequency must be > 0");
    if (!finite(step_height) || step_height < 0.0) throw ParameterError("gait.step_height must be >= 0");
    if (!finite(stance_ratio) || stance_ratio <= 0.0 || stance_ratio >= 1.0) {
        throw ParameterError("gait.stance_ratio must lie in (0, 1)");
    }
    if (!finite(duration) || duration < 1.0) throw ParameterError("gait.duration must be >= 1 s");
}

GaitParams ParamDistribution::sample(std::uint64_t record_seed) const {
    Rng rng(record_seed);
    auto draw = [&rng](const Range& r) { return r.first == r.second ? r.first : uniform(rng, r.first, r.second); };
    GaitParams p;
    p.speed = draw(speed);
    p.heading = draw(heading);
    p.turn_rate = draw(turn_rate);
    p.step_frequency = draw(step_frequency);
    p.step_height = draw(step_height);
    p.stance_ratio = draw(stance_ratio);
    p.duration = draw(duration);
    p.seed = mix64(record_seed ^ 0x5bd1e995ULL);
    return p;
}

nlohmann::json to_json(const GaitParams& p) {
    return {{"speed", p.speed},
            {"heading", p.heading},
            {"turn_rate", p.turn_rate},
            {"step_frequency", p.step_frequency},
            {"step_height", p.step_height},
            {"stance_ratio", p.stance_ratio},
            {"duration", p.duration},
            {"seed", p.seed}};
}

nlohmann::json to_json(const ParamDistribution& d) {
    auto r = [](const ParamDistribution::Range& x) { return nlohmann::json::array({x.first, x.second}); };
    return {{"speed", r(d.speed)},
            {"heading", r(d.heading)},
            {"turn_rate", r(d.turn_rate)},
            {"step_frequency", r(d.step_frequency)},
            {"step_height", r(d.step_height)},
            {"stance_ratio", r(d.stance_ratio)},
            {"duration", r(d.duration)}};
}

ParamDistribution param_distribution_from_json(const nlohmann::json& doc) {
    ParamDistribution d;
    if (doc.is_null()) return d;
    if (!doc.is_object()) throw ParseError("param_distribution: expected an object");
    auto read = [&doc](const char* key, ParamDistribution::Range& r) {
        if (!doc.contains(key)) return;
        const auto& v = doc.at(key);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
            throw ParseError(std::string("param_distribution.") + key + ": expected [min, max]");
        }
        r = {v[0].get<double>(), v[1].get<double>()};
        if (r.first > r.second) throw ParseError(std::string("param_distribution.") + key + ": min > max");
    };
    read("speed", d.speed);
    read("heading", d.heading);
    read("turn_rate", d.turn_rate);
    read("step_frequency", d.step_frequency);
    read("step_height", d.step_height);
    read("stance_ratio", d.stance_ratio);
    read("duration", d.duration);
    return d;
}

ConditionVector encode_condition(const GaitParams& p) {
    Vector c = Vector::Zero(kConditionDim);
    c(0) = normalise(p.speed, 0.0, 2.0);
    c(1) = std::cos(p.heading);
    c(2) = std::sin(p.heading);
    c(3) = normalise(p.turn_rate, -0.5, 0.5);
    c(4) = normalise(p.step_frequency, 1.0, 3.0);
    c(5) = normalise(p.step_height, 0.0, 0.2);
    c(6) = normalise(p.stance_ratio, 0.0, 1.0);
    c(7) = normalise(p.duration, 1.0, 10.0);
    return {c};
}

Index frame_count_for(double duration, double fps) { return static_cast<Index>(std::llround(duration * fps)) + 1; }

Eigen::Vector2d pelvis_track(const GaitParams& p, double t) {
    const auto origin = seed_state(p.seed).origin;
    const double h0 = p.heading;
    if (std::abs(p.turn_rate) < 1e-9) return origin + p.speed * t * forward_dir(h0);
    const double h = h0 + p.turn_rate * t;
    // Integral of speed * (sin h(s), cos h(s)) ds.
    return origin + (p.speed / p.turn_rate) * Eigen::Vector2d(std::cos(h0) - std::cos(h), std::sin(h) - std::sin(h0));
}

double foot_phase(const GaitParams& p, int foot, double t) {
    const double u = cycle_frequency(p) * t + phase_offset(p, foot);
    return u - std::floor(u);
}

MotionRecord generate_motion(const GaitParams& params, double fps) {
    params.validate();
    if (!(fps >= 10.0 && fps <= 60.0)) throw ParameterError("fps must lie in [10, 60]");

    const auto skeleton = Skeleton::locomotion7();
    const Index T = frame_count_for(params.duration, fps);
    Matrix frames(T, 3 * skeleton->joint_count());
    const double fc = cycle_frequency(params);
    const double bob = 0.1 * params.step_height;

    for (Index i = 0; i < T; ++i) {
        const double t = static_cast<double>(i) / fps;
        const double heading = params.heading + params.turn_rate * t;
        const Eigen::Vector2d fwd = forward_dir(heading);
        const Eigen::Vector2d left = left_dir(heading);
        const Eigen::Vector2d g = pelvis_track(params, t);

        const double pelvis_y = kPelvisHeight + bob * std::cos(4.0 * kPi * (fc * t + phase_offset(params, 0)));
        const Eigen::Vector3d pelvis(g.x(), pelvis_y, g.y());
        const double lean = 0.02 * params.speed;
        const Eigen::Vector3d spine = pelvis + Eigen::Vector3d(lean * fwd.x(), 0.3, lean * fwd.y());
        const Eigen::Vector3d head = pelvis + Eigen::Vector3d(2.0 * lean * fwd.x(), 0.65, 2.0 * lean * fwd.y());

        std::array<Eigen::Vector3d, 2> feet{foot_position(params, 0, t), foot_position(params, 1, t)};
        std::array<Eigen::Vector3d, 2> knees;
        for (int f = 0; f < 2; ++f) {
            const Eigen::Vector2d hip_g = g + side_sign(f) * kLateralFootOffset * left;
            const Eigen::Vector3d hip(hip_g.x(), pelvis_y - 0.05, hip_g.y());
            knees[f] = 0.5 * (hip + feet[f]) + Eigen::Vector3d(0.08 * fwd.x(), 0.0, 0.08 * fwd.y());
        }

        const std::array<Eigen::Vector3d, 7> joints{pelvis, spine, head, knees[0], knees[1], feet[0], feet[1]};
        for (Index j = 0; j < 7; ++j) frames.row(i).segment<3>(3 * j) = joints[j].transpose();
    }

    MotionRecord rec;
    rec.motion = MotionSequence{fps, std::move(frames), skeleton};
    rec.condition = encode_condition(params);
    rec.label = describe(params);
    rec.provenance = Provenance::clean;
    return rec;
}

GaitParams corpus_params(const ParamDistribution& dist, std::uint64_t seed, std::size_t index) {
    return dist.sample(derive_seed(seed, index));
}

Corpus generate_corpus(std::size_t n, const ParamDistribution& dist, double fps, std::uint64_t seed) {
    if (n < 1) throw ParameterError("corpus size must be >= 1");
    Corpus out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(generate_motion(corpus_params(dist, seed, i), fps));
    return out;
}

}  // namespace dmc
