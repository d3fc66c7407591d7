#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <utility>

#include "dmc/motion.hpp"

namespace dmc {

struct GaitParams {
    double speed = 1.0;           // m/s
    double heading = 0.0;         // rad; 0 walks along +z
    double turn_rate = 0.0;       // rad/s
    double step_frequency = 1.8;  // steps per second (both feet)
    double step_height = 0.12;    // m
    double stance_ratio = 0.6;    // fraction of each foot cycle spent planted
    double duration = 3.0;        // s
    std::uint64_t seed = 0;       // phase offset and start position

    /// Throws ParameterError on the first broken invariant.
    void validate() const;
};

/// Sampling ranges for each gait field. The defaults keep every generated
/// clip free of skating, penetration and clipping at 20 fps.
struct ParamDistribution {
    using Range = std::pair<double, double>;
    Range speed{0.3, 1.4};
    Range heading{-3.14159265358979, 3.14159265358979};
    Range turn_rate{-0.3, 0.3};
    Range step_frequency{1.6, 2.0};
    Range step_height{0.10, 0.15};
    Range stance_ratio{0.55, 0.65};
    Range duration{2.0, 3.0};

    GaitParams sample(std::uint64_t record_seed) const;
};

nlohmann::json to_json(const GaitParams& p);
nlohmann::json to_json(const ParamDistribution& d);
/// Missing keys keep their defaults; malformed ranges raise ParseError.
ParamDistribution param_distribution_from_json(const nlohmann::json& doc);

/// Normalised gait parameters, zero padded to kConditionDim:
/// [speed, cos heading, sin heading, turn_rate, step_frequency, step_height,
///  stance_ratio, duration, 0...], each mapped to [-1, 1].
ConditionVector encode_condition(const GaitParams& p);

inline constexpr double kLateralFootOffset = 0.1;  // half the foot separation
inline constexpr double kPelvisHeight = 0.9;

/// Frame count for a clip: one frame per 1/fps including both endpoints.
Index frame_count_for(double duration, double fps);

/// Pelvis ground-plane position (x, z) at time t.
Eigen::Vector2d pelvis_track(const GaitParams& p, double t);

/// Phase of a foot within its cycle at time t, in [0, 1); stance is [0, stance_ratio).
double foot_phase(const GaitParams& p, int foot, double t);

MotionRecord generate_motion(const GaitParams& params, double fps = 20.0);

Corpus generate_corpus(std::size_t n, const ParamDistribution& dist, double fps, std::uint64_t seed);

/// Parameters of record `index` in generate_corpus(…, seed).
GaitParams corpus_params(const ParamDistribution& dist, std::uint64_t seed, std::size_t index);

}  // namespace dmc
