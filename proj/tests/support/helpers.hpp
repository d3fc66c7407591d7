#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>

#include "dmc/datagen.hpp"
#include "dmc/distortion.hpp"
#include "dmc/model.hpp"
#include "dmc/motion.hpp"
#include "dmc/training.hpp"

namespace testing {

using dmc::Index;
using dmc::Matrix;
using dmc::Vector;

inline dmc::CalibratorConfig micro_calibrator(dmc::CalibratorMode mode = dmc::CalibratorMode::direct,
                                              bool aux = false) {
    dmc::CalibratorConfig c;
    c.d_model = 8;
    c.n_layers = 1;
    c.n_heads = 2;
    c.ffn_dim = 16;
    c.max_frames = 16;
    c.mode = mode;
    c.aux_head = aux;
    return c;
}

inline dmc::DiscriminatorConfig micro_discriminator() {
    dmc::DiscriminatorConfig c;
    c.d_model = 8;
    c.n_layers = 1;
    c.n_heads = 2;
    c.ffn_dim = 16;
    c.max_frames = 16;
    return c;
}

/// T frames of N(0, scale^2) coordinates on the standard rig.
inline dmc::MotionSequence random_motion(Index T, std::uint64_t seed, double scale = 0.5) {
    dmc::Rng rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    Matrix f(T, 21);
    for (Index i = 0; i < f.size(); ++i) f.data()[i] = n(rng);
    return {20.0, f, dmc::Skeleton::locomotion7()};
}

/// Random walk that keeps crossing the contact, skate and clip thresholds:
/// heights near the ground, small horizontal steps, feet sometimes close.
inline dmc::MotionSequence random_contact_motion(Index T, std::uint64_t seed) {
    dmc::Rng rng(seed);
    std::normal_distribution<double> height(0.02, 0.05), step(0.0, 0.02), start(0.0, 0.05);
    Matrix f(T, 21);
    for (Index c = 0; c < 21; ++c) f(0, c) = c % 3 == 1 ? height(rng) : start(rng);
    for (Index t = 1; t < T; ++t) {
        for (Index c = 0; c < 21; ++c) f(t, c) = c % 3 == 1 ? height(rng) : f(t - 1, c) + step(rng);
    }
    return {20.0, f, dmc::Skeleton::locomotion7()};
}

inline dmc::ConditionVector random_condition(std::uint64_t seed) {
    dmc::Rng rng(seed);
    std::normal_distribution<double> n(0.0, 0.5);
    Vector v(dmc::kConditionDim);
    for (auto& x : v) x = n(rng);
    return {v};
}

inline dmc::TrainingExample random_example(Index T, std::uint64_t seed) {
    const auto clean = random_motion(T, seed);
    dmc::Rng rng(seed + 99);
    const auto spec = dmc::sample_distortion(rng, {});
    return {random_condition(seed + 7), clean.frames, dmc::apply_distortion(clean, spec).frames, spec};
}

inline dmc::MotionRecord clean_record(std::uint64_t seed, double duration = 2.0) {
    dmc::GaitParams p = dmc::ParamDistribution{}.sample(seed);
    p.duration = duration;
    return dmc::generate_motion(p);
}

/// Unique scratch directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("dmc_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testing
