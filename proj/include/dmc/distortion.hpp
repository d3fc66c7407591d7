#pragma once

#include "dmc/motion.hpp"
#include "dmc/rng.hpp"

namespace dmc {

struct DistortionSpec {
    double bias = 0.0;   // meters along +y
    double sigma = 0.0;  // Gaussian std-dev in frames

    void validate() const;
};

/// Which corruption families are active; a disabled one is held at its
/// identity value (bias 0, sigma 0).
struct DistortionToggles {
    bool bias = true;
    bool smoothing = true;
};

inline constexpr double kBiasRange = 0.1;          // b ~ U(-0.1, 0.1)
inline constexpr double kSigmaMin = 0.1;           // sigma ~ U(0.1, 4.0)
inline constexpr double kSigmaMax = 4.0;
inline constexpr double kSmoothingIdentityCutoff = 0.05;

/// Adds b to every y coordinate.
MotionSequence apply_vertical_bias(const MotionSequence& m, double bias);
Matrix apply_vertical_bias(const Matrix& frames, double bias);

/// Normalised discrete Gaussian taps for offsets -r..r, r = ceil(4 sigma).
/// A single unit tap when sigma <= kSmoothingIdentityCutoff.
Vector gaussian_kernel(double sigma);

/// Convolves every channel along time with gaussian_kernel(sigma), mirror
/// padding at both ends (… c b | a b c … | … b a b …).
MotionSequence gaussian_smooth(const MotionSequence& m, double sigma);
Matrix gaussian_smooth(const Matrix& frames, double sigma);

/// Samples a spec honouring the toggles.
DistortionSpec sample_distortion(Rng& rng, DistortionToggles toggles = {});

/// g(m + [0, b, 0]; sigma).
MotionSequence apply_distortion(const MotionSequence& m, const DistortionSpec& spec);

struct Distorted {
    MotionSequence motion;
    DistortionSpec spec;
};

Distorted distort(const MotionSequence& m_gt, Rng& rng, DistortionToggles toggles = {});

}  // namespace dmc
