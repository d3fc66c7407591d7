#include "dmc/distortion.hpp"

#include <cmath>

#include "dmc/errors.hpp"

namespace dmc {

namespace {

// Mirror index into [0, n): period 2(n-1), edge samples not repeated.
Index reflect(Index i, Index n) {
    if (n == 1) return 0;
    const Index period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

}  // namespace

void DistortionSpec::validate() const {
    if (!std::isfinite(bias)) throw ParameterError("distortion.bias must be finite");
    if (!std::isfinite(sigma) || sigma < 0.0) throw ParameterError("distortion.sigma must be >= 0");
}

Matrix apply_vertical_bias(const Matrix& frames, double bias) {
    Matrix out = frames;
    for (Index c = 1; c < out.cols(); c += 3) out.col(c).array() += bias;
    return out;
}

MotionSequence apply_vertical_bias(const MotionSequence& m, double bias) {
    return m.with_frames(apply_vertical_bias(m.frames, bias));
}

Vector gaussian_kernel(double sigma) {
    if (sigma <= kSmoothingIdentityCutoff) return Vector::Ones(1);
    const auto radius = static_cast<Index>(std::ceil(4.0 * sigma));
    Vector w(2 * radius + 1);
    for (Index k = -radius; k <= radius; ++k) {
        const double x = static_cast<double>(k) / sigma;
        w(k + radius) = std::exp(-0.5 * x * x);
    }
    return w / w.sum();
}

Matrix gaussian_smooth(const Matrix& frames, double sigma) {
    if (!(sigma >= 0.0)) throw ParameterError("sigma must be >= 0");
    const Vector w = gaussian_kernel(sigma);
    if (w.size() == 1) return frames;
    const Index radius = w.size() / 2;
    const Index T = frames.rows();
    Matrix out = Matrix::Zero(T, frames.cols());
    for (Index t = 0; t < T; ++t) {
        for (Index k = -radius; k <= radius; ++k) out.row(t) += w(k + radius) * frames.row(reflect(t + k, T));
    }
    return out;
}

MotionSequence gaussian_smooth(const MotionSequence& m, double sigma) {
    return m.with_frames(gaussian_smooth(m.frames, sigma));
}

DistortionSpec sample_distortion(Rng& rng, DistortionToggles toggles) {
    // Both draws always happen so toggling one family leaves the other's stream intact.
    const double b = uniform(rng, -kBiasRange, kBiasRange);
    const double s = uniform(rng, kSigmaMin, kSigmaMax);
    return {toggles.bias ? b : 0.0, toggles.smoothing ? s : 0.0};
}

MotionSequence apply_distortion(const MotionSequence& m, const DistortionSpec& spec) {
    spec.validate();
    return gaussian_smooth(apply_vertical_bias(m, spec.bias), spec.sigma);
}

Distorted distort(const MotionSequence& m_gt, Rng& rng, DistortionToggles toggles) {
    const auto spec = sample_distortion(rng, toggles);
    return {apply_distortion(m_gt, spec), spec};
}

}  // namespace dmc
