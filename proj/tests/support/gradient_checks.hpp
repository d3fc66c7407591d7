#pragma once

#include <string>
#include <vector>

#include "dmc/core/linalg.hpp"

namespace testing {

struct GradientCheck {
    std::string name;
    double relative_error = 0;  // max |analytic - fd| / max |fd|
    dmc::Index parameters = 0;
};

/// Analytic vs central-difference gradients of every training objective on
/// the micro-model (1 layer, d_model 8, T 4) with randomized weights.
GradientCheck check_denoise_gradient(std::uint64_t seed);
GradientCheck check_supervised_gradient(std::uint64_t seed);
GradientCheck check_generator_gradient(std::uint64_t seed);
GradientCheck check_discriminator_gradient(std::uint64_t seed, double gamma);

std::vector<GradientCheck> all_gradient_checks(std::uint64_t seed);

}  // namespace testing
