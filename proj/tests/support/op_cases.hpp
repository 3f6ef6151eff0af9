#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gradcheck.hpp"

namespace lhdff::testing {

struct OpCase {
  std::string name;
  std::function<GradCheckResult()> run;
};

inline constexpr double kOpTolerance = 1e-4;
inline constexpr double kModelTolerance = 1e-3;

// One finite-difference check per differentiable op.
std::vector<OpCase> op_gradient_cases();

// Finite-difference check of the fused loss of a reduced-width model with
// respect to sampled entries of every trainable parameter.
GradCheckResult model_gradcheck(std::uint64_t seed, std::size_t entries_per_param);

}  // namespace lhdff::testing
