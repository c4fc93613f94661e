// Finite-difference verification of reverse-mode gradients.
#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "core/params.hpp"
#include "core/tensor.hpp"

namespace acwm::core {

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
    std::string worst_param;
    int64_t coords_checked = 0;
};

// Compares the analytic gradient of the scalar function `f` (which reads the
// tensors in `params`) against central finite differences
// (f(p+eps) - f(p-eps)) / (2 eps), coordinate by coordinate.
//
// Errors are normalized by the largest gradient magnitude across all checked
// coordinates: rel_i = |g_i - fd_i| / max(||g||_inf, ||fd||_inf, 1e-8). This
// keeps the metric meaningful at 32-bit precision where per-coordinate
// normalization blows up on near-zero entries.
//
// Determinism is probed first: two forward passes from identical state must
// agree bitwise, otherwise a numeric error is raised. All parameter and buffer
// values are restored on exit; gradients are dropped.
//
// max_coords_per_param = 0 checks every coordinate; a positive value checks a
// seeded random sample of that many distinct coordinates per parameter.
GradCheckReport grad_check(const std::function<Tensor()>& f, ParamSet& params, double eps = 1e-2,
                           double tol = 1e-3, int64_t max_coords_per_param = 0,
                           uint64_t seed = 0x9e3779b97f4a7c15ULL);

}  // namespace acwm::core
