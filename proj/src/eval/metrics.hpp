// Ranking metrics: exact macro-AUROC via midranks and patient-level
// bootstrap confidence intervals.
#pragma once

#include <cstdint>
#include <vector>

#include "core/tensor.hpp"

namespace acwm::eval {

using core::Tensor;

struct AurocResult {
    double macro = 0.0;
    // NaN for classes lacking a positive or a negative; those are excluded
    // from the macro mean rather than scored 0.5.
    std::vector<double> per_class;
    int64_t n_included = 0;
};

// Per-class AUROC = P(score_pos > score_neg) + 0.5 * P(tie), computed by
// midrank statistics; agrees exactly with exhaustive pairwise comparison.
// Throws if no class has both a positive and a negative.
AurocResult macro_auroc(const Tensor& scores, const Tensor& y);

struct BootstrapResult {
    double low = 0.0;
    double high = 0.0;
    int64_t n_skipped = 0;  // degenerate replicates (no scorable class)
};

// Resamples patients with replacement (records follow their patient),
// recomputes macro-AUROC per replicate, and returns the percentile interval
// (linear interpolation between order statistics). The interval is widened,
// if necessary, to contain the full-sample point estimate. Replicate RNG
// streams are indexed by replicate number, so any execution order gives the
// same interval. Errors if more than half the replicates are degenerate.
BootstrapResult bootstrap_ci(const Tensor& scores, const Tensor& y,
                             const std::vector<int64_t>& patient_ids, int64_t n_bootstrap,
                             uint64_t seed, double level = 0.95);

}  // namespace acwm::eval
