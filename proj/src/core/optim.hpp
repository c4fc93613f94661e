// AdamW with decoupled weight decay, a one-cycle cosine learning-rate
// schedule, and global-norm gradient clipping.
#pragma once

#include <cstdint>
#include <vector>

#include "core/params.hpp"

namespace acwm::core {

struct AdamWConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.0f;
};

// Moments are kept per trainable entry, aligned with ParamSet insertion order.
class AdamW {
public:
    AdamW(ParamSet& params, AdamWConfig cfg);

    // Applies one update using the grads currently populated on the params.
    // Every trainable parameter must have a populated grad.
    void step();

    void set_lr(float lr) { cfg_.lr = lr; }
    float lr() const { return cfg_.lr; }
    int64_t step_count() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    ParamSet& params_;
    AdamWConfig cfg_;
    int64_t t_ = 0;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
    std::vector<size_t> slots_;  // indices of trainable entries at construction
};

struct OneCycleConfig {
    float max_lr = 1e-3f;
    float pct_start = 0.3f;
    float div_start = 25.0f;    // initial lr = max_lr / div_start
    float div_final = 1e4f;     // final lr = max_lr / div_final
};

// Cosine warmup to max_lr over the first round(pct_start * total) steps, then
// cosine anneal to max_lr / div_final. Continuous in step; peak hit exactly once.
float onecycle_lr_at(int64_t step, int64_t total_steps, const OneCycleConfig& cfg);

// Scales all trainable grads so the global L2 norm is at most `threshold`.
// Returns the pre-clip norm. threshold <= 0 disables clipping.
double clip_global_norm(ParamSet& params, double threshold);

}  // namespace acwm::core
