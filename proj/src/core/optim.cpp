#include "core/optim.hpp"

#include <cmath>

#include "util/error.hpp"

namespace acwm::core {

AdamW::AdamW(ParamSet& params, AdamWConfig cfg) : params_(params), cfg_(cfg) {
    ACWM_CHECK(cfg_.lr >= 0.0f && cfg_.beta1 >= 0.0f && cfg_.beta1 < 1.0f && cfg_.beta2 >= 0.0f &&
                   cfg_.beta2 < 1.0f && cfg_.eps > 0.0f,
               invalid_argument, "AdamW: invalid hyperparameters");
    auto& entries = params_.entries();
    for (size_t i = 0; i < entries.size(); ++i) {
        if (!entries[i].trainable) continue;
        slots_.push_back(i);
        m_.emplace_back(entries[i].tensor.values().size(), 0.0f);
        v_.emplace_back(entries[i].tensor.values().size(), 0.0f);
    }
}

void AdamW::step() {
    ++t_;
    const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(t_));
    auto& entries = params_.entries();
    for (size_t s = 0; s < slots_.size(); ++s) {
        auto& e = entries[slots_[s]];
        if (!e.trainable) continue;  // frozen after construction: leave untouched
        const std::vector<float>* gp = e.tensor.grad_if_present();
        ACWM_CHECK(gp != nullptr, state, "AdamW: step on unpopulated grad for '" + e.name + "'");
        auto& theta = e.tensor.values();
        const auto& g = *gp;
        ACWM_CHECK(g.size() == theta.size(), internal, "AdamW: grad size mismatch");
        auto& m = m_[s];
        auto& v = v_[s];
        for (size_t i = 0; i < theta.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0f - cfg_.beta2) * g[i] * g[i];
            const float mhat = m[i] / bc1;
            const float vhat = v[i] / bc2;
            theta[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                   cfg_.weight_decay * theta[i]);
        }
    }
}

float onecycle_lr_at(int64_t step, int64_t total_steps, const OneCycleConfig& cfg) {
    ACWM_CHECK(total_steps > 0, invalid_argument, "onecycle_lr_at: total_steps must be positive");
    ACWM_CHECK(step >= 0 && step <= total_steps, invalid_argument,
               "onecycle_lr_at: step out of [0, total_steps]");
    const double max_lr = cfg.max_lr;
    const double lo0 = max_lr / cfg.div_start;
    const double lo1 = max_lr / cfg.div_final;
    const int64_t up = std::llround(cfg.pct_start * static_cast<double>(total_steps));
    auto cosine = [](double a, double b, double frac) {
        return a + (b - a) * (1.0 - std::cos(M_PI * frac)) / 2.0;
    };
    // Exact endpoints keep "peak reached exactly once" true under float
    // comparison regardless of libm rounding.
    if (step == up) return cfg.max_lr;
    double lr;
    if (step < up) {
        lr = cosine(lo0, max_lr, static_cast<double>(step) / static_cast<double>(up));
    } else if (step == total_steps) {
        lr = lo1;
    } else {
        double frac = static_cast<double>(step - up) / static_cast<double>(total_steps - up);
        lr = cosine(max_lr, lo1, frac);
    }
    return static_cast<float>(lr);
}

double clip_global_norm(ParamSet& params, double threshold) {
    double sq = 0.0;
    for (auto& e : params.entries()) {
        if (!e.trainable) continue;
        const std::vector<float>* gp = e.tensor.grad_if_present();
        ACWM_CHECK(gp != nullptr, state, "clip_global_norm: unpopulated grad for '" + e.name + "'");
        for (float g : *gp) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (threshold > 0.0 && norm > threshold) {
        const float s = static_cast<float>(threshold / norm);
        for (auto& e : params.entries()) {
            if (!e.trainable) continue;
            for (float& g : e.tensor.grad()) g *= s;
        }
    }
    return norm;
}

}  // namespace acwm::core
