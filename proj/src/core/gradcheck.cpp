#include "core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "util/error.hpp"
#include "util/rng.hpp"

namespace acwm::core {

GradCheckReport grad_check(const std::function<Tensor()>& f, ParamSet& params, double eps,
                           double tol, int64_t max_coords_per_param, uint64_t seed) {
    ACWM_CHECK(eps > 0.0, invalid_argument, "grad_check: eps must be positive");
    ACWM_CHECK(tol > 0.0, invalid_argument, "grad_check: tol must be positive");

    // Snapshot covers buffers (e.g. batchnorm running stats) too, so forward
    // passes that mutate state start from identical conditions.
    const std::vector<float> snap = params.flatten_values();
    std::vector<size_t> offsets(params.size(), 0);
    {
        size_t off = 0;
        for (size_t i = 0; i < params.size(); ++i) {
            offsets[i] = off;
            off += params.entries()[i].tensor.values().size();
        }
    }
    auto restore = [&] { params.unflatten_values(snap); };
    auto drop_grads = [&] {
        for (auto& e : params.entries()) e.tensor.drop_grad();
    };

    auto eval = [&]() -> float {
        NoGradGuard ng;
        Tensor y = f();
        ACWM_CHECK(y.defined() && y.numel() == 1, invalid_argument,
                   "grad_check: f must return a scalar");
        return y.values()[0];
    };

    restore();
    const float y0 = eval();
    restore();
    const float y1 = eval();
    ACWM_CHECK(std::memcmp(&y0, &y1, sizeof(float)) == 0, numeric,
               "grad_check: f is not deterministic (two forward passes disagree)");

    // Analytic pass. A constant f records no graph; its gradient is zero.
    restore();
    drop_grads();
    Tensor y = f();
    ACWM_CHECK(y.defined() && y.numel() == 1, invalid_argument,
               "grad_check: f must return a scalar");
    if (y.requires_grad()) backward(y);
    struct Slot {
        size_t entry;
        std::vector<int64_t> coords;
        std::vector<double> analytic;
    };
    std::vector<Slot> slots;
    auto& entries = params.entries();
    for (size_t i = 0; i < entries.size(); ++i) {
        if (!entries[i].trainable) continue;
        const int64_t n = entries[i].tensor.numel();
        Slot slot;
        slot.entry = i;
        if (max_coords_per_param > 0 && n > max_coords_per_param) {
            Rng rng(derive_seed(seed, "gradcheck", static_cast<uint64_t>(i)));
            std::vector<int64_t> all(static_cast<size_t>(n));
            std::iota(all.begin(), all.end(), 0);
            rng.shuffle(all);
            slot.coords.assign(all.begin(), all.begin() + max_coords_per_param);
            std::sort(slot.coords.begin(), slot.coords.end());
        } else {
            slot.coords.resize(static_cast<size_t>(n));
            std::iota(slot.coords.begin(), slot.coords.end(), 0);
        }
        const std::vector<float>* g = entries[i].tensor.grad_if_present();
        for (int64_t c : slot.coords)
            slot.analytic.push_back(g ? static_cast<double>((*g)[static_cast<size_t>(c)]) : 0.0);
        slots.push_back(std::move(slot));
    }

    GradCheckReport report;
    double g_inf = 0.0;
    std::vector<std::vector<double>> fd_all;
    for (const auto& slot : slots) {
        std::vector<double> fd;
        fd.reserve(slot.coords.size());
        for (int64_t c : slot.coords) {
            const float base = snap[offsets[slot.entry] + static_cast<size_t>(c)];
            restore();
            entries[slot.entry].tensor.values()[static_cast<size_t>(c)] =
                base + static_cast<float>(eps);
            const double yp = eval();
            restore();
            entries[slot.entry].tensor.values()[static_cast<size_t>(c)] =
                base - static_cast<float>(eps);
            const double ym = eval();
            fd.push_back((yp - ym) / (2.0 * eps));
        }
        for (size_t j = 0; j < fd.size(); ++j) {
            g_inf = std::max(g_inf, std::abs(slot.analytic[j]));
            g_inf = std::max(g_inf, std::abs(fd[j]));
        }
        fd_all.push_back(std::move(fd));
    }

    const double denom = std::max(g_inf, 1e-8);
    for (size_t s = 0; s < slots.size(); ++s) {
        for (size_t j = 0; j < fd_all[s].size(); ++j) {
            const double rel = std::abs(slots[s].analytic[j] - fd_all[s][j]) / denom;
            ++report.coords_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = entries[slots[s].entry].name;
            }
        }
    }
    report.pass = report.max_rel_err <= tol;

    restore();
    drop_grads();
    return report;
}

}  // namespace acwm::core
