#include "eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "util/error.hpp"
#include "util/parallel.hpp"
#include "util/rng.hpp"

namespace acwm::eval {

namespace {

// AUROC for one class from (score, label) rows; NaN when single-class.
double class_auroc(std::vector<std::pair<float, uint8_t>>& rows) {
    int64_t n_pos = 0;
    for (const auto& [s, y] : rows) n_pos += y;
    const int64_t n = static_cast<int64_t>(rows.size());
    const int64_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();

    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    // Midranks over tie groups; ranks are 1-based, so a tie group spanning
    // [i, j) gets (i + j + 1) / 2.
    double pos_rank_sum = 0.0;
    int64_t i = 0;
    while (i < n) {
        int64_t j = i;
        int64_t group_pos = 0;
        while (j < n && rows[j].first == rows[i].first) {
            group_pos += rows[j].second;
            ++j;
        }
        const double midrank = 0.5 * static_cast<double>(i + j + 1);
        pos_rank_sum += midrank * static_cast<double>(group_pos);
        i = j;
    }
    const double numer =
        pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return numer / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

AurocResult auroc_over_rows(const float* scores, const float* y, int64_t n, int64_t C) {
    AurocResult res;
    res.per_class.assign(static_cast<size_t>(C), std::numeric_limits<double>::quiet_NaN());
    double sum = 0.0;
    for (int64_t c = 0; c < C; ++c) {
        std::vector<std::pair<float, uint8_t>> rows;
        rows.reserve(static_cast<size_t>(n));
        for (int64_t r = 0; r < n; ++r) {
            const float yv = y[r * C + c];
            ACWM_CHECK(yv == 0.0f || yv == 1.0f, invalid_argument, "targets must be binary");
            const float sv = scores[r * C + c];
            ACWM_CHECK(std::isfinite(sv), numeric, "scores must be finite");
            rows.emplace_back(sv, static_cast<uint8_t>(yv));
        }
        const double a = class_auroc(rows);
        res.per_class[static_cast<size_t>(c)] = a;
        if (!std::isnan(a)) {
            sum += a;
            res.n_included++;
        }
    }
    ACWM_CHECK(res.n_included > 0, invalid_argument,
               "macro-AUROC undefined: no class has both positives and negatives");
    res.macro = sum / static_cast<double>(res.n_included);
    return res;
}

}  // namespace

AurocResult macro_auroc(const Tensor& scores, const Tensor& y) {
    ACWM_CHECK(scores.shape().size() == 2 && scores.shape() == y.shape(), invalid_argument,
               "macro_auroc expects matching [n, C] scores and targets");
    ACWM_CHECK(scores.shape()[0] >= 1, invalid_argument, "macro_auroc needs at least one row");
    return auroc_over_rows(scores.data(), y.data(), scores.shape()[0], scores.shape()[1]);
}

BootstrapResult bootstrap_ci(const Tensor& scores, const Tensor& y,
                             const std::vector<int64_t>& patient_ids, int64_t n_bootstrap,
                             uint64_t seed, double level) {
    ACWM_CHECK(n_bootstrap >= 1, invalid_argument, "need at least one bootstrap replicate");
    ACWM_CHECK(level > 0.0 && level < 1.0, invalid_argument, "level must be in (0, 1)");
    const int64_t n = scores.shape()[0];
    const int64_t C = scores.shape()[1];
    ACWM_CHECK(static_cast<int64_t>(patient_ids.size()) == n, invalid_argument,
               "one patient id per row required");
    const double point = macro_auroc(scores, y).macro;  // also validates inputs

    // Group row indices per patient, patients ordered by id.
    std::vector<int64_t> uniq(patient_ids);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    std::vector<std::vector<int64_t>> rows_of(uniq.size());
    for (int64_t r = 0; r < n; ++r) {
        const auto it = std::lower_bound(uniq.begin(), uniq.end(), patient_ids[r]);
        rows_of[static_cast<size_t>(it - uniq.begin())].push_back(r);
    }
    const int64_t P = static_cast<int64_t>(uniq.size());

    std::vector<double> metric(static_cast<size_t>(n_bootstrap),
                               std::numeric_limits<double>::quiet_NaN());
    parallel_for(n_bootstrap, [&](int64_t b) {
        Rng rng(derive_seed(seed, "bootstrap", static_cast<uint64_t>(b)));
        std::vector<float> rs, ry;
        for (int64_t k = 0; k < P; ++k) {
            const auto& rows = rows_of[rng.uniform_int(static_cast<uint64_t>(P))];
            for (int64_t r : rows) {
                for (int64_t c = 0; c < C; ++c) {
                    rs.push_back(scores.data()[r * C + c]);
                    ry.push_back(y.data()[r * C + c]);
                }
            }
        }
        try {
            metric[static_cast<size_t>(b)] =
                auroc_over_rows(rs.data(), ry.data(), static_cast<int64_t>(rs.size()) / C, C)
                    .macro;
        } catch (const Error&) {
            // degenerate replicate; counted below
        }
    });

    std::vector<double> kept;
    kept.reserve(metric.size());
    for (double m : metric)
        if (!std::isnan(m)) kept.push_back(m);
    BootstrapResult out;
    out.n_skipped = n_bootstrap - static_cast<int64_t>(kept.size());
    ACWM_CHECK(out.n_skipped * 2 <= n_bootstrap, state,
               "bootstrap degenerate: more than half the replicates lack a scorable class");
    std::sort(kept.begin(), kept.end());

    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(kept.size() - 1);
        const size_t lo = static_cast<size_t>(std::floor(pos));
        const size_t hi = std::min(lo + 1, kept.size() - 1);
        const double frac = pos - std::floor(pos);
        return kept[lo] * (1.0 - frac) + kept[hi] * frac;
    };
    const double alpha = 1.0 - level;
    out.low = std::min(quantile(alpha / 2.0), point);
    out.high = std::max(quantile(1.0 - alpha / 2.0), point);
    return out;
}

}  // namespace acwm::eval
