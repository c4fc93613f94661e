#include "geometry/geometry.hpp"

#include <cmath>
#include <vector>

#include "core/kernels.hpp"
#include "util/error.hpp"
#include "util/rng.hpp"

namespace acwm::geometry {

namespace {
constexpr double kInvSqrt3 = 0.57735026918962576451;
constexpr double kSqrt2 = 1.41421356237309504880;
}  // namespace

Tensor make_slices(int64_t latent_dim, int64_t num_slices, uint64_t seed, uint64_t step) {
    ACWM_CHECK(latent_dim >= 1 && num_slices >= 1, invalid_argument,
               "slice set needs positive dimensions");
    Rng rng(derive_seed(seed, "slices", step));
    std::vector<float> u(static_cast<size_t>(num_slices * latent_dim));
    for (int64_t k = 0; k < num_slices; ++k) {
        float* row = u.data() + k * latent_dim;
        while (true) {
            double sq = 0.0;
            for (int64_t d = 0; d < latent_dim; ++d) {
                row[d] = rng.normal_f();
                sq += static_cast<double>(row[d]) * static_cast<double>(row[d]);
            }
            if (sq > 1e-18) {
                const float inv = static_cast<float>(1.0 / std::sqrt(sq));
                for (int64_t d = 0; d < latent_dim; ++d) row[d] *= inv;
                break;
            }
        }
    }
    return Tensor::from_data({num_slices, latent_dim}, std::move(u));
}

Tensor epps_pulley_mean_cols(const Tensor& projections) {
    ACWM_CHECK(projections.rank() == 2, invalid_argument,
               "epps_pulley_mean_cols expects [n, K]");
    ACWM_CHECK(projections.all_finite(), numeric, "epps_pulley on non-finite values");
    const int64_t n = projections.dim(0);
    const int64_t k_cols = projections.dim(1);
    ACWM_CHECK(n >= 1, invalid_argument, "epps_pulley needs at least one sample");

    const float* p = projections.data();
    double total = 0.0;
    for (int64_t k = 0; k < k_cols; ++k) {
        double pair_sum = static_cast<double>(n);  // diagonal terms, exp(0)
        double cf_sum = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            const double xj = p[j * k_cols + k];
            cf_sum += std::exp(-xj * xj / 4.0);
            for (int64_t i = j + 1; i < n; ++i) {
                const double d = xj - p[i * k_cols + k];
                pair_sum += 2.0 * std::exp(-d * d / 2.0);
            }
        }
        const double t = pair_sum / (static_cast<double>(n) * n) -
                         kSqrt2 / static_cast<double>(n) * cf_sum + kInvSqrt3;
        total += t;
    }
    const float value = static_cast<float>(total / static_cast<double>(k_cols));

    Tensor pt = projections;
    return core::make_op({1}, {value}, {projections}, [pt, n, k_cols](core::TensorNode& self) {
        if (!pt.requires_grad()) return;
        const float seed = self.grad[0];
        const float* p = pt.data();
        float* dp = pt.grad().data();
        const double inv_n2 = 1.0 / (static_cast<double>(n) * n);
        const double scale = static_cast<double>(seed) / static_cast<double>(k_cols);
        for (int64_t k = 0; k < k_cols; ++k) {
            for (int64_t j = 0; j < n; ++j) {
                const double xj = p[j * k_cols + k];
                double g = 0.0;
                for (int64_t i = 0; i < n; ++i) {
                    const double d = xj - p[i * k_cols + k];
                    g += -2.0 * inv_n2 * d * std::exp(-d * d / 2.0);
                }
                g += kSqrt2 / static_cast<double>(n) * (xj / 2.0) * std::exp(-xj * xj / 4.0);
                dp[j * k_cols + k] += static_cast<float>(scale * g);
            }
        }
    });
}

Tensor epps_pulley_statistic(const Tensor& x) {
    ACWM_CHECK(x.defined() && x.numel() >= 1, invalid_argument, "epps_pulley on empty input");
    ACWM_CHECK(x.rank() == 1 || (x.rank() == 2 && x.dim(1) == 1), invalid_argument,
               "epps_pulley expects a vector of projected values");
    Tensor col = x.rank() == 1 ? core::reshape(x, {x.numel(), 1}) : x;
    return epps_pulley_mean_cols(col);
}

Tensor sigreg(const Tensor& h, const Tensor& slices) {
    ACWM_CHECK(h.rank() == 2, invalid_argument, "sigreg expects latents [n, D]");
    ACWM_CHECK(slices.rank() == 2 && slices.dim(1) == h.dim(1), invalid_argument,
               "slice dimension does not match latent dimension");
    Tensor projections = core::linear(h, slices, Tensor());
    return epps_pulley_mean_cols(projections);
}

Tensor vicreg(const Tensor& ha, const Tensor& hb, const VicregWeights& w) {
    ACWM_CHECK(ha.rank() == 2 && hb.rank() == 2 && ha.shape() == hb.shape(), invalid_argument,
               "vicreg expects two [n, D] views of equal shape");
    const int64_t n = ha.dim(0);
    const int64_t dim = ha.dim(1);
    ACWM_CHECK(n >= 2, invalid_argument, "vicreg variance needs n >= 2");
    ACWM_CHECK(ha.all_finite() && hb.all_finite(), numeric, "vicreg on non-finite values");

    constexpr double kGamma = 1.0;
    constexpr double kEps = 1e-4;

    struct ViewStats {
        std::vector<double> centered;  // n*D
        std::vector<double> std_dev;   // D
        std::vector<double> cov;       // D*D
        double var_term = 0.0;
        double cov_term = 0.0;
    };
    auto analyze = [&](const float* h) {
        ViewStats s;
        s.centered.resize(static_cast<size_t>(n * dim));
        s.std_dev.resize(static_cast<size_t>(dim));
        s.cov.assign(static_cast<size_t>(dim * dim), 0.0);
        for (int64_t d = 0; d < dim; ++d) {
            double mu = 0.0;
            for (int64_t j = 0; j < n; ++j) mu += h[j * dim + d];
            mu /= static_cast<double>(n);
            double var = 0.0;
            for (int64_t j = 0; j < n; ++j) {
                const double c = h[j * dim + d] - mu;
                s.centered[static_cast<size_t>(j * dim + d)] = c;
                var += c * c;
            }
            var /= static_cast<double>(n - 1);
            s.std_dev[static_cast<size_t>(d)] = std::sqrt(var + kEps);
            s.var_term += std::max(0.0, kGamma - s.std_dev[static_cast<size_t>(d)]);
        }
        s.var_term /= static_cast<double>(dim);
        for (int64_t a = 0; a < dim; ++a)
            for (int64_t b = a + 1; b < dim; ++b) {
                double acc = 0.0;
                for (int64_t j = 0; j < n; ++j)
                    acc += s.centered[static_cast<size_t>(j * dim + a)] *
                           s.centered[static_cast<size_t>(j * dim + b)];
                acc /= static_cast<double>(n - 1);
                s.cov[static_cast<size_t>(a * dim + b)] = acc;
                s.cov[static_cast<size_t>(b * dim + a)] = acc;
                s.cov_term += 2.0 * acc * acc;
            }
        s.cov_term /= static_cast<double>(dim);
        return s;
    };

    const ViewStats sa = analyze(ha.data());
    const ViewStats sb = analyze(hb.data());

    double inv_mse = 0.0;
    {
        const float* a = ha.data();
        const float* b = hb.data();
        for (int64_t i = 0; i < n * dim; ++i) {
            const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
            inv_mse += d * d;
        }
        inv_mse /= static_cast<double>(n * dim);
    }

    const double total = w.inv * inv_mse + w.var * 0.5 * (sa.var_term + sb.var_term) +
                         w.cov * (sa.cov_term + sb.cov_term);

    Tensor hat = ha, hbt = hb;
    VicregWeights wc = w;
    return core::make_op(
        {1}, {static_cast<float>(total)}, {ha, hb},
        [hat, hbt, wc, n, dim](core::TensorNode& self) {
            const double seed = self.grad[0];
            // Recompute per-view statistics; cheaper than caching n*D doubles
            // across the whole step and keeps the closure self-contained.
            auto stats = [&](const float* h, std::vector<double>& centered,
                             std::vector<double>& std_dev, std::vector<double>& cov) {
                centered.resize(static_cast<size_t>(n * dim));
                std_dev.resize(static_cast<size_t>(dim));
                cov.assign(static_cast<size_t>(dim * dim), 0.0);
                for (int64_t d = 0; d < dim; ++d) {
                    double mu = 0.0;
                    for (int64_t j = 0; j < n; ++j) mu += h[j * dim + d];
                    mu /= static_cast<double>(n);
                    double var = 0.0;
                    for (int64_t j = 0; j < n; ++j) {
                        const double c = h[j * dim + d] - mu;
                        centered[static_cast<size_t>(j * dim + d)] = c;
                        var += c * c;
                    }
                    var /= static_cast<double>(n - 1);
                    std_dev[static_cast<size_t>(d)] = std::sqrt(var + 1e-4);
                }
                for (int64_t a = 0; a < dim; ++a)
                    for (int64_t b = a + 1; b < dim; ++b) {
                        double acc = 0.0;
                        for (int64_t j = 0; j < n; ++j)
                            acc += centered[static_cast<size_t>(j * dim + a)] *
                                   centered[static_cast<size_t>(j * dim + b)];
                        acc /= static_cast<double>(n - 1);
                        cov[static_cast<size_t>(a * dim + b)] = acc;
                        cov[static_cast<size_t>(b * dim + a)] = acc;
                    }
            };
            auto view_grad = [&](const Tensor& ht, std::vector<double>& g) {
                std::vector<double> centered, std_dev, cov;
                stats(ht.data(), centered, std_dev, cov);
                g.assign(static_cast<size_t>(n * dim), 0.0);
                // variance hinge, averaged over the two views
                for (int64_t d = 0; d < dim; ++d) {
                    if (std_dev[static_cast<size_t>(d)] >= 1.0) continue;
                    const double c = -0.5 * wc.var /
                                     (static_cast<double>(dim) * (n - 1) *
                                      std_dev[static_cast<size_t>(d)]);
                    for (int64_t j = 0; j < n; ++j)
                        g[static_cast<size_t>(j * dim + d)] +=
                            c * centered[static_cast<size_t>(j * dim + d)];
                }
                // covariance energy: 4/(D(n-1)) * C * Cov_offdiag, column-centered
                std::vector<double> gc(static_cast<size_t>(n * dim), 0.0);
                const double s = 4.0 * wc.cov / (static_cast<double>(dim) * (n - 1));
                for (int64_t j = 0; j < n; ++j)
                    for (int64_t b = 0; b < dim; ++b) {
                        double acc = 0.0;
                        for (int64_t a = 0; a < dim; ++a) {
                            if (a == b) continue;
                            acc += centered[static_cast<size_t>(j * dim + a)] *
                                   cov[static_cast<size_t>(a * dim + b)];
                        }
                        gc[static_cast<size_t>(j * dim + b)] = s * acc;
                    }
                for (int64_t b = 0; b < dim; ++b) {
                    double mean = 0.0;
                    for (int64_t j = 0; j < n; ++j) mean += gc[static_cast<size_t>(j * dim + b)];
                    mean /= static_cast<double>(n);
                    for (int64_t j = 0; j < n; ++j)
                        g[static_cast<size_t>(j * dim + b)] +=
                            gc[static_cast<size_t>(j * dim + b)] - mean;
                }
            };

            std::vector<double> ga, gb;
            if (hat.requires_grad()) view_grad(hat, ga);
            if (hbt.requires_grad()) view_grad(hbt, gb);

            const double mse_scale = 2.0 * wc.inv / static_cast<double>(n * dim);
            const float* av = hat.data();
            const float* bv = hbt.data();
            if (hat.requires_grad()) {
                float* da = hat.grad().data();
                for (int64_t i = 0; i < n * dim; ++i) {
                    const double diff = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
                    da[i] += static_cast<float>(seed * (ga[static_cast<size_t>(i)] + mse_scale * diff));
                }
            }
            if (hbt.requires_grad()) {
                float* db = hbt.grad().data();
                for (int64_t i = 0; i < n * dim; ++i) {
                    const double diff = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
                    db[i] += static_cast<float>(seed * (gb[static_cast<size_t>(i)] - mse_scale * diff));
                }
            }
        });
}

}  // namespace acwm::geometry
