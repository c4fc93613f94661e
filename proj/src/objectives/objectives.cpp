#include "objectives/objectives.hpp"

#include <cmath>

#include "core/kernels.hpp"
#include "util/error.hpp"

namespace acwm::objectives {

namespace {

// log(sigmoid(z)) = -softplus(-z), stable at both tails.
double log_sigmoid(double z) { return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

LossBreakdown world_model_loss(const Tensor& h_t, const Tensor& h_next, const Tensor& actions,
                               const models::Projector& proj, const models::Predictor& dyn,
                               const Tensor& slices, float lambda) {
    ACWM_CHECK(lambda >= 0.0f && lambda <= 1.0f, invalid_argument,
               "geometry weight must lie in [0, 1]");
    ACWM_CHECK(h_t.rank() == 2 && h_next.rank() == 2 && h_t.shape() == h_next.shape(),
               invalid_argument, "latent batches must be [B, D] of equal shape");

    Tensor embedding = proj.forward(actions);
    Tensor predicted = dyn.forward(h_t, embedding);
    LossBreakdown out;
    out.pred = core::mse_mean(predicted, h_next);
    out.reg = core::add(geometry::sigreg(h_t, slices), geometry::sigreg(h_next, slices));
    out.total = core::add(core::scale(out.pred, 1.0f - lambda), core::scale(out.reg, lambda));
    return out;
}

LossBreakdown naive_ssl_loss(const Tensor& h_t, const Tensor& h_next, int64_t num_classes,
                             const models::Projector& proj, const models::Predictor& dyn,
                             const Tensor& slices, float lambda) {
    Tensor zero_actions = Tensor::zeros({h_t.dim(0), num_classes});
    return world_model_loss(h_t, h_next, zero_actions, proj, dyn, slices, lambda);
}

Tensor asymmetric_loss(const Tensor& logits, const Tensor& targets, const AsymmetricLossCfg& cfg) {
    ACWM_CHECK(logits.rank() == 2 && targets.rank() == 2 && logits.shape() == targets.shape(),
               invalid_argument, "asymmetric_loss expects aligned [B, C] logits and targets");
    ACWM_CHECK(cfg.gamma_pos >= 0.0f && cfg.gamma_neg >= 0.0f, invalid_argument,
               "focusing exponents must be non-negative");
    ACWM_CHECK(cfg.margin >= 0.0f && cfg.margin < 1.0f, invalid_argument,
               "margin must lie in [0, 1)");
    ACWM_CHECK(logits.all_finite(), numeric, "asymmetric_loss on non-finite logits");
    for (float y : targets.values())
        ACWM_CHECK(y == 0.0f || y == 1.0f, invalid_argument, "targets must be binary");

    const int64_t total_cells = logits.numel();
    const float* z = logits.data();
    const float* y = targets.data();
    const double gp = cfg.gamma_pos;
    const double gn = cfg.gamma_neg;
    const double m = cfg.margin;

    double acc = 0.0;
    for (int64_t i = 0; i < total_cells; ++i) {
        const double zi = z[i];
        if (y[i] == 1.0f) {
            // -(1-p)^gp * log p ; (1-p)^gp = exp(gp * log sigmoid(-z))
            const double w = gp == 0.0 ? 1.0 : std::exp(gp * log_sigmoid(-zi));
            acc += -w * log_sigmoid(zi);
        } else {
            const double p = sigmoid(zi);
            const double pm = std::max(p - m, 0.0);
            if (pm > 0.0) {
                const double w = gn == 0.0 ? 1.0 : std::pow(pm, gn);
                acc += -w * std::log1p(-pm);
            }
        }
    }
    const float value = static_cast<float>(acc / static_cast<double>(total_cells));

    Tensor zt = logits, yt = targets;
    AsymmetricLossCfg c = cfg;
    return core::make_op({1}, {value}, {logits, targets}, [zt, yt, c, total_cells](
                                                              core::TensorNode& self) {
        if (!zt.requires_grad()) return;
        const double seed = self.grad[0] / static_cast<double>(total_cells);
        const float* z = zt.data();
        const float* y = yt.data();
        float* dz = zt.grad().data();
        const double gp = c.gamma_pos, gn = c.gamma_neg, m = c.margin;
        for (int64_t i = 0; i < total_cells; ++i) {
            const double zi = z[i];
            const double p = sigmoid(zi);
            double g = 0.0;
            if (y[i] == 1.0f) {
                const double one_minus_p = sigmoid(-zi);
                const double w = gp == 0.0 ? 1.0 : std::exp(gp * log_sigmoid(-zi));
                // d/dz of -(1-p)^gp log p
                g = gp * p * w * log_sigmoid(zi) - w * one_minus_p;
            } else {
                const double pm = std::max(p - m, 0.0);
                if (pm > 0.0) {
                    const double one_minus_pm = 1.0 - pm;
                    const double w = gn == 0.0 ? 1.0 : std::pow(pm, gn);
                    const double dw = gn == 0.0 ? 0.0 : gn * std::pow(pm, gn - 1.0);
                    g = (-dw * std::log1p(-pm) + w / one_minus_pm) * p * (1.0 - p);
                }
            }
            dz[i] += static_cast<float>(seed * g);
        }
    });
}

}  // namespace acwm::objectives
