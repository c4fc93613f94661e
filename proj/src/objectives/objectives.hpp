// Training losses: the action-conditioned world-model objective, the naive
// invariance baseline, and the asymmetric multi-label classification loss.
#pragma once

#include "core/tensor.hpp"
#include "geometry/geometry.hpp"
#include "models/models.hpp"

namespace acwm::objectives {

using core::Tensor;

struct WorldModelLossCfg {
    float lambda = 0.05f;  // geometry weight, in [0, 1]
    geometry::SigregConfig sigreg;
};

// total = (1-lambda)*pred + lambda*reg. pred and reg stay graph-connected so
// the caller can log them before running backward on total.
struct LossBreakdown {
    Tensor total;
    Tensor pred;  // unweighted latent-prediction MSE
    Tensor reg;   // unweighted SIGReg(H_t) + SIGReg(H_next)
};

// Prediction term: dynamics on (h_t, projected action) against h_next, both
// sides live (no stop-gradient). Geometry term: sigreg on both endpoint
// batches using the same slice set.
LossBreakdown world_model_loss(const Tensor& h_t, const Tensor& h_next, const Tensor& actions,
                               const models::Projector& proj, const models::Predictor& dyn,
                               const Tensor& slices, float lambda);

// Same objective with the action replaced by the zero vector for every pair:
// longitudinal exams become plain positive pairs.
LossBreakdown naive_ssl_loss(const Tensor& h_t, const Tensor& h_next, int64_t num_classes,
                             const models::Projector& proj, const models::Predictor& dyn,
                             const Tensor& slices, float lambda);

struct AsymmetricLossCfg {
    float gamma_pos = 0.0f;
    float gamma_neg = 4.0f;
    float margin = 0.05f;
};

// p = sigmoid(logit); positive term -(1-p)^g+ log p, negative term
// -p_m^g- log(1-p_m) with p_m = max(p - margin, 0); mean over all B*C cells.
// Degenerate hyperparameters (0, 0, 0) reduce it to binary cross-entropy.
Tensor asymmetric_loss(const Tensor& logits, const Tensor& targets, const AsymmetricLossCfg& cfg);

}  // namespace acwm::objectives
