// Collapse-prevention penalties: the sketched isotropic-Gaussian regularizer
// built on the Epps-Pulley statistic, plus a VICReg ablation baseline.
#pragma once

#include <cstdint>

#include "core/tensor.hpp"

namespace acwm::geometry {

using core::Tensor;

struct SigregConfig {
    int64_t num_slices = 64;
    bool resample_each_step = true;
};

// K x D matrix of unit-norm slice directions, deterministic in (seed, step).
// step feeds the stream index so per-step resampling never replays.
Tensor make_slices(int64_t latent_dim, int64_t num_slices, uint64_t seed, uint64_t step);

// Weighted characteristic-function distance between the empirical distribution
// of x and a standard Gaussian:
//   T = (1/n^2) sum_{j,k} exp(-(x_j-x_k)^2/2)
//       - (sqrt(2)/n) sum_j exp(-x_j^2/4) + 1/sqrt(3)
// Analytically T >= 0; differentiable in x.
Tensor epps_pulley_statistic(const Tensor& x);

// Mean of the statistic across columns of P [n, K], one fused node.
Tensor epps_pulley_mean_cols(const Tensor& projections);

// (1/K) sum_k T(H u_k): penalty driving the embedding distribution toward an
// isotropic Gaussian along every slice.
Tensor sigreg(const Tensor& h, const Tensor& slices);

struct VicregWeights {
    float inv = 25.0f;
    float var = 25.0f;
    float cov = 1.0f;
};

// invariance MSE + hinge(1 - std) variance term (averaged over the two views)
// + off-diagonal covariance energy (summed over views, each scaled by 1/D).
Tensor vicreg(const Tensor& ha, const Tensor& hb, const VicregWeights& w);

}  // namespace acwm::geometry
