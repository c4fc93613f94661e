// The four networks: waveform encoder, action projector, latent dynamics
// predictor, and classifier head.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/kernels.hpp"
#include "core/params.hpp"
#include "core/tensor.hpp"
#include "util/rng.hpp"

namespace acwm::models {

using core::ParamSet;
using core::Shape;
using core::Tensor;

struct ModelConfig {
    int64_t in_channels = 12;
    int64_t stem_width = 32;
    std::vector<int64_t> stage_blocks{1, 1, 1, 1};
    std::vector<int64_t> stage_widths{32, 64, 128, 256};
    int64_t latent_dim = 64;
    int64_t predictor_hidden = 512;
    int64_t projector_layers = 3;
    int64_t num_classes = 4;

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);

    // The 50-layer-class configuration used at full scale.
    static ModelConfig full_scale();
};

// Conv/linear layers on the trunk path: stem + 3 per bottleneck block + head.
int64_t trunk_layer_count(const ModelConfig& cfg);

// 1D residual encoder: strided conv stem, bottleneck residual stages with
// batchnorm, global mean pool, linear head to the latent dimension.
// Parameters register into `params` under `prefix`, so the same ParamSet can
// hold several networks for one optimizer/checkpoint.
class Encoder {
public:
    Encoder(const ModelConfig& cfg, ParamSet& params, const std::string& prefix, Rng& rng);

    // X: [B, in_channels, samples] -> [B, latent_dim]. Training mode uses
    // batch statistics and updates running stats; eval mode is
    // batch-composition independent.
    Tensor forward(const Tensor& x, bool training) const;

    static constexpr int64_t kMinSamples = 8;
    const ModelConfig& config() const { return cfg_; }

private:
    struct BatchNorm {
        Tensor gamma, beta, running_mean, running_var;
    };
    struct Block {
        Tensor conv1, conv2, conv3;  // 1x1, 3x3 (strided), 1x1
        BatchNorm bn1, bn2, bn3;
        int64_t stride = 1;
        bool has_projection = false;
        Tensor proj;  // 1x1 strided shortcut
        BatchNorm proj_bn;
    };

    Tensor apply_bn(const BatchNorm& bn, const Tensor& x, bool training) const;

    ModelConfig cfg_;
    Tensor stem_;
    BatchNorm stem_bn_;
    std::vector<std::vector<Block>> stages_;
    Tensor head_w_, head_b_;
};

// MLP on the raw ternary action vector, C -> D -> ... -> D with relu between
// layers. Entries outside {-1, 0, 1} are rejected.
class Projector {
public:
    Projector(const ModelConfig& cfg, ParamSet& params, const std::string& prefix, Rng& rng);
    Tensor forward(const Tensor& actions) const;

private:
    int64_t in_dim_;
    std::vector<Tensor> weights_, biases_;
};

// Residual dynamics: h_next = h + MLP(concat(h, e)). The final layer is
// zero-initialized so the untrained predictor is the identity on h.
class Predictor {
public:
    Predictor(const ModelConfig& cfg, ParamSet& params, const std::string& prefix, Rng& rng);
    Tensor forward(const Tensor& h, const Tensor& e) const;

private:
    int64_t latent_dim_;
    Tensor w1_, b1_, w2_, b2_;
};

// Linear head over latents; logits only, sigmoid lives in losses/metrics.
// Zero-initialized: untrained logits are 0 (probability one half).
class Classifier {
public:
    Classifier(const ModelConfig& cfg, ParamSet& params, const std::string& prefix);
    Tensor forward(const Tensor& h) const;

private:
    Tensor w_, b_;
};

}  // namespace acwm::models
