#include "models/models.hpp"

#include <cmath>

#include "util/error.hpp"

namespace acwm::models {

using core::BatchNormAttrs;
using core::Conv1dAttrs;

namespace {

Tensor init_conv(Shape shape, Rng& rng) {
    // He initialization, fan_in = in_channels * kernel.
    const int64_t fan_in = shape[1] * shape[2];
    const float s = std::sqrt(2.0f / static_cast<float>(fan_in));
    std::vector<float> v(static_cast<size_t>(core::shape_numel(shape)));
    for (float& x : v) x = s * rng.normal_f();
    return Tensor::from_data(std::move(shape), std::move(v));
}

Tensor init_linear_w(int64_t out, int64_t in, Rng& rng) {
    const float s = 1.0f / std::sqrt(static_cast<float>(in));
    std::vector<float> v(static_cast<size_t>(out * in));
    for (float& x : v) x = s * rng.normal_f();
    return Tensor::from_data({out, in}, std::move(v));
}

}  // namespace

void ModelConfig::validate() const {
    ACWM_CHECK(in_channels > 0 && stem_width > 0 && latent_dim > 0 && predictor_hidden > 0 &&
                   num_classes > 0,
               invalid_argument, "model config extents must be positive");
    ACWM_CHECK(projector_layers >= 1, invalid_argument, "projector needs at least one layer");
    ACWM_CHECK(!stage_blocks.empty() && stage_blocks.size() == stage_widths.size(),
               invalid_argument, "stage_blocks and stage_widths must align and be non-empty");
    for (int64_t b : stage_blocks)
        ACWM_CHECK(b >= 1, invalid_argument, "each stage needs at least one block");
    for (int64_t w : stage_widths)
        ACWM_CHECK(w >= 4, invalid_argument, "stage widths below 4 leave no bottleneck");
}

nlohmann::json ModelConfig::to_json() const {
    return {{"in_channels", in_channels},
            {"stem_width", stem_width},
            {"stage_blocks", stage_blocks},
            {"stage_widths", stage_widths},
            {"latent_dim", latent_dim},
            {"predictor_hidden", predictor_hidden},
            {"projector_layers", projector_layers},
            {"num_classes", num_classes}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.in_channels = j.value("in_channels", cfg.in_channels);
    cfg.stem_width = j.value("stem_width", cfg.stem_width);
    if (j.contains("stage_blocks")) cfg.stage_blocks = j["stage_blocks"].get<std::vector<int64_t>>();
    if (j.contains("stage_widths")) cfg.stage_widths = j["stage_widths"].get<std::vector<int64_t>>();
    cfg.latent_dim = j.value("latent_dim", cfg.latent_dim);
    cfg.predictor_hidden = j.value("predictor_hidden", cfg.predictor_hidden);
    cfg.projector_layers = j.value("projector_layers", cfg.projector_layers);
    cfg.num_classes = j.value("num_classes", cfg.num_classes);
    cfg.validate();
    return cfg;
}

ModelConfig ModelConfig::full_scale() {
    ModelConfig cfg;
    cfg.in_channels = 12;
    cfg.stem_width = 64;
    cfg.stage_blocks = {3, 4, 6, 3};
    cfg.stage_widths = {256, 512, 1024, 2048};
    cfg.latent_dim = 256;
    cfg.predictor_hidden = 512;
    cfg.projector_layers = 3;
    cfg.num_classes = 76;
    return cfg;
}

int64_t trunk_layer_count(const ModelConfig& cfg) {
    int64_t blocks = 0;
    for (int64_t b : cfg.stage_blocks) blocks += b;
    return 1 + 3 * blocks + 1;
}

Encoder::Encoder(const ModelConfig& cfg, ParamSet& params, const std::string& prefix, Rng& rng)
    : cfg_(cfg) {
    cfg_.validate();
    auto add_bn = [&](const std::string& name, int64_t width, bool zero_gamma) {
        BatchNorm bn;
        bn.gamma = params.add(name + ".gamma", Tensor::full({width}, zero_gamma ? 0.0f : 1.0f));
        bn.beta = params.add(name + ".beta", Tensor::zeros({width}));
        bn.running_mean = params.add(name + ".running_mean", Tensor::zeros({width}), false);
        bn.running_var = params.add(name + ".running_var", Tensor::full({width}, 1.0f), false);
        return bn;
    };

    stem_ = params.add(prefix + "stem.conv.w",
                       init_conv({cfg_.stem_width, cfg_.in_channels, 7}, rng));
    stem_bn_ = add_bn(prefix + "stem.bn", cfg_.stem_width, false);

    int64_t in_width = cfg_.stem_width;
    for (size_t s = 0; s < cfg_.stage_blocks.size(); ++s) {
        const int64_t width = cfg_.stage_widths[s];
        const int64_t mid = std::max<int64_t>(width / 4, 4);
        std::vector<Block> stage;
        for (int64_t b = 0; b < cfg_.stage_blocks[s]; ++b) {
            const std::string base =
                prefix + "s" + std::to_string(s) + ".b" + std::to_string(b) + ".";
            Block blk;
            blk.stride = (b == 0 && s > 0) ? 2 : 1;
            blk.conv1 = params.add(base + "conv1.w", init_conv({mid, in_width, 1}, rng));
            blk.bn1 = add_bn(base + "bn1", mid, false);
            blk.conv2 = params.add(base + "conv2.w", init_conv({mid, mid, 3}, rng));
            blk.bn2 = add_bn(base + "bn2", mid, false);
            blk.conv3 = params.add(base + "conv3.w", init_conv({width, mid, 1}, rng));
            // Zero gamma: each block starts as the identity around its shortcut.
            blk.bn3 = add_bn(base + "bn3", width, true);
            blk.has_projection = (blk.stride != 1 || in_width != width);
            if (blk.has_projection) {
                blk.proj = params.add(base + "short.w", init_conv({width, in_width, 1}, rng));
                blk.proj_bn = add_bn(base + "short.bn", width, false);
            }
            stage.push_back(std::move(blk));
            in_width = width;
        }
        stages_.push_back(std::move(stage));
    }

    head_w_ = params.add(prefix + "head.w", init_linear_w(cfg_.latent_dim, in_width, rng));
    head_b_ = params.add(prefix + "head.b", Tensor::zeros({cfg_.latent_dim}));
}

Tensor Encoder::apply_bn(const BatchNorm& bn, const Tensor& x, bool training) const {
    Tensor rm = bn.running_mean;
    Tensor rv = bn.running_var;
    return core::batchnorm1d(x, bn.gamma, bn.beta, rm, rv, training, BatchNormAttrs{});
}

Tensor Encoder::forward(const Tensor& x, bool training) const {
    ACWM_CHECK(x.rank() == 3, invalid_argument, "encoder input must be [B, channels, samples]");
    ACWM_CHECK(x.dim(1) == cfg_.in_channels, invalid_argument,
               "encoder expects " + std::to_string(cfg_.in_channels) + " channels, got " +
                   std::to_string(x.dim(1)));
    ACWM_CHECK(x.dim(2) >= kMinSamples, invalid_argument,
               "encoder input shorter than the stem receptive length");

    Tensor h = core::conv1d(x, stem_, Tensor(), Conv1dAttrs{.stride = 2, .padding = 3});
    h = core::relu(apply_bn(stem_bn_, h, training));

    for (const auto& stage : stages_) {
        for (const auto& blk : stage) {
            Tensor shortcut = h;
            if (blk.has_projection) {
                shortcut = core::conv1d(h, blk.proj, Tensor(),
                                        Conv1dAttrs{.stride = blk.stride, .padding = 0});
                shortcut = apply_bn(blk.proj_bn, shortcut, training);
            }
            Tensor y = core::conv1d(h, blk.conv1, Tensor(), Conv1dAttrs{.stride = 1, .padding = 0});
            y = core::relu(apply_bn(blk.bn1, y, training));
            y = core::conv1d(y, blk.conv2, Tensor(),
                             Conv1dAttrs{.stride = blk.stride, .padding = 1});
            y = core::relu(apply_bn(blk.bn2, y, training));
            y = core::conv1d(y, blk.conv3, Tensor(), Conv1dAttrs{.stride = 1, .padding = 0});
            y = apply_bn(blk.bn3, y, training);
            h = core::relu(core::residual_add(y, shortcut));
        }
    }

    h = core::global_meanpool(h);
    h = core::linear(h, head_w_, head_b_);
    ACWM_CHECK(h.all_finite(), numeric, "encoder produced non-finite latents");
    return h;
}

Projector::Projector(const ModelConfig& cfg, ParamSet& params, const std::string& prefix,
                     Rng& rng)
    : in_dim_(cfg.num_classes) {
    int64_t in = cfg.num_classes;
    for (int64_t l = 0; l < cfg.projector_layers; ++l) {
        const std::string base = prefix + "l" + std::to_string(l) + ".";
        weights_.push_back(params.add(base + "w", init_linear_w(cfg.latent_dim, in, rng)));
        biases_.push_back(params.add(base + "b", Tensor::zeros({cfg.latent_dim})));
        in = cfg.latent_dim;
    }
}

Tensor Projector::forward(const Tensor& actions) const {
    ACWM_CHECK(actions.rank() == 2 && actions.dim(1) == in_dim_, invalid_argument,
               "action batch must be [B," + std::to_string(in_dim_) + "]");
    for (float v : actions.values())
        ACWM_CHECK(v == -1.0f || v == 0.0f || v == 1.0f, invalid_argument,
                   "action entries must lie in {-1, 0, 1}");
    Tensor h = actions;
    for (size_t l = 0; l < weights_.size(); ++l) {
        h = core::linear(h, weights_[l], biases_[l]);
        if (l + 1 < weights_.size()) h = core::relu(h);
    }
    return h;
}

Predictor::Predictor(const ModelConfig& cfg, ParamSet& params, const std::string& prefix,
                     Rng& rng)
    : latent_dim_(cfg.latent_dim) {
    w1_ = params.add(prefix + "l0.w", init_linear_w(cfg.predictor_hidden, 2 * cfg.latent_dim, rng));
    b1_ = params.add(prefix + "l0.b", Tensor::zeros({cfg.predictor_hidden}));
    // Zero final layer: the fresh predictor is exactly the identity on h.
    w2_ = params.add(prefix + "l1.w", Tensor::zeros({cfg.latent_dim, cfg.predictor_hidden}));
    b2_ = params.add(prefix + "l1.b", Tensor::zeros({cfg.latent_dim}));
}

Tensor Predictor::forward(const Tensor& h, const Tensor& e) const {
    ACWM_CHECK(h.rank() == 2 && e.rank() == 2 && h.dim(0) == e.dim(0), invalid_argument,
               "predictor inputs must be [B,D] with equal batch");
    ACWM_CHECK(h.dim(1) == latent_dim_ && e.dim(1) == latent_dim_, invalid_argument,
               "predictor latent dimension mismatch");
    Tensor z = core::concat_cols(h, e);
    z = core::relu(core::linear(z, w1_, b1_));
    z = core::linear(z, w2_, b2_);
    return core::residual_add(h, z);
}

Classifier::Classifier(const ModelConfig& cfg, ParamSet& params, const std::string& prefix) {
    w_ = params.add(prefix + "w", Tensor::zeros({cfg.num_classes, cfg.latent_dim}));
    b_ = params.add(prefix + "b", Tensor::zeros({cfg.num_classes}));
}

Tensor Classifier::forward(const Tensor& h) const {
    return core::linear(h, w_, b_);
}

}  // namespace acwm::models
