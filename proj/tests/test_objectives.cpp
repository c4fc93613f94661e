#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "core/gradcheck.hpp"
#include "core/params.hpp"
#include "geometry/geometry.hpp"
#include "models/models.hpp"
#include "objectives/objectives.hpp"
#include "util/error.hpp"
#include "util/rng.hpp"

using namespace acwm;
using namespace acwm::objectives;
using core::ParamSet;
using core::Tensor;
using models::ModelConfig;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig cfg;
    cfg.in_channels = 2;
    cfg.stem_width = 4;
    cfg.stage_blocks = {1};
    cfg.stage_widths = {8};
    cfg.latent_dim = 8;
    cfg.predictor_hidden = 16;
    cfg.projector_layers = 3;
    cfg.num_classes = 4;
    return cfg;
}

Tensor randn2(int64_t rows, int64_t cols, uint64_t seed, float scale = 1.0f) {
    Rng rng(seed);
    std::vector<float> v(static_cast<size_t>(rows * cols));
    for (float& x : v) x = scale * rng.normal_f();
    return Tensor::from_data({rows, cols}, std::move(v));
}

// Independent reference: plain binary cross-entropy in double precision.
double bce_reference(const Tensor& logits, const Tensor& targets) {
    const float* z = logits.data();
    const float* y = targets.data();
    double acc = 0.0;
    for (int64_t i = 0; i < logits.numel(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(z[i])));
        acc += y[i] == 1.0f ? -std::log(p) : -std::log(1.0 - p);
    }
    return acc / static_cast<double>(logits.numel());
}

}  // namespace

TEST_CASE("world model loss at lambda = 1 is pure geometry") {
    ModelConfig cfg = tiny_cfg();
    ParamSet params;
    Rng rng(1);
    models::Projector proj(cfg, params, "projector.", rng);
    models::Predictor dyn(cfg, params, "predictor.", rng);
    Tensor h_t = randn2(4, cfg.latent_dim, 2);
    Tensor h_next = randn2(4, cfg.latent_dim, 3);
    Tensor a = Tensor::zeros({4, cfg.num_classes});
    Tensor slices = geometry::make_slices(cfg.latent_dim, 4, 5, 0);

    auto out = world_model_loss(h_t, h_next, a, proj, dyn, slices, 1.0f);
    CHECK(out.total.item() == doctest::Approx(out.reg.item()).epsilon(1e-6));
    CHECK(out.pred.item() > 0.0f);  // reported even though weighted zero
}

TEST_CASE("stable pair with zero action and fresh predictor has zero prediction term") {
    ModelConfig cfg = tiny_cfg();
    ParamSet params;
    Rng rng(7);
    models::Projector proj(cfg, params, "projector.", rng);
    models::Predictor dyn(cfg, params, "predictor.", rng);  // zero last layer
    Tensor h = randn2(3, cfg.latent_dim, 8);
    Tensor a = Tensor::zeros({3, cfg.num_classes});
    Tensor slices = geometry::make_slices(cfg.latent_dim, 4, 6, 0);
    auto out = world_model_loss(h, h, a, proj, dyn, slices, 0.5f);
    CHECK(out.pred.item() == 0.0f);
}

TEST_CASE("lambda = 0 with a unit offset gives prediction term epsilon squared") {
    ModelConfig cfg = tiny_cfg();
    ParamSet params;
    Rng rng(9);
    models::Projector proj(cfg, params, "projector.", rng);
    models::Predictor dyn(cfg, params, "predictor.", rng);
    const float eps = 0.25f;
    Tensor h_t = randn2(4, cfg.latent_dim, 10);
    std::vector<float> next(h_t.values());
    for (float& v : next) v -= eps;  // predictor outputs h_t, target is h_t - eps
    Tensor h_next = Tensor::from_data({4, cfg.latent_dim}, std::move(next));
    Tensor a = Tensor::zeros({4, cfg.num_classes});
    Tensor slices = geometry::make_slices(cfg.latent_dim, 4, 7, 0);
    auto out = world_model_loss(h_t, h_next, a, proj, dyn, slices, 0.0f);
    CHECK(out.pred.item() == doctest::Approx(eps * eps).epsilon(1e-5));
    CHECK(out.total.item() == doctest::Approx(eps * eps).epsilon(1e-5));
}

TEST_CASE("breakdown terms recombine to the reported total") {
    ModelConfig cfg = tiny_cfg();
    ParamSet params;
    Rng rng(11);
    models::Projector proj(cfg, params, "projector.", rng);
    models::Predictor dyn(cfg, params, "predictor.", rng);
    Tensor h_t = randn2(5, cfg.latent_dim, 12);
    Tensor h_next = randn2(5, cfg.latent_dim, 13);
    std::vector<float> av(5 * cfg.num_classes, 0.0f);
    av[0] = 1.0f;
    av[6] = -1.0f;
    Tensor a = Tensor::from_data({5, cfg.num_classes}, std::move(av));
    Tensor slices = geometry::make_slices(cfg.latent_dim, 8, 14, 0);
    const float lambda = 0.3f;
    auto out = world_model_loss(h_t, h_next, a, proj, dyn, slices, lambda);
    CHECK(out.total.item() ==
          doctest::Approx((1.0f - lambda) * out.pred.item() + lambda * out.reg.item())
              .epsilon(1e-6));
    CHECK(out.total.item() >= 0.0f);
}

TEST_CASE("world model loss rejects lambda outside [0, 1]") {
    ModelConfig cfg = tiny_cfg();
    ParamSet params;
    Rng rng(15);
    models::Projector proj(cfg, params, "projector.", rng);
    models::Predictor dyn(cfg, params, "predictor.", rng);
    Tensor h = randn2(2, cfg.latent_dim, 16);
    Tensor a = Tensor::zeros({2, cfg.num_classes});
    Tensor slices = geometry::make_slices(cfg.latent_dim, 2, 17, 0);
    CHECK_THROWS_AS(world_model_loss(h, h, a, proj, dyn, slices, 1.5f), Error);
    CHECK_THROWS_AS(world_model_loss(h, h, a, proj, dyn, slices, -0.1f), Error);
}

TEST_CASE("naive objective coincides with the world model on all-zero actions") {
    ModelConfig cfg = tiny_cfg();
    ParamSet params;
    Rng rng(21);
    models::Projector proj(cfg, params, "projector.", rng);
    models::Predictor dyn(cfg, params, "predictor.", rng);
    for (float& v : params.at("predictor.l1.w").values()) v = 0.05f * rng.normal_f();
    Tensor h_t = randn2(4, cfg.latent_dim, 22);
    Tensor h_next = randn2(4, cfg.latent_dim, 23);
    Tensor zero_a = Tensor::zeros({4, cfg.num_classes});
    Tensor slices = geometry::make_slices(cfg.latent_dim, 4, 24, 0);

    auto wm = world_model_loss(h_t, h_next, zero_a, proj, dyn, slices, 0.2f);
    auto nv = naive_ssl_loss(h_t, h_next, cfg.num_classes, proj, dyn, slices, 0.2f);
    CHECK(wm.total.item() == nv.total.item());
}

TEST_CASE("nonzero actions change the predictor input under the world model only") {
    ModelConfig cfg = tiny_cfg();
    ParamSet params;
    Rng rng(25);
    models::Projector proj(cfg, params, "projector.", rng);
    std::vector<float> av(1 * cfg.num_classes, 0.0f);
    av[2] = 1.0f;
    Tensor a = Tensor::from_data({1, cfg.num_classes}, std::move(av));
    Tensor zero = Tensor::zeros({1, cfg.num_classes});
    CHECK(proj.forward(a).values() != proj.forward(zero).values());
}

TEST_CASE("asymmetric loss with degenerate hyperparameters is binary cross-entropy") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        Tensor logits = randn2(6, 7, seed, 2.0f);
        Rng rng(seed + 50);
        std::vector<float> yv(6 * 7);
        for (float& y : yv) y = rng.bernoulli(0.3) ? 1.0f : 0.0f;
        Tensor targets = Tensor::from_data({6, 7}, std::move(yv));
        Tensor loss = asymmetric_loss(logits, targets, {.gamma_pos = 0, .gamma_neg = 0, .margin = 0});
        CHECK(loss.item() == doctest::Approx(bce_reference(logits, targets)).epsilon(1e-6));
    }
}

TEST_CASE("positive cell at logit zero scores -log(1/2)") {
    Tensor logits = Tensor::zeros({1, 1});
    Tensor targets = Tensor::full({1, 1}, 1.0f);
    Tensor loss = asymmetric_loss(logits, targets, {.gamma_pos = 0.0f, .gamma_neg = 4.0f, .margin = 0.05f});
    CHECK(loss.item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("margin clamps easy negatives to zero loss") {
    // sigmoid(-4) = 0.018 < margin 0.05, so p_m = 0 and the cell contributes nothing.
    Tensor logits = Tensor::full({2, 2}, -4.0f);
    Tensor targets = Tensor::zeros({2, 2});
    Tensor loss = asymmetric_loss(logits, targets, {});
    CHECK(loss.item() == 0.0f);
}

TEST_CASE("asymmetric loss rejects non-binary targets and bad configs") {
    Tensor logits = Tensor::zeros({1, 2});
    Tensor bad = Tensor::from_data({1, 2}, {0.5f, 1.0f});
    CHECK_THROWS_AS(asymmetric_loss(logits, bad, {}), Error);
    Tensor y = Tensor::zeros({1, 2});
    CHECK_THROWS_AS(asymmetric_loss(logits, y, {.gamma_pos = -1.0f, .gamma_neg = 0, .margin = 0}), Error);
    CHECK_THROWS_AS(asymmetric_loss(logits, y, {.gamma_pos = 0, .gamma_neg = 0, .margin = 1.0f}), Error);
}

TEST_CASE("asymmetric loss gradient matches finite differences") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        ParamSet params;
        params.add("z", randn2(4, 5, seed, 1.5f));
        Rng rng(seed + 200);
        std::vector<float> yv(4 * 5);
        for (float& y : yv) y = rng.bernoulli(0.4) ? 1.0f : 0.0f;
        Tensor targets = Tensor::from_data({4, 5}, std::move(yv));
        // margin 0 keeps the loss smooth everywhere; the margin clamp's kink
        // is exercised separately above.
        AsymmetricLossCfg cfg{.gamma_pos = 1.5f, .gamma_neg = 2.0f, .margin = 0.0f};
        auto f = [&]() { return asymmetric_loss(params.at("z"), targets, cfg); };
        auto r = core::grad_check(f, params, 1e-2, 1e-3);
        INFO("seed ", seed, " rel ", r.max_rel_err);
        CHECK(r.pass);
    }
}

TEST_CASE("world model objective passes an end-to-end gradient check") {
    ModelConfig cfg = tiny_cfg();
    for (uint64_t seed = 1; seed <= 3; ++seed) {
        ParamSet params;
        Rng rng(seed);
        models::Projector proj(cfg, params, "projector.", rng);
        models::Predictor dyn(cfg, params, "predictor.", rng);
        for (float& v : params.at("predictor.l1.w").values()) v = 0.1f * rng.normal_f();
        // Keep every hidden pre-activation away from the relu kink so central
        // differences see a smooth function: small weights, biases at +-0.6.
        for (const char* layer : {"projector.l0", "projector.l1", "predictor.l0"}) {
            auto& w = params.at(std::string(layer) + ".w").values();
            for (float& v : w) v = 0.02f * rng.normal_f();
            auto& b = params.at(std::string(layer) + ".b").values();
            for (size_t i = 0; i < b.size(); ++i) b[i] = i % 2 == 0 ? 0.6f : -0.6f;
        }
        params.add("h_t", randn2(3, cfg.latent_dim, seed + 30));
        params.add("h_next", randn2(3, cfg.latent_dim, seed + 60));
        std::vector<float> av(3 * cfg.num_classes, 0.0f);
        av[1] = 1.0f;
        av[cfg.num_classes + 2] = -1.0f;
        Tensor actions = Tensor::from_data({3, cfg.num_classes}, std::move(av));
        Tensor slices = geometry::make_slices(cfg.latent_dim, 4, seed + 90, 0);
        auto f = [&]() {
            auto out = world_model_loss(params.at("h_t"), params.at("h_next"), actions, proj, dyn,
                                        slices, 0.35f);
            return out.total;
        };
        auto r = core::grad_check(f, params, 1e-2, 1e-3, 10, seed);
        INFO("seed ", seed, " worst ", r.worst_param, " rel ", r.max_rel_err);
        CHECK(r.pass);
    }
}
