#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "core/checkpoint.hpp"
#include "core/params.hpp"
#include "core/tensor.hpp"
#include "util/error.hpp"
#include "util/rng.hpp"

using namespace acwm;
using namespace acwm::core;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

ParamSet make_params(uint64_t seed) {
    ParamSet params;
    Rng rng(seed);
    auto fill = [&](Shape shape) {
        std::vector<float> v(static_cast<size_t>(shape_numel(shape)));
        for (float& x : v) x = rng.normal_f();
        return Tensor::from_data(std::move(shape), std::move(v));
    };
    params.add("enc.w", fill({4, 3, 5}));
    params.add("enc.b", fill({4}));
    params.add("enc.bn.running_mean", fill({4}), false);
    params.add("head.w", fill({2, 4}));
    return params;
}

}  // namespace

TEST_CASE("checkpoint round-trips bitwise") {
    TempFile f("ckpt_roundtrip.acwm");
    ParamSet params = make_params(1);
    // A few awkward bit patterns on top of the random fill.
    params.at("enc.b").values() = {0.0f, -0.0f, 1e-40f, 3.4028234e38f};
    nlohmann::json config = {{"latent_dim", 64}, {"stage_blocks", {1, 1, 1, 1}}};
    nlohmann::json meta = {{"operation", "unit-test"}, {"seed", 7}};
    save_checkpoint(f.path, params, config, meta);

    Checkpoint ckpt = load_checkpoint(f.path);
    REQUIRE(ckpt.entries.size() == params.size());
    for (size_t i = 0; i < ckpt.entries.size(); ++i) {
        const auto& src = params.entries()[i];
        const auto& dst = ckpt.entries[i];
        CHECK(dst.name == src.name);
        CHECK(dst.shape == src.tensor.shape());
        CHECK(dst.trainable == src.trainable);
        REQUIRE(dst.values.size() == src.tensor.values().size());
        CHECK(std::memcmp(dst.values.data(), src.tensor.values().data(),
                          dst.values.size() * sizeof(float)) == 0);
    }
    CHECK(ckpt.config == config);
    CHECK(ckpt.meta == meta);
}

TEST_CASE("checkpoint file starts with the magic and version") {
    TempFile f("ckpt_magic.acwm");
    ParamSet params = make_params(2);
    save_checkpoint(f.path, params, {}, {});
    std::ifstream in(f.path, std::ios::binary);
    char head[7];
    in.read(head, 7);
    CHECK(std::memcmp(head, "ACWM1", 5) == 0);
    CHECK(head[5] == 1);  // version u16 little-endian
    CHECK(head[6] == 0);
}

TEST_CASE("save is byte-identical for identical inputs") {
    TempFile a("ckpt_det_a.acwm"), b("ckpt_det_b.acwm");
    ParamSet params = make_params(3);
    save_checkpoint(a.path, params, {{"k", 1}}, {});
    save_checkpoint(b.path, params, {{"k", 1}}, {});
    auto slurp = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
    CHECK(slurp(a.path) == slurp(b.path));
}

TEST_CASE("load_into restores values and rejects mismatches") {
    TempFile f("ckpt_loadinto.acwm");
    ParamSet src = make_params(4);
    save_checkpoint(f.path, src, {}, {});
    Checkpoint ckpt = load_checkpoint(f.path);

    ParamSet dst = make_params(5);
    load_into(ckpt, dst);
    CHECK(dst.at("head.w").values() == src.at("head.w").values());

    ParamSet extra = make_params(6);
    extra.add("unknown", Tensor::zeros({3}));
    CHECK_THROWS_AS(load_into(ckpt, extra), Error);

    ParamSet wrong_shape;
    wrong_shape.add("enc.w", Tensor::zeros({4, 3, 5}));
    wrong_shape.add("enc.b", Tensor::zeros({5}));  // shape differs
    wrong_shape.add("enc.bn.running_mean", Tensor::zeros({4}), false);
    wrong_shape.add("head.w", Tensor::zeros({2, 4}));
    CHECK_THROWS_AS(load_into(ckpt, wrong_shape), Error);
}

TEST_CASE("load_into_prefixed copies the matching subset only") {
    TempFile f("ckpt_prefix.acwm");
    ParamSet src = make_params(7);
    save_checkpoint(f.path, src, {}, {});
    Checkpoint ckpt = load_checkpoint(f.path);

    ParamSet dst = make_params(8);
    auto head_before = dst.at("head.w").values();
    size_t copied = load_into_prefixed(ckpt, dst, "enc.");
    CHECK(copied == 3);
    CHECK(dst.at("enc.w").values() == src.at("enc.w").values());
    CHECK(dst.at("head.w").values() == head_before);

    CHECK_THROWS_AS(load_into_prefixed(ckpt, dst, "nope."), Error);
}

TEST_CASE("corrupt checkpoints are rejected with format errors") {
    TempFile f("ckpt_corrupt.acwm");
    ParamSet params = make_params(9);
    save_checkpoint(f.path, params, {}, {});

    auto slurp = [&] {
        std::ifstream in(f.path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
    auto spit = [&](const std::string& bytes) {
        std::ofstream out(f.path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    };

    std::string good = slurp();

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    spit(bad_magic);
    CHECK_THROWS_WITH_AS(load_checkpoint(f.path), doctest::Contains("magic"), Error);

    std::string truncated = good.substr(0, good.size() - 8);
    spit(truncated);
    CHECK_THROWS_WITH_AS(load_checkpoint(f.path), doctest::Contains("truncated"), Error);

    std::string bad_version = good;
    bad_version[5] = 9;
    spit(bad_version);
    CHECK_THROWS_WITH_AS(load_checkpoint(f.path), doctest::Contains("version"), Error);

    CHECK_THROWS_AS(load_checkpoint("does_not_exist.acwm"), Error);
}

TEST_CASE("manifest carries names, shapes, offsets and the config echo") {
    ParamSet params = make_params(10);
    Checkpoint ckpt;
    for (const auto& e : params.entries())
        ckpt.entries.push_back({e.name, e.tensor.shape(), e.tensor.values(), e.trainable});
    ckpt.config = {{"latent_dim", 16}};
    nlohmann::json m = ckpt.manifest();
    REQUIRE(m["params"].is_array());
    CHECK(m["params"][0]["name"] == "enc.w");
    CHECK(m["params"][0]["offset"] == 0);
    CHECK(m["params"][1]["offset"] == 4 * 3 * 5 * 4);  // after enc.w floats
    CHECK(m["params"][2]["trainable"] == false);
    CHECK(m["config"]["latent_dim"] == 16);
}
