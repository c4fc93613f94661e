#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <unistd.h>

#include "cohort/cohort.hpp"
#include "eval/protocols.hpp"
#include "train/train.hpp"
#include "util/error.hpp"

using namespace acwm;
using namespace acwm::eval;
using core::Tensor;

namespace {

models::ModelConfig tiny_model() {
    models::ModelConfig m;
    m.in_channels = 2;
    m.stem_width = 4;
    m.stage_blocks = {1};
    m.stage_widths = {8};
    m.latent_dim = 8;
    m.predictor_hidden = 16;
    m.num_classes = 4;
    return m;
}

cohort::Cohort small_cohort(uint64_t seed = 7, int64_t patients = 40) {
    cohort::SynthConfig sc;
    sc.n_patients = patients;
    sc.channels = 2;
    sc.samples = 64;
    sc.n_classes = 4;
    sc.mean_records = 3.0;
    sc.onset_prob = {0.25f, 0.25f, 0.25f, 0.25f};
    sc.seed = seed;
    return cohort::synth_generate(sc);
}

train::TrainConfig tiny_cfg(const char* objective) {
    train::TrainConfig cfg;
    cfg.model = tiny_model();
    cfg.objective = objective;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.sigreg.num_slices = 16;
    cfg.val_fraction = 0.0;
    cfg.seed = 3;
    return cfg;
}

core::Checkpoint snapshot(const train::TrainResult& res) {
    core::Checkpoint ckpt;
    ckpt.config = res.provenance.at("config");
    for (const auto& e : res.params.entries())
        ckpt.entries.push_back({e.name, e.tensor.shape(), e.tensor.values(), e.trainable});
    return ckpt;
}

struct TempPath {
    std::string path;
    explicit TempPath(const std::string& stem) {
        path = "/tmp/acwm_proto_" + std::to_string(getpid()) + "_" + stem;
    }
    ~TempPath() { std::remove(path.c_str()); }
};

struct Fixture {
    cohort::Cohort train_c, test_c;
    core::Checkpoint clf_ckpt;
    Fixture() {
        const auto c = small_cohort();
        const auto folds = cohort::patient_split(c, {0.7, 0.3}, 11);
        train_c = cohort::filter_cohort(c, folds[0]);
        test_c = cohort::filter_cohort(c, folds[1]);
        clf_ckpt = snapshot(train::train_supervised(train_c, tiny_cfg("supervised")));
    }
};

const Fixture& fixture() {
    static Fixture f;
    return f;
}

}  // namespace

TEST_CASE("eval results round-trip through json including excluded classes") {
    EvalResult r;
    r.protocol = "triage";
    r.macro_auroc = 0.7;
    r.per_class = {0.8, std::numeric_limits<double>::quiet_NaN(), 0.6, 0.7};
    r.ci_low = 0.6;
    r.ci_high = 0.8;
    r.n_bootstrap = 100;
    r.n_records = 50;
    r.n_patients = 50;
    const EvalResult back = EvalResult::from_json(r.to_json());
    CHECK(back.protocol == r.protocol);
    CHECK(back.macro_auroc == r.macro_auroc);
    REQUIRE(back.per_class.size() == 4);
    CHECK(back.per_class[0] == 0.8);
    CHECK(std::isnan(back.per_class[1]));
    CHECK(back.to_json() == r.to_json());
}

TEST_CASE("triage picks one first record per patient, monitoring picks all") {
    const auto& c = fixture().test_c;
    const auto triage = protocol_records(c, "triage");
    const auto monitoring = protocol_records(c, "monitoring");
    CHECK(static_cast<int64_t>(triage.size()) == c.n_patients());
    CHECK(static_cast<int64_t>(monitoring.size()) == c.n_records());

    // Triage is a subset of monitoring and holds the chronologically first
    // record of each patient.
    for (int64_t idx : triage) {
        const auto& rec = c.records[static_cast<size_t>(idx)];
        for (const auto& other : c.records)
            if (other.patient_id == rec.patient_id)
                CHECK(rec.order_index <= other.order_index);
    }
    CHECK_THROWS_AS(protocol_records(c, "screening"), Error);
    CHECK_THROWS_WITH_AS(protocol_records(cohort::Cohort{}, "triage"),
                         doctest::Contains("empty"), Error);
}

TEST_CASE("protocols coincide on a cohort of singletons") {
    cohort::Cohort c;
    c.channels = 2;
    c.samples = 16;
    c.classes = {"I44", "I48", "I21", "I47"};
    for (int64_t i = 0; i < 5; ++i) {
        cohort::CohortRecord r;
        r.record_id = i;
        r.patient_id = i;
        r.order_index = 0;
        r.waveform_offset = i * 32;
        r.labels.assign(4, 0);
        c.records.push_back(r);
    }
    c.blob.assign(5 * 32, 0.0f);
    CHECK(protocol_records(c, "triage") == protocol_records(c, "monitoring"));
}

TEST_CASE("checkpoint scores are probabilities and batch-size invariant") {
    const auto& f = fixture();
    const auto recs = protocol_records(f.test_c, "monitoring");
    const Tensor a = checkpoint_scores(f.clf_ckpt, f.test_c, recs, 64);
    const Tensor b = checkpoint_scores(f.clf_ckpt, f.test_c, recs, 7);
    REQUIRE(a.values().size() == b.values().size());
    for (size_t i = 0; i < a.values().size(); ++i) {
        CHECK(a.values()[i] == b.values()[i]);
        CHECK(a.values()[i] > 0.0f);
        CHECK(a.values()[i] < 1.0f);
    }
}

TEST_CASE("evaluate_protocol returns a bracketed deterministic interval") {
    const auto& f = fixture();
    EvalConfig ec;
    ec.protocol = "monitoring";
    ec.n_bootstrap = 50;
    ec.seed = 5;
    const EvalResult r = evaluate_protocol(f.clf_ckpt, f.test_c, ec);
    CHECK(r.protocol == "monitoring");
    CHECK(r.ci_low <= r.macro_auroc);
    CHECK(r.macro_auroc <= r.ci_high);
    CHECK(r.n_records == f.test_c.n_records());
    CHECK(r.n_patients == f.test_c.n_patients());
    CHECK(r.n_bootstrap == 50);
    for (double v : r.per_class)
        if (!std::isnan(v)) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    const EvalResult again = evaluate_protocol(f.clf_ckpt, f.test_c, ec);
    CHECK(again.to_json() == r.to_json());

    EvalConfig triage = ec;
    triage.protocol = "triage";
    const EvalResult t = evaluate_protocol(f.clf_ckpt, f.test_c, triage);
    CHECK(t.n_records == f.test_c.n_patients());
}

TEST_CASE("evaluation rejects mismatched cohorts and headless checkpoints") {
    const auto& f = fixture();
    EvalConfig ec;
    ec.n_bootstrap = 5;
    auto wide = small_cohort(23);
    wide.channels = 3;  // lie about the layout
    CHECK_THROWS_AS(evaluate_protocol(f.clf_ckpt, wide, ec), Error);

    const auto wm = train::pretrain_world_model(f.train_c, tiny_cfg("world_model"));
    CHECK_THROWS_AS(evaluate_protocol(snapshot(wm), f.test_c, ec), Error);
}

TEST_CASE("low-data sweep emits one row per cell and respects the fold split") {
    const auto& f = fixture();
    SweepConfig sc;
    sc.fractions = {1.0, 0.5};
    sc.seeds = {1};
    sc.protocols = {"triage"};
    sc.n_bootstrap = 10;
    sc.pretrain = tiny_cfg("world_model");
    sc.pretrain.epochs = 1;
    sc.finetune = tiny_cfg("supervised");
    sc.finetune.epochs = 1;
    sc.supervised = tiny_cfg("supervised");
    sc.supervised.epochs = 1;
    sc.probe = tiny_cfg("supervised");
    sc.probe.epochs = 1;
    const SweepTable table = low_data_sweep(f.train_c, f.test_c, sc);
    REQUIRE(table.rows.size() == 2 * 3);
    for (const auto& row : table.rows) {
        CHECK((row.method == "ours" || row.method == "supervised" || row.method == "probe"));
        CHECK(row.result.protocol == "triage");
        CHECK(row.result.ci_low <= row.result.macro_auroc);
        CHECK(row.result.macro_auroc <= row.result.ci_high);
    }

    TempPath csv("sweep.csv");
    table.write_csv(csv.path);
    std::ifstream in(csv.path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "fraction,method,protocol,auroc,ci_low,ci_high,seed");
    int n_rows = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) n_rows++;
    CHECK(n_rows == 6);

    // Same patients on both sides of the split must be rejected.
    CHECK_THROWS_WITH_AS(low_data_sweep(f.train_c, f.train_c, sc),
                         doctest::Contains("shares patients"), Error);
}

TEST_CASE("counterfactual apply reports latents, logits, and sorted neighbors") {
    const auto& f = fixture();
    const auto wm = train::pretrain_world_model(f.train_c, tiny_cfg("world_model"));
    const core::Checkpoint wm_ckpt = snapshot(wm);
    const core::Checkpoint probe_ckpt =
        snapshot(train::linear_probe(f.train_c, wm_ckpt, tiny_cfg("supervised")));

    const std::vector<int8_t> onset = {1, 0, 0, 0};
    const auto res = counterfactual_apply(wm_ckpt, probe_ckpt, f.test_c, 0, onset, 3);
    CHECK(res.h.size() == 8);
    CHECK(res.h_hat.size() == 8);
    CHECK(res.logits.size() == 4);
    CHECK(res.logits_base.size() == 4);
    CHECK(res.displacement >= 0.0);
    CHECK(std::isfinite(res.displacement));
    REQUIRE(res.neighbor_records.size() == 3);
    CHECK(res.neighbor_distances[0] <= res.neighbor_distances[1]);
    CHECK(res.neighbor_distances[1] <= res.neighbor_distances[2]);

    const auto zero = counterfactual_apply(wm_ckpt, probe_ckpt, f.test_c, 0, {0, 0, 0, 0}, 0);
    CHECK(zero.neighbor_records.empty());
    CHECK(zero.h == res.h);        // same record, same encoder
    CHECK(zero.h_hat != res.h_hat);  // the action moved the prediction

    CHECK_THROWS_WITH_AS(counterfactual_apply(wm_ckpt, probe_ckpt, f.test_c, 0, {1, 0, 0}, 1),
                         doctest::Contains("action length"), Error);
    CHECK_THROWS_WITH_AS(
        counterfactual_apply(wm_ckpt, probe_ckpt, f.test_c, 0, {2, 0, 0, 0}, 1),
        doctest::Contains("-1, 0, or 1"), Error);
    CHECK_THROWS_WITH_AS(
        counterfactual_apply(wm_ckpt, probe_ckpt, f.test_c, -1, onset, 1),
        doctest::Contains("record index"), Error);
    CHECK_THROWS_AS(counterfactual_apply(wm_ckpt, probe_ckpt, f.test_c, 0, onset,
                                         f.test_c.n_records() + 1),
                    Error);

    core::Checkpoint narrow = probe_ckpt;
    narrow.config["model"]["latent_dim"] = 4;
    CHECK_THROWS_WITH_AS(counterfactual_apply(wm_ckpt, narrow, f.test_c, 0, onset, 1),
                         doctest::Contains("dimensions"), Error);
}

TEST_CASE("reports refuse to be empty and round-trip their results") {
    CHECK_THROWS_WITH_AS(make_report({}, {}), doctest::Contains("empty"), Error);
    EvalResult r;
    r.protocol = "triage";
    r.macro_auroc = 0.5;
    r.per_class = {0.5};
    r.n_bootstrap = 1;
    const nlohmann::json rep = make_report({r}, {{"checkpoint_sha256", "ab"}});
    CHECK(rep.at("schema_version") == 1);
    CHECK(rep.at("provenance").at("checkpoint_sha256") == "ab");
    const EvalResult back = EvalResult::from_json(rep.at("results").at(0));
    CHECK(back.to_json() == r.to_json());

    TempPath out("report.json");
    write_json(out.path, rep);
    std::ifstream in(out.path);
    nlohmann::json parsed;
    in >> parsed;
    CHECK(parsed == rep);
}
