#include "eval/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <unordered_set>

#include "eval/metrics.hpp"
#include "util/error.hpp"

namespace acwm::eval {

using cohort::Cohort;
using core::Tensor;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double json_double(const nlohmann::json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return j.get<double>();
}

nlohmann::json double_json(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

models::ModelConfig model_of(const core::Checkpoint& ckpt) {
    ACWM_CHECK(ckpt.config.contains("model"), format,
               "checkpoint config lacks a model description");
    return models::ModelConfig::from_json(ckpt.config.at("model"));
}

struct LoadedClassifier {
    core::ParamSet params;
    models::ModelConfig cfg;
    // Construction order fixes entry layout; values come from the checkpoint.
    explicit LoadedClassifier(const core::Checkpoint& ckpt) : cfg(model_of(ckpt)) {
        Rng rng(0);
        enc_storage_ = std::make_unique<models::Encoder>(cfg, params, "encoder.", rng);
        cls_storage_ = std::make_unique<models::Classifier>(cfg, params, "classifier.");
        core::load_into_prefixed(ckpt, params, "encoder.");
        core::load_into_prefixed(ckpt, params, "classifier.");
    }
    const models::Encoder& enc() const { return *enc_storage_; }
    const models::Classifier& cls() const { return *cls_storage_; }

private:
    std::unique_ptr<models::Encoder> enc_storage_;
    std::unique_ptr<models::Classifier> cls_storage_;
};

Tensor sigmoid_values(const Tensor& logits) {
    Tensor out = Tensor::zeros(logits.shape());
    const auto& src = logits.values();
    auto& dst = out.values();
    for (size_t i = 0; i < src.size(); ++i)
        dst[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(src[i]))));
    return out;
}

}  // namespace

nlohmann::json EvalResult::to_json() const {
    nlohmann::json per = nlohmann::json::array();
    for (double v : per_class) per.push_back(double_json(v));
    return {{"protocol", protocol},
            {"macro_auroc", macro_auroc},
            {"per_class", per},
            {"ci_low", ci_low},
            {"ci_high", ci_high},
            {"n_bootstrap", n_bootstrap},
            {"n_records", n_records},
            {"n_patients", n_patients}};
}

EvalResult EvalResult::from_json(const nlohmann::json& j) {
    EvalResult r;
    try {
        r.protocol = j.at("protocol").get<std::string>();
        r.macro_auroc = j.at("macro_auroc").get<double>();
        for (const auto& v : j.at("per_class")) r.per_class.push_back(json_double(v));
        r.ci_low = j.at("ci_low").get<double>();
        r.ci_high = j.at("ci_high").get<double>();
        r.n_bootstrap = j.at("n_bootstrap").get<int64_t>();
        r.n_records = j.at("n_records").get<int64_t>();
        r.n_patients = j.at("n_patients").get<int64_t>();
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCategory::format, std::string("eval result: ") + e.what());
    }
    return r;
}

void EvalConfig::validate() const {
    ACWM_CHECK(protocol == "triage" || protocol == "monitoring", invalid_argument,
               "protocol must be triage or monitoring");
    ACWM_CHECK(n_bootstrap >= 1, invalid_argument, "n_bootstrap must be >= 1");
    ACWM_CHECK(batch_size >= 1, invalid_argument, "batch_size must be >= 1");
}

namespace {

void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                  const char* where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        ACWM_CHECK(ok, format, std::string("unknown key '") + it.key() + "' in " + where);
    }
}

}  // namespace

nlohmann::json EvalConfig::to_json() const {
    return {{"protocol", protocol},
            {"n_bootstrap", n_bootstrap},
            {"seed", seed},
            {"batch_size", batch_size}};
}

EvalConfig EvalConfig::from_json(const nlohmann::json& j) {
    require_keys(j, {"protocol", "n_bootstrap", "seed", "batch_size"}, "eval config");
    EvalConfig cfg;
    try {
        cfg.protocol = j.value("protocol", cfg.protocol);
        cfg.n_bootstrap = j.value("n_bootstrap", cfg.n_bootstrap);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCategory::format, std::string("eval config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::vector<int64_t> protocol_records(const Cohort& c, const std::string& protocol) {
    ACWM_CHECK(protocol == "triage" || protocol == "monitoring", invalid_argument,
               "protocol must be triage or monitoring");
    ACWM_CHECK(c.n_records() > 0, invalid_argument, "protocol selection is empty");
    std::vector<int64_t> recs;
    if (protocol == "monitoring") {
        recs.resize(static_cast<size_t>(c.n_records()));
        for (int64_t i = 0; i < c.n_records(); ++i) recs[static_cast<size_t>(i)] = i;
        return recs;
    }
    for (const auto& [pid, idx] : c.by_patient()) recs.push_back(idx.front());
    std::sort(recs.begin(), recs.end());
    return recs;
}

Tensor checkpoint_scores(const core::Checkpoint& ckpt, const Cohort& c,
                         const std::vector<int64_t>& records, int64_t batch_size) {
    ACWM_CHECK(!records.empty(), invalid_argument, "no records to score");
    LoadedClassifier model(ckpt);
    ACWM_CHECK(c.channels == model.cfg.in_channels, invalid_argument,
               "cohort channels do not match the encoder input width");
    ACWM_CHECK(c.n_classes() == model.cfg.num_classes, invalid_argument,
               "cohort class count does not match the classifier");
    const int64_t C = model.cfg.num_classes;
    Tensor scores = Tensor::zeros({static_cast<int64_t>(records.size()), C});
    for (size_t at = 0; at < records.size(); at += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(records.size(), at + static_cast<size_t>(batch_size));
        std::vector<int64_t> part(records.begin() + static_cast<std::ptrdiff_t>(at),
                                  records.begin() + static_cast<std::ptrdiff_t>(end));
        Tensor logits =
            model.cls().forward(model.enc().forward(cohort::waveform_batch(c, part), false));
        Tensor s = sigmoid_values(logits);
        std::copy(s.values().begin(), s.values().end(),
                  scores.values().begin() + static_cast<std::ptrdiff_t>(at * static_cast<size_t>(C)));
    }
    return scores;
}

EvalResult evaluate_protocol(const core::Checkpoint& ckpt, const Cohort& c,
                             const EvalConfig& cfg) {
    cfg.validate();
    const std::vector<int64_t> recs = protocol_records(c, cfg.protocol);
    const Tensor scores = checkpoint_scores(ckpt, c, recs, cfg.batch_size);
    const Tensor y = cohort::label_batch(c, recs);
    std::vector<int64_t> pids;
    pids.reserve(recs.size());
    for (int64_t i : recs) pids.push_back(c.records[static_cast<size_t>(i)].patient_id);

    const AurocResult point = macro_auroc(scores, y);
    const BootstrapResult ci = bootstrap_ci(scores, y, pids, cfg.n_bootstrap, cfg.seed);

    EvalResult r;
    r.protocol = cfg.protocol;
    r.macro_auroc = point.macro;
    r.per_class = point.per_class;
    r.ci_low = ci.low;
    r.ci_high = ci.high;
    r.n_bootstrap = cfg.n_bootstrap;
    r.n_records = static_cast<int64_t>(recs.size());
    std::vector<int64_t> uniq(pids);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    r.n_patients = static_cast<int64_t>(uniq.size());
    return r;
}

void SweepConfig::validate() const {
    ACWM_CHECK(!fractions.empty(), invalid_argument, "sweep needs at least one fraction");
    for (double f : fractions)
        ACWM_CHECK(f > 0.0 && f <= 1.0, invalid_argument, "fractions must lie in (0, 1]");
    ACWM_CHECK(!seeds.empty(), invalid_argument, "sweep needs at least one seed");
    ACWM_CHECK(!protocols.empty(), invalid_argument, "sweep needs at least one protocol");
    for (const auto& p : protocols)
        ACWM_CHECK(p == "triage" || p == "monitoring", invalid_argument,
                   "protocol must be triage or monitoring");
    ACWM_CHECK(n_bootstrap >= 1, invalid_argument, "n_bootstrap must be >= 1");
    ACWM_CHECK(eval_batch_size >= 1, invalid_argument, "eval_batch_size must be >= 1");
    ACWM_CHECK(pretrain.objective == "world_model" || pretrain.objective == "naive_ssl",
               invalid_argument, "sweep pretraining objective must be world_model or naive_ssl");
}

nlohmann::json SweepConfig::to_json() const {
    return {{"fractions", fractions},
            {"seeds", seeds},
            {"protocols", protocols},
            {"n_bootstrap", n_bootstrap},
            {"eval_batch_size", eval_batch_size},
            {"pretrain", pretrain.to_json()},
            {"finetune", finetune.to_json()},
            {"supervised", supervised.to_json()},
            {"probe", probe.to_json()}};
}

SweepConfig SweepConfig::from_json(const nlohmann::json& j) {
    require_keys(j,
                 {"fractions", "seeds", "protocols", "n_bootstrap", "eval_batch_size", "pretrain",
                  "finetune", "supervised", "probe"},
                 "sweep config");
    SweepConfig cfg;
    try {
        cfg.fractions = j.value("fractions", cfg.fractions);
        cfg.seeds = j.value("seeds", cfg.seeds);
        cfg.protocols = j.value("protocols", cfg.protocols);
        cfg.n_bootstrap = j.value("n_bootstrap", cfg.n_bootstrap);
        cfg.eval_batch_size = j.value("eval_batch_size", cfg.eval_batch_size);
        if (j.contains("pretrain")) cfg.pretrain = train::TrainConfig::from_json(j.at("pretrain"));
        if (j.contains("finetune")) cfg.finetune = train::TrainConfig::from_json(j.at("finetune"));
        if (j.contains("supervised"))
            cfg.supervised = train::TrainConfig::from_json(j.at("supervised"));
        if (j.contains("probe")) cfg.probe = train::TrainConfig::from_json(j.at("probe"));
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCategory::format, std::string("sweep config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

void SweepTable::write_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    ACWM_CHECK(f.good(), io, "cannot open " + path);
    f << "fraction,method,protocol,auroc,ci_low,ci_high,seed\n";
    for (const auto& r : rows)
        f << fmt(r.fraction) << ',' << r.method << ',' << r.result.protocol << ','
          << fmt(r.result.macro_auroc) << ',' << fmt(r.result.ci_low) << ','
          << fmt(r.result.ci_high) << ',' << r.seed << '\n';
    ACWM_CHECK(f.good(), io, "failed writing " + path);
}

nlohmann::json SweepTable::to_json() const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows)
        rows_j.push_back({{"fraction", r.fraction},
                          {"method", r.method},
                          {"seed", r.seed},
                          {"result", r.result.to_json()}});
    return {{"schema_version", 1}, {"rows", rows_j}};
}

SweepTable low_data_sweep(const Cohort& train_c, const Cohort& test_c, const SweepConfig& cfg) {
    cfg.validate();
    std::unordered_set<int64_t> test_pids;
    for (const auto& r : test_c.records) test_pids.insert(r.patient_id);
    for (const auto& r : train_c.records)
        ACWM_CHECK(!test_pids.count(r.patient_id), invalid_argument,
                   "test fold shares patients with the training fold");

    SweepTable table;
    for (double fraction : cfg.fractions) {
        for (uint64_t seed : cfg.seeds) {
            auto phase = [&](train::TrainConfig base, const char* objective) {
                base.model = cfg.pretrain.model;
                base.objective = objective;
                base.seed = seed;
                base.data_fraction = fraction;
                base.val_fraction = 0.0;  // fixed-epoch protocol, no early stop
                return base;
            };
            auto snapshot = [](const train::TrainResult& res) {
                core::Checkpoint ckpt;
                ckpt.config = res.provenance.at("config");
                ckpt.meta = {{"op", res.provenance.at("op")}};
                for (const auto& e : res.params.entries())
                    ckpt.entries.push_back(
                        {e.name, e.tensor.shape(), e.tensor.values(), e.trainable});
                return ckpt;
            };
            const train::TrainResult wm = train::pretrain_world_model(
                train_c, phase(cfg.pretrain, cfg.pretrain.objective.c_str()));
            const core::Checkpoint enc_ckpt = snapshot(wm);

            const train::TrainResult ours =
                train::finetune(train_c, enc_ckpt, phase(cfg.finetune, "supervised"));
            const train::TrainResult sup =
                train::train_supervised(train_c, phase(cfg.supervised, "supervised"));
            const train::TrainResult prb =
                train::linear_probe(train_c, enc_ckpt, phase(cfg.probe, "supervised"));

            auto eval_params = [&](const train::TrainResult& res, const char* method) {
                const core::Checkpoint ckpt = snapshot(res);
                for (const auto& protocol : cfg.protocols) {
                    EvalConfig ec;
                    ec.protocol = protocol;
                    ec.n_bootstrap = cfg.n_bootstrap;
                    ec.seed = seed;
                    ec.batch_size = cfg.eval_batch_size;
                    table.rows.push_back(
                        {fraction, method, seed, evaluate_protocol(ckpt, test_c, ec)});
                }
            };
            eval_params(ours, "ours");
            eval_params(sup, "supervised");
            eval_params(prb, "probe");
        }
    }
    return table;
}

nlohmann::json CounterfactualResult::to_json() const {
    return {{"h", h},
            {"h_hat", h_hat},
            {"logits", logits},
            {"logits_base", logits_base},
            {"displacement", displacement},
            {"neighbor_records", neighbor_records},
            {"neighbor_distances", neighbor_distances}};
}

CounterfactualResult counterfactual_apply(const core::Checkpoint& world_model,
                                          const core::Checkpoint& probe, const Cohort& c,
                                          int64_t record_index,
                                          const std::vector<int8_t>& action, int64_t k,
                                          int64_t batch_size) {
    const models::ModelConfig wm_cfg = model_of(world_model);
    const models::ModelConfig probe_cfg = model_of(probe);
    ACWM_CHECK(wm_cfg.latent_dim == probe_cfg.latent_dim &&
                   wm_cfg.num_classes == probe_cfg.num_classes,
               invalid_argument, "probe dimensions do not match the world model");
    ACWM_CHECK(record_index >= 0 && record_index < c.n_records(), invalid_argument,
               "record index out of range");
    ACWM_CHECK(static_cast<int64_t>(action.size()) == c.n_classes(), invalid_argument,
               "action length must equal the class count");
    for (int8_t a : action)
        ACWM_CHECK(a >= -1 && a <= 1, invalid_argument, "action entries must be -1, 0, or 1");
    ACWM_CHECK(k >= 0 && k <= c.n_records(), invalid_argument,
               "neighbor count out of range");
    ACWM_CHECK(c.channels == wm_cfg.in_channels && c.n_classes() == wm_cfg.num_classes,
               invalid_argument, "cohort shape does not match the world model");

    core::ParamSet wm_params;
    Rng rng(0);
    models::Encoder enc(wm_cfg, wm_params, "encoder.", rng);
    models::Projector proj(wm_cfg, wm_params, "projector.", rng);
    models::Predictor dyn(wm_cfg, wm_params, "predictor.", rng);
    core::load_into_prefixed(world_model, wm_params, "encoder.");
    core::load_into_prefixed(world_model, wm_params, "projector.");
    core::load_into_prefixed(world_model, wm_params, "predictor.");

    core::ParamSet probe_params;
    models::Classifier cls(probe_cfg, probe_params, "classifier.");
    core::load_into_prefixed(probe, probe_params, "classifier.");

    const int64_t D = wm_cfg.latent_dim;
    Tensor h = enc.forward(cohort::waveform_batch(c, {record_index}), false);
    Tensor a = Tensor::zeros({1, c.n_classes()});
    for (int64_t i = 0; i < c.n_classes(); ++i)
        a.values()[static_cast<size_t>(i)] = static_cast<float>(action[static_cast<size_t>(i)]);
    Tensor h_hat = dyn.forward(h, proj.forward(a));

    CounterfactualResult res;
    res.h = h.values();
    res.h_hat = h_hat.values();
    res.logits = cls.forward(h_hat).values();
    res.logits_base = cls.forward(h).values();
    double d2 = 0.0;
    for (int64_t i = 0; i < D; ++i) {
        const double d = static_cast<double>(res.h_hat[static_cast<size_t>(i)]) -
                         static_cast<double>(res.h[static_cast<size_t>(i)]);
        d2 += d * d;
    }
    res.displacement = std::sqrt(d2);

    if (k > 0) {
        std::vector<int64_t> all(static_cast<size_t>(c.n_records()));
        for (int64_t i = 0; i < c.n_records(); ++i) all[static_cast<size_t>(i)] = i;
        std::vector<double> dist(all.size(), 0.0);
        for (size_t at = 0; at < all.size(); at += static_cast<size_t>(batch_size)) {
            const size_t end = std::min(all.size(), at + static_cast<size_t>(batch_size));
            std::vector<int64_t> part(all.begin() + static_cast<std::ptrdiff_t>(at),
                                      all.begin() + static_cast<std::ptrdiff_t>(end));
            Tensor latents = enc.forward(cohort::waveform_batch(c, part), false);
            for (size_t row = 0; row < part.size(); ++row) {
                double acc = 0.0;
                for (int64_t j = 0; j < D; ++j) {
                    const double d =
                        static_cast<double>(latents.values()[row * static_cast<size_t>(D) +
                                                             static_cast<size_t>(j)]) -
                        static_cast<double>(res.h_hat[static_cast<size_t>(j)]);
                    acc += d * d;
                }
                dist[at + row] = std::sqrt(acc);
            }
        }
        std::sort(all.begin(), all.end(), [&](int64_t x, int64_t y) {
            const double dx = dist[static_cast<size_t>(x)], dy = dist[static_cast<size_t>(y)];
            return dx != dy ? dx < dy : x < y;
        });
        for (int64_t i = 0; i < k; ++i) {
            res.neighbor_records.push_back(all[static_cast<size_t>(i)]);
            res.neighbor_distances.push_back(dist[static_cast<size_t>(all[static_cast<size_t>(i)])]);
        }
    }
    return res;
}

nlohmann::json make_report(const std::vector<EvalResult>& results,
                           const nlohmann::json& provenance) {
    ACWM_CHECK(!results.empty(), invalid_argument, "refusing to emit an empty report");
    nlohmann::json rs = nlohmann::json::array();
    for (const auto& r : results) rs.push_back(r.to_json());
    return {{"schema_version", 1}, {"results", rs}, {"provenance", provenance}};
}

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream f(path, std::ios::trunc);
    ACWM_CHECK(f.good(), io, "cannot open " + path);
    f << j.dump(2) << '\n';
    ACWM_CHECK(f.good(), io, "failed writing " + path);
}

}  // namespace acwm::eval
