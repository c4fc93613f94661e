#include "train/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <unordered_set>

#include "core/kernels.hpp"
#include "core/optim.hpp"
#include "eval/metrics.hpp"
#include "util/error.hpp"
#include "util/rng.hpp"
#include "util/sha256.hpp"

namespace acwm::train {

using cohort::Cohort;
using core::ParamSet;
using core::Tensor;

namespace {

constexpr float kWeightDecay = 0.01f;

void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                  const char* where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        ACWM_CHECK(ok, format, std::string("unknown key '") + it.key() + "' in " + where);
    }
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Patients of the cohort, ascending.
std::vector<int64_t> all_patients(const Cohort& c) {
    std::vector<int64_t> pids;
    for (const auto& r : c.records) pids.push_back(r.patient_id);
    std::sort(pids.begin(), pids.end());
    pids.erase(std::unique(pids.begin(), pids.end()), pids.end());
    return pids;
}

struct SplitPlan {
    std::unordered_set<int64_t> train, val;
};

// data_fraction subsample followed by the train/val patient split. All
// methods sharing a seed see the same patient subset, which keeps paired
// method comparisons on identical data.
SplitPlan plan_split(const Cohort& c, const TrainConfig& cfg) {
    std::vector<int64_t> pids = all_patients(c);
    ACWM_CHECK(!pids.empty(), invalid_argument, "cohort has no records");
    if (cfg.data_fraction < 1.0)
        pids = cohort::subsample_patients(pids, cfg.data_fraction,
                                          derive_seed(cfg.seed, "data-fraction"));
    ACWM_CHECK(pids.size() >= 2, invalid_argument,
               "data fraction leaves fewer than two patients");
    SplitPlan plan;
    if (cfg.val_fraction > 0.0) {
        // Deterministic split of the subset; same mechanics as patient_split.
        Rng rng(derive_seed(cfg.seed, "val-split"));
        std::vector<int64_t> shuffled(pids);
        rng.shuffle(shuffled);
        const size_t n_train = std::max<size_t>(
            1, static_cast<size_t>(
                   std::llround((1.0 - cfg.val_fraction) * static_cast<double>(shuffled.size()))));
        for (size_t i = 0; i < shuffled.size(); ++i)
            (i < n_train ? plan.train : plan.val).insert(shuffled[i]);
    } else {
        plan.train.insert(pids.begin(), pids.end());
    }
    return plan;
}

std::vector<int64_t> records_in(const Cohort& c, const std::unordered_set<int64_t>& pids) {
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < c.n_records(); ++i)
        if (pids.count(c.records[static_cast<size_t>(i)].patient_id)) idx.push_back(i);
    return idx;
}

std::vector<int64_t> pairs_in(const std::vector<cohort::TransitionPair>& pairs,
                              const std::unordered_set<int64_t>& pids) {
    std::vector<int64_t> idx;
    for (size_t i = 0; i < pairs.size(); ++i)
        if (pids.count(pairs[i].patient_id)) idx.push_back(static_cast<int64_t>(i));
    return idx;
}

// Shuffled minibatch index lists. Batches shorter than two rows are dropped:
// training passes use batch statistics, which need at least a pair.
std::vector<std::vector<int64_t>> make_batches(const std::vector<int64_t>& items, int64_t bs,
                                               uint64_t seed, uint64_t epoch) {
    std::vector<int64_t> order(items);
    Rng rng(derive_seed(seed, "batch-order", epoch));
    rng.shuffle(order);
    std::vector<std::vector<int64_t>> batches;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(bs)) {
        const size_t end = std::min(order.size(), at + static_cast<size_t>(bs));
        if (end - at < 2) break;
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

int64_t count_batches(size_t n_items, int64_t bs) {
    int64_t full = static_cast<int64_t>(n_items) / bs;
    const int64_t rem = static_cast<int64_t>(n_items) % bs;
    return full + (rem >= 2 ? 1 : 0);
}

void check_model_dims(const Cohort& c, const models::ModelConfig& m) {
    ACWM_CHECK(c.channels == m.in_channels, invalid_argument,
               "cohort channels do not match the encoder input width");
    ACWM_CHECK(c.n_classes() == m.num_classes, invalid_argument,
               "cohort class count does not match the model");
    ACWM_CHECK(c.samples >= models::Encoder::kMinSamples, invalid_argument,
               "waveforms shorter than the encoder minimum");
}

double grad_norm_prefix(const ParamSet& params, const std::string& prefix) {
    double acc = 0.0;
    for (const auto& e : params.entries()) {
        if (!e.trainable || e.name.rfind(prefix, 0) != 0) continue;
        const std::vector<float>* g = e.tensor.grad_if_present();
        if (!g) continue;
        for (float v : *g) acc += static_cast<double>(v) * static_cast<double>(v);
    }
    return std::sqrt(acc);
}

// Batch-norm running buffers, saved around diagnostic forwards so the
// diagnostics leave no trace on the training trajectory.
std::vector<std::pair<size_t, std::vector<float>>> snapshot_buffers(const ParamSet& params) {
    std::vector<std::pair<size_t, std::vector<float>>> snap;
    const auto& es = params.entries();
    for (size_t i = 0; i < es.size(); ++i)
        if (es[i].name.find(".running_") != std::string::npos)
            snap.emplace_back(i, es[i].tensor.values());
    return snap;
}

void restore_buffers(ParamSet& params, const std::vector<std::pair<size_t, std::vector<float>>>& snap) {
    for (const auto& [i, vals] : snap) params.entries()[i].tensor.values() = vals;
}

struct PairBatch {
    Tensor x_t, x_next, actions;
};

PairBatch gather_pairs(const Cohort& c, const std::vector<cohort::TransitionPair>& pairs,
                       const std::vector<int64_t>& pair_idx) {
    std::vector<int64_t> t_recs, n_recs;
    for (int64_t i : pair_idx) {
        t_recs.push_back(pairs[static_cast<size_t>(i)].t_index);
        n_recs.push_back(pairs[static_cast<size_t>(i)].next_index);
    }
    return {cohort::waveform_batch(c, t_recs), cohort::waveform_batch(c, n_recs),
            cohort::action_batch(pairs, pair_idx, c.n_classes())};
}

objectives::LossBreakdown pair_loss(const models::Projector& proj, const models::Predictor& dyn,
                                    const Tensor& h_t, const Tensor& h_next,
                                    const Tensor& actions, const Tensor& slices,
                                    const TrainConfig& cfg) {
    if (cfg.objective == "naive_ssl")
        return objectives::naive_ssl_loss(h_t, h_next, cfg.model.num_classes, proj, dyn, slices,
                                          cfg.lambda);
    return objectives::world_model_loss(h_t, h_next, actions, proj, dyn, slices, cfg.lambda);
}

double pair_grad_ratio(const models::Encoder& enc, const models::Projector& proj,
                       const models::Predictor& dyn, ParamSet& params, const PairBatch& b,
                       const Tensor& slices, const TrainConfig& cfg) {
    auto stats = snapshot_buffers(params);

    Tensor h_t = enc.forward(b.x_t, true);
    Tensor h_n = enc.forward(b.x_next, true);
    const Tensor a = cfg.objective == "naive_ssl"
                         ? Tensor::zeros({b.actions.shape()[0], cfg.model.num_classes})
                         : b.actions;
    Tensor pred = core::mse_mean(dyn.forward(h_t, proj.forward(a)), h_n);
    core::backward(pred);
    const double g_pred = grad_norm_prefix(params, "encoder.");
    params.zero_grad();
    restore_buffers(params, stats);

    h_t = enc.forward(b.x_t, true);
    h_n = enc.forward(b.x_next, true);
    Tensor reg = core::add(geometry::sigreg(h_t, slices), geometry::sigreg(h_n, slices));
    core::backward(reg);
    const double g_reg = grad_norm_prefix(params, "encoder.");
    params.zero_grad();
    restore_buffers(params, stats);

    if (g_reg == 0.0) return std::numeric_limits<double>::infinity();
    return g_pred / g_reg;
}

void check_step_finite(double loss, double grad_norm, int64_t step) {
    ACWM_CHECK(std::isfinite(loss), numeric,
               "training diverged: non-finite loss at step " + std::to_string(step));
    ACWM_CHECK(std::isfinite(grad_norm), numeric,
               "training aborted: non-finite gradient at step " + std::to_string(step));
}

// Eval-mode latents for the given records, chunked to bound peak memory.
Tensor encode_records(const models::Encoder& enc, const Cohort& c,
                      const std::vector<int64_t>& recs, int64_t chunk) {
    const int64_t D = enc.config().latent_dim;
    Tensor out = Tensor::zeros({static_cast<int64_t>(recs.size()), D});
    for (size_t at = 0; at < recs.size(); at += static_cast<size_t>(chunk)) {
        const size_t end = std::min(recs.size(), at + static_cast<size_t>(chunk));
        std::vector<int64_t> part(recs.begin() + static_cast<std::ptrdiff_t>(at),
                                  recs.begin() + static_cast<std::ptrdiff_t>(end));
        Tensor h = enc.forward(cohort::waveform_batch(c, part), false);
        std::copy(h.values().begin(), h.values().end(),
                  out.values().begin() + static_cast<std::ptrdiff_t>(at * static_cast<size_t>(D)));
    }
    return out;
}

Tensor gather_rows(const Tensor& m, const std::vector<int64_t>& rows) {
    const int64_t D = m.shape()[1];
    Tensor out = Tensor::zeros({static_cast<int64_t>(rows.size()), D});
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy_n(m.data() + rows[i] * D, D, out.data() + static_cast<int64_t>(i) * D);
    return out;
}

double val_auroc_or_nan(const Tensor& logits, const Tensor& y) {
    try {
        return eval::macro_auroc(logits, y).macro;
    } catch (const Error&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

nlohmann::json base_provenance(const char* op, const Cohort& c, const TrainConfig& cfg,
                               const SplitPlan& plan) {
    return {
        {"schema_version", 1},
        {"op", op},
        {"config", cfg.to_json()},
        {"cohort",
         {{"n_patients", c.n_patients()},
          {"n_records", c.n_records()},
          {"blob_sha256", sha256_hex(c.blob.data(), c.blob.size() * sizeof(float))}}},
        {"n_train_patients", plan.train.size()},
        {"n_val_patients", plan.val.size()},
    };
}

// Shared supervised loop: encoder (train mode) + classifier under the
// asymmetric loss; used by train_supervised and finetune.
void run_supervised_loop(const Cohort& c, const TrainConfig& cfg, const SplitPlan& plan,
                         ParamSet& params, const models::Encoder& enc,
                         const models::Classifier& cls, RunLog& log) {
    const std::vector<int64_t> train_recs = records_in(c, plan.train);
    const std::vector<int64_t> val_recs = records_in(c, plan.val);
    ACWM_CHECK(count_batches(train_recs.size(), cfg.batch_size) > 0 || cfg.epochs == 0,
               invalid_argument, "not enough labeled records for one batch");

    core::AdamW opt(params, {.lr = static_cast<float>(cfg.max_lr), .weight_decay = kWeightDecay});
    core::OneCycleConfig sched{.max_lr = static_cast<float>(cfg.max_lr)};
    const int64_t total_steps = cfg.epochs * count_batches(train_recs.size(), cfg.batch_size);

    int64_t step = 0;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& batch : make_batches(train_recs, cfg.batch_size, cfg.seed, epoch)) {
            const double lr = core::onecycle_lr_at(step, total_steps, sched);
            Tensor logits = cls.forward(enc.forward(cohort::waveform_batch(c, batch), true));
            Tensor loss = objectives::asymmetric_loss(logits, cohort::label_batch(c, batch),
                                                      cfg.asl);
            const double loss_v = loss.item();
            core::backward(loss);
            const double pre = core::clip_global_norm(params, cfg.clip_norm);
            check_step_finite(loss_v, pre, step);
            const double applied = cfg.clip_norm > 0.0 ? std::min(pre, cfg.clip_norm) : pre;
            opt.set_lr(static_cast<float>(lr));
            opt.step();
            params.zero_grad();
            log.steps.push_back({step, lr, loss_v, 0.0, 0.0, 0.0, applied});
            step++;
        }
        if (!val_recs.empty()) {
            Tensor h = encode_records(enc, c, val_recs, cfg.batch_size);
            log.vals.push_back(
                {epoch, val_auroc_or_nan(cls.forward(h), cohort::label_batch(c, val_recs))});
        }
    }
}

}  // namespace

void TrainConfig::validate() const {
    ACWM_CHECK(objective == "world_model" || objective == "naive_ssl" ||
                   objective == "supervised",
               invalid_argument, "unknown objective '" + objective + "'");
    ACWM_CHECK(epochs >= 0, invalid_argument, "epochs must be >= 0");
    ACWM_CHECK(batch_size >= 2, invalid_argument, "batch_size must be >= 2");
    ACWM_CHECK(max_lr > 0.0, invalid_argument, "max_lr must be positive");
    ACWM_CHECK(lambda >= 0.0f && lambda <= 1.0f, invalid_argument, "lambda must be in [0, 1]");
    ACWM_CHECK(clip_norm >= 0.0, invalid_argument, "clip_norm must be >= 0");
    ACWM_CHECK(data_fraction > 0.0 && data_fraction <= 1.0, invalid_argument,
               "data_fraction must be in (0, 1]");
    ACWM_CHECK(val_fraction >= 0.0 && val_fraction <= 0.5, invalid_argument,
               "val_fraction must be in [0, 0.5]");
    ACWM_CHECK(grad_ratio_stride >= 0, invalid_argument, "grad_ratio_stride must be >= 0");
    ACWM_CHECK(sigreg.num_slices >= 1, invalid_argument, "num_slices must be >= 1");
    ACWM_CHECK(asl.gamma_pos >= 0.0f && asl.gamma_neg >= 0.0f, invalid_argument,
               "asymmetric loss focusing powers must be >= 0");
    ACWM_CHECK(asl.margin >= 0.0f && asl.margin < 1.0f, invalid_argument,
               "asymmetric loss margin must be in [0, 1)");
    model.validate();
}

nlohmann::json TrainConfig::to_json() const {
    return {
        {"objective", objective},
        {"epochs", epochs},
        {"batch_size", batch_size},
        {"max_lr", max_lr},
        {"lambda", lambda},
        {"sigreg",
         {{"num_slices", sigreg.num_slices}, {"resample_each_step", sigreg.resample_each_step}}},
        {"clip_norm", clip_norm},
        {"seed", seed},
        {"data_fraction", data_fraction},
        {"val_fraction", val_fraction},
        {"grad_ratio_stride", grad_ratio_stride},
        {"asl",
         {{"gamma_pos", asl.gamma_pos}, {"gamma_neg", asl.gamma_neg}, {"margin", asl.margin}}},
        {"model", model.to_json()},
    };
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    require_keys(j,
                 {"objective", "epochs", "batch_size", "max_lr", "lambda", "sigreg", "clip_norm",
                  "seed", "data_fraction", "val_fraction", "grad_ratio_stride", "asl", "model"},
                 "train config");
    TrainConfig cfg;
    try {
        cfg.objective = j.value("objective", cfg.objective);
        cfg.epochs = j.value("epochs", cfg.epochs);
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
        cfg.max_lr = j.value("max_lr", cfg.max_lr);
        cfg.lambda = j.value("lambda", cfg.lambda);
        cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.data_fraction = j.value("data_fraction", cfg.data_fraction);
        cfg.val_fraction = j.value("val_fraction", cfg.val_fraction);
        cfg.grad_ratio_stride = j.value("grad_ratio_stride", cfg.grad_ratio_stride);
        if (j.contains("sigreg")) {
            const auto& s = j.at("sigreg");
            require_keys(s, {"num_slices", "resample_each_step"}, "sigreg config");
            cfg.sigreg.num_slices = s.value("num_slices", cfg.sigreg.num_slices);
            cfg.sigreg.resample_each_step =
                s.value("resample_each_step", cfg.sigreg.resample_each_step);
        }
        if (j.contains("asl")) {
            const auto& a = j.at("asl");
            require_keys(a, {"gamma_pos", "gamma_neg", "margin"}, "asl config");
            cfg.asl.gamma_pos = a.value("gamma_pos", cfg.asl.gamma_pos);
            cfg.asl.gamma_neg = a.value("gamma_neg", cfg.asl.gamma_neg);
            cfg.asl.margin = a.value("margin", cfg.asl.margin);
        }
        if (j.contains("model")) cfg.model = models::ModelConfig::from_json(j.at("model"));
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCategory::format, std::string("train config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

void RunLog::write_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    ACWM_CHECK(f.good(), io, "cannot open " + path);
    f << "step,lr,loss_total,loss_pred,loss_reg,grad_ratio,grad_norm\n";
    for (const auto& r : steps)
        f << r.step << ',' << fmt(r.lr) << ',' << fmt(r.loss_total) << ',' << fmt(r.loss_pred)
          << ',' << fmt(r.loss_reg) << ',' << fmt(r.grad_ratio) << ',' << fmt(r.grad_norm)
          << '\n';
    ACWM_CHECK(f.good(), io, "failed writing " + path);
}

void RunLog::write_val_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    ACWM_CHECK(f.good(), io, "cannot open " + path);
    f << "epoch,val_metric\n";
    for (const auto& r : vals) f << r.epoch << ',' << fmt(r.metric) << '\n';
    ACWM_CHECK(f.good(), io, "failed writing " + path);
}

TrainResult pretrain_world_model(const Cohort& c, const TrainConfig& cfg) {
    cfg.validate();
    ACWM_CHECK(cfg.objective == "world_model" || cfg.objective == "naive_ssl", invalid_argument,
               "pretraining objective must be world_model or naive_ssl");
    check_model_dims(c, cfg.model);
    const SplitPlan plan = plan_split(c, cfg);
    const auto pairs = cohort::extract_pairs(c);
    const std::vector<int64_t> train_pairs = pairs_in(pairs, plan.train);
    const std::vector<int64_t> val_pairs = pairs_in(pairs, plan.val);
    ACWM_CHECK(!train_pairs.empty(), invalid_argument,
               "no transition pairs in the training fold (all patients are singletons?)");

    TrainResult res;
    Rng init_rng(derive_seed(cfg.seed, "init"));
    models::Encoder enc(cfg.model, res.params, "encoder.", init_rng);
    models::Projector proj(cfg.model, res.params, "projector.", init_rng);
    models::Predictor dyn(cfg.model, res.params, "predictor.", init_rng);

    core::AdamW opt(res.params,
                    {.lr = static_cast<float>(cfg.max_lr), .weight_decay = kWeightDecay});
    core::OneCycleConfig sched{.max_lr = static_cast<float>(cfg.max_lr)};
    const int64_t total_steps = cfg.epochs * count_batches(train_pairs.size(), cfg.batch_size);
    const Tensor val_slices = geometry::make_slices(
        cfg.model.latent_dim, cfg.sigreg.num_slices, derive_seed(cfg.seed, "val-slices"), 0);

    int64_t step = 0;
    double last_ratio = 0.0;
    const bool ratio_on =
        cfg.grad_ratio_stride > 0 && cfg.lambda > 0.0f && cfg.lambda < 1.0f;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& batch : make_batches(train_pairs, cfg.batch_size, cfg.seed, epoch)) {
            const double lr = core::onecycle_lr_at(step, total_steps, sched);
            const PairBatch pb = gather_pairs(c, pairs, batch);
            const Tensor slices = geometry::make_slices(
                cfg.model.latent_dim, cfg.sigreg.num_slices, cfg.seed,
                cfg.sigreg.resample_each_step ? static_cast<uint64_t>(step) : 0);
            if (ratio_on && step % cfg.grad_ratio_stride == 0)
                last_ratio = pair_grad_ratio(enc, proj, dyn, res.params, pb, slices, cfg);

            Tensor h_t = enc.forward(pb.x_t, true);
            Tensor h_n = enc.forward(pb.x_next, true);
            auto out = pair_loss(proj, dyn, h_t, h_n, pb.actions, slices, cfg);
            const double loss_v = out.total.item();
            const double pred_v = out.pred.item();
            const double reg_v = out.reg.item();
            core::backward(out.total);
            const double pre = core::clip_global_norm(res.params, cfg.clip_norm);
            check_step_finite(loss_v, pre, step);
            const double applied = cfg.clip_norm > 0.0 ? std::min(pre, cfg.clip_norm) : pre;
            opt.set_lr(static_cast<float>(lr));
            opt.step();
            res.params.zero_grad();
            res.log.steps.push_back({step, lr, loss_v, pred_v, reg_v, last_ratio, applied});
            step++;
        }
        if (!val_pairs.empty()) {
            double acc = 0.0;
            int64_t n = 0;
            for (size_t at = 0; at < val_pairs.size();
                 at += static_cast<size_t>(cfg.batch_size)) {
                const size_t end =
                    std::min(val_pairs.size(), at + static_cast<size_t>(cfg.batch_size));
                std::vector<int64_t> part(val_pairs.begin() + static_cast<std::ptrdiff_t>(at),
                                          val_pairs.begin() + static_cast<std::ptrdiff_t>(end));
                const PairBatch pb = gather_pairs(c, pairs, part);
                Tensor h_t = enc.forward(pb.x_t, false);
                Tensor h_n = enc.forward(pb.x_next, false);
                auto out = pair_loss(proj, dyn, h_t, h_n, pb.actions, val_slices, cfg);
                acc += out.total.item() * static_cast<double>(part.size());
                n += static_cast<int64_t>(part.size());
            }
            res.log.vals.push_back({epoch, acc / static_cast<double>(n)});
        }
    }

    res.provenance = base_provenance("pretrain", c, cfg, plan);
    res.provenance["n_train_pairs"] = train_pairs.size();
    res.provenance["params_sha256"] = params_sha256(res.params, "");
    return res;
}

TrainResult train_supervised(const Cohort& c, const TrainConfig& cfg) {
    cfg.validate();
    ACWM_CHECK(cfg.objective == "supervised", invalid_argument,
               "train_supervised expects the supervised objective");
    check_model_dims(c, cfg.model);
    const SplitPlan plan = plan_split(c, cfg);

    TrainResult res;
    Rng init_rng(derive_seed(cfg.seed, "init"));
    models::Encoder enc(cfg.model, res.params, "encoder.", init_rng);
    models::Classifier cls(cfg.model, res.params, "classifier.");
    run_supervised_loop(c, cfg, plan, res.params, enc, cls, res.log);

    res.provenance = base_provenance("train-supervised", c, cfg, plan);
    res.provenance["params_sha256"] = params_sha256(res.params, "");
    return res;
}

namespace {

models::ModelConfig model_from_checkpoint(const core::Checkpoint& ckpt) {
    ACWM_CHECK(ckpt.config.contains("model"), format,
               "checkpoint config lacks a model description");
    return models::ModelConfig::from_json(ckpt.config.at("model"));
}

}  // namespace

TrainResult linear_probe(const Cohort& c, const core::Checkpoint& encoder_ckpt,
                         const TrainConfig& cfg0) {
    TrainConfig cfg = cfg0;
    cfg.model = model_from_checkpoint(encoder_ckpt);
    cfg.validate();
    check_model_dims(c, cfg.model);
    const SplitPlan plan = plan_split(c, cfg);
    const std::vector<int64_t> train_recs = records_in(c, plan.train);
    const std::vector<int64_t> val_recs = records_in(c, plan.val);

    TrainResult res;
    Rng init_rng(derive_seed(cfg.seed, "init"));
    models::Encoder enc(cfg.model, res.params, "encoder.", init_rng);
    core::load_into_prefixed(encoder_ckpt, res.params, "encoder.");
    for (const auto& e : res.params.entries())
        if (e.trainable) res.params.set_trainable(e.name, false);
    const std::string enc_hash = params_sha256(res.params, "encoder.");
    models::Classifier cls(cfg.model, res.params, "classifier.");

    // Frozen encoder: eval-mode features computed exactly once per record.
    const Tensor train_feats = encode_records(enc, c, train_recs, cfg.batch_size);
    const Tensor val_feats =
        val_recs.empty() ? Tensor() : encode_records(enc, c, val_recs, cfg.batch_size);
    const Tensor train_labels = cohort::label_batch(c, train_recs);
    const Tensor val_labels = val_recs.empty() ? Tensor() : cohort::label_batch(c, val_recs);

    core::AdamW opt(res.params,
                    {.lr = static_cast<float>(cfg.max_lr), .weight_decay = kWeightDecay});
    core::OneCycleConfig sched{.max_lr = static_cast<float>(cfg.max_lr)};
    std::vector<int64_t> row_ids(train_recs.size());
    for (size_t i = 0; i < row_ids.size(); ++i) row_ids[i] = static_cast<int64_t>(i);
    const int64_t total_steps = cfg.epochs * count_batches(row_ids.size(), cfg.batch_size);

    int64_t step = 0;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& batch : make_batches(row_ids, cfg.batch_size, cfg.seed, epoch)) {
            const double lr = core::onecycle_lr_at(step, total_steps, sched);
            Tensor logits = cls.forward(gather_rows(train_feats, batch));
            Tensor loss =
                objectives::asymmetric_loss(logits, gather_rows(train_labels, batch), cfg.asl);
            const double loss_v = loss.item();
            core::backward(loss);
            const double pre = core::clip_global_norm(res.params, cfg.clip_norm);
            check_step_finite(loss_v, pre, step);
            const double applied = cfg.clip_norm > 0.0 ? std::min(pre, cfg.clip_norm) : pre;
            opt.set_lr(static_cast<float>(lr));
            opt.step();
            res.params.zero_grad();
            res.log.steps.push_back({step, lr, loss_v, 0.0, 0.0, 0.0, applied});
            step++;
        }
        if (!val_recs.empty())
            res.log.vals.push_back({epoch, val_auroc_or_nan(cls.forward(val_feats), val_labels)});
    }

    ACWM_CHECK(params_sha256(res.params, "encoder.") == enc_hash, internal,
               "frozen encoder changed during probing");
    res.provenance = base_provenance("probe", c, cfg, plan);
    res.provenance["encoder_sha256"] = enc_hash;
    res.provenance["params_sha256"] = params_sha256(res.params, "");
    return res;
}

TrainResult finetune(const Cohort& c, const core::Checkpoint& encoder_ckpt,
                     const TrainConfig& cfg0) {
    TrainConfig cfg = cfg0;
    cfg.model = model_from_checkpoint(encoder_ckpt);
    cfg.validate();
    check_model_dims(c, cfg.model);
    const SplitPlan plan = plan_split(c, cfg);

    TrainResult res;
    Rng init_rng(derive_seed(cfg.seed, "init"));
    models::Encoder enc(cfg.model, res.params, "encoder.", init_rng);
    core::load_into_prefixed(encoder_ckpt, res.params, "encoder.");
    models::Classifier cls(cfg.model, res.params, "classifier.");
    run_supervised_loop(c, cfg, plan, res.params, enc, cls, res.log);

    res.provenance = base_provenance("finetune", c, cfg, plan);
    res.provenance["encoder_sha256"] = params_sha256(res.params, "encoder.");
    res.provenance["params_sha256"] = params_sha256(res.params, "");
    return res;
}

std::vector<double> grad_ratio_diagnostic(const Cohort& c, const TrainConfig& cfg,
                                          int64_t steps) {
    cfg.validate();
    ACWM_CHECK(cfg.lambda > 0.0f && cfg.lambda < 1.0f, invalid_argument,
               "the gradient-ratio diagnostic needs lambda strictly inside (0, 1)");
    ACWM_CHECK(steps >= 1, invalid_argument, "need at least one diagnostic step");
    ACWM_CHECK(cfg.objective == "world_model" || cfg.objective == "naive_ssl", invalid_argument,
               "the diagnostic applies to pretraining objectives");
    check_model_dims(c, cfg.model);
    const SplitPlan plan = plan_split(c, cfg);
    const auto pairs = cohort::extract_pairs(c);
    const std::vector<int64_t> train_pairs = pairs_in(pairs, plan.train);
    ACWM_CHECK(!train_pairs.empty(), invalid_argument, "no transition pairs to measure");

    ParamSet params;
    Rng init_rng(derive_seed(cfg.seed, "init"));
    models::Encoder enc(cfg.model, params, "encoder.", init_rng);
    models::Projector proj(cfg.model, params, "projector.", init_rng);
    models::Predictor dyn(cfg.model, params, "predictor.", init_rng);

    std::vector<double> ratios;
    int64_t step = 0;
    for (const auto& batch : make_batches(train_pairs, cfg.batch_size, cfg.seed, 0)) {
        if (step >= steps) break;
        const Tensor slices = geometry::make_slices(
            cfg.model.latent_dim, cfg.sigreg.num_slices, cfg.seed,
            cfg.sigreg.resample_each_step ? static_cast<uint64_t>(step) : 0);
        ratios.push_back(
            pair_grad_ratio(enc, proj, dyn, params, gather_pairs(c, pairs, batch), slices, cfg));
        step++;
    }
    return ratios;
}

std::string params_sha256(const ParamSet& params, const std::string& prefix) {
    Sha256 h;
    for (const auto& e : params.entries()) {
        if (e.name.rfind(prefix, 0) != 0) continue;
        h.update(e.name.data(), e.name.size());
        h.update(e.tensor.values().data(), e.tensor.values().size() * sizeof(float));
    }
    return h.hex_digest();
}

}  // namespace acwm::train
