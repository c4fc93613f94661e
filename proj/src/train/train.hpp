// The four training procedures: world-model pretraining (with the naive
// invariance ablation), the supervised end-to-end baseline, linear probing of
// a frozen encoder, and full finetuning. Everything is deterministic given
// (cohort, config): model init, batch order, slice sampling and validation
// splits all derive their streams from the config seed.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cohort/cohort.hpp"
#include "core/checkpoint.hpp"
#include "core/params.hpp"
#include "geometry/geometry.hpp"
#include "models/models.hpp"
#include "objectives/objectives.hpp"

namespace acwm::train {

struct TrainConfig {
    std::string objective = "world_model";  // world_model | naive_ssl | supervised
    int64_t epochs = 10;
    int64_t batch_size = 64;  // 512 at full scale
    double max_lr = 1e-3;     // dynamics default; supervised paths want 1e-4
    float lambda = 0.05f;
    geometry::SigregConfig sigreg;
    double clip_norm = 0.0;  // global-norm threshold; 0 disables
    uint64_t seed = 1;
    double data_fraction = 1.0;  // patient subsample, applied before splitting
    double val_fraction = 0.1;   // of training patients, 0 disables validation
    int64_t grad_ratio_stride = 10;  // steps between diagnostics, 0 disables
    objectives::AsymmetricLossCfg asl;
    models::ModelConfig model;

    void validate() const;
    nlohmann::json to_json() const;
    // Strict: unknown keys are rejected, missing keys keep defaults.
    static TrainConfig from_json(const nlohmann::json& j);
};

struct RunLog {
    struct StepRow {
        int64_t step = 0;
        double lr = 0.0;
        double loss_total = 0.0;
        double loss_pred = 0.0;   // 0 for supervised objectives
        double loss_reg = 0.0;    // 0 for supervised objectives
        double grad_ratio = 0.0;  // last strided diagnostic value, 0 before the first
        double grad_norm = 0.0;   // post-clip global norm actually applied
    };
    struct ValRow {
        int64_t epoch = 0;
        double metric = 0.0;  // pretraining: weighted val loss; else macro-AUROC
    };
    std::vector<StepRow> steps;
    std::vector<ValRow> vals;

    // step,lr,loss_total,loss_pred,loss_reg,grad_ratio,grad_norm
    void write_csv(const std::string& path) const;
    // epoch,val_metric
    void write_val_csv(const std::string& path) const;
};

struct TrainResult {
    core::ParamSet params;  // trained weights and buffers
    RunLog log;
    nlohmann::json provenance;  // config echo, seeds, input content hashes
};

// Pretrains encoder + projector + predictor on transition pairs with the
// world-model objective, or its action-blind ablation when cfg.objective is
// naive_ssl. Errors when the cohort yields no pairs or the loss diverges.
TrainResult pretrain_world_model(const cohort::Cohort& c, const TrainConfig& cfg);

// Encoder + classifier trained end to end with the asymmetric loss.
TrainResult train_supervised(const cohort::Cohort& c, const TrainConfig& cfg);

// Trains a linear classifier on frozen encoder features (eval mode, features
// precomputed once per record). The encoder weights are loaded from the
// checkpoint, kept in the result for self-contained evaluation, and asserted
// bitwise unchanged via content hash.
TrainResult linear_probe(const cohort::Cohort& c, const core::Checkpoint& encoder_ckpt,
                         const TrainConfig& cfg);

// Loads the encoder and updates all weights (plus a fresh classifier) under
// the asymmetric loss.
TrainResult finetune(const cohort::Cohort& c, const core::Checkpoint& encoder_ckpt,
                     const TrainConfig& cfg);

// Raw gradient-magnitude ratio ||grad L_pred|| / ||grad L_reg|| measured over
// encoder parameters on the first `steps` batches of epoch 0, without
// updating any weights. The weighted ratio under the (1-lambda)/lambda mixing
// is raw * (1-lambda)/lambda; tune lambda until that is about 1. A zero
// regularizer gradient reports an infinite ratio. Requires 0 < lambda < 1.
std::vector<double> grad_ratio_diagnostic(const cohort::Cohort& c, const TrainConfig& cfg,
                                          int64_t steps);

// Content hash of the values of all entries whose name starts with `prefix`.
std::string params_sha256(const core::ParamSet& params, const std::string& prefix);

}  // namespace acwm::train
