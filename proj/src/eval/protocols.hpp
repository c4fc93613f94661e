// Experiment protocols on top of the metrics: triage/monitoring evaluation of
// a classifier checkpoint, the low-data sweep grid, the counterfactual action
// probe, and report serialization.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cohort/cohort.hpp"
#include "core/checkpoint.hpp"
#include "train/train.hpp"

namespace acwm::eval {

struct EvalResult {
    std::string protocol;  // triage | monitoring
    double macro_auroc = 0.0;
    std::vector<double> per_class;  // NaN where a class had no pos/neg split
    double ci_low = 0.0;
    double ci_high = 0.0;
    int64_t n_bootstrap = 0;
    int64_t n_records = 0;
    int64_t n_patients = 0;

    nlohmann::json to_json() const;
    static EvalResult from_json(const nlohmann::json& j);
};

struct EvalConfig {
    std::string protocol = "triage";
    int64_t n_bootstrap = 1000;
    uint64_t seed = 1;
    int64_t batch_size = 64;
    void validate() const;
    nlohmann::json to_json() const;
    static EvalConfig from_json(const nlohmann::json& j);  // rejects unknown keys
};

// Record indices the protocol scores: the chronologically first record per
// patient for triage, every record for monitoring.
std::vector<int64_t> protocol_records(const cohort::Cohort& c, const std::string& protocol);

// Sigmoid class scores of a classifier checkpoint (encoder + classifier) over
// the given records, encoder in eval mode.
core::Tensor checkpoint_scores(const core::Checkpoint& ckpt, const cohort::Cohort& c,
                               const std::vector<int64_t>& records, int64_t batch_size);

// Macro-AUROC with a patient-level bootstrap interval on the protocol's
// record selection. The cohort must be patient-disjoint from the data the
// checkpoint was trained on; that split is the caller's contract.
EvalResult evaluate_protocol(const core::Checkpoint& ckpt, const cohort::Cohort& c,
                             const EvalConfig& cfg);

struct SweepConfig {
    std::vector<double> fractions{1.0, 0.1};
    std::vector<uint64_t> seeds{1, 2, 3};
    std::vector<std::string> protocols{"triage", "monitoring"};
    int64_t n_bootstrap = 200;
    int64_t eval_batch_size = 64;
    // Phase configurations. The pretraining model is authoritative: the
    // supervised baseline is forced onto the same architecture, and probe and
    // finetune inherit it through the pretraining checkpoint.
    train::TrainConfig pretrain;
    train::TrainConfig finetune;
    train::TrainConfig supervised;
    train::TrainConfig probe;
    void validate() const;
    nlohmann::json to_json() const;
    static SweepConfig from_json(const nlohmann::json& j);  // rejects unknown keys
};

struct SweepRow {
    double fraction = 0.0;
    std::string method;  // ours | supervised | probe
    uint64_t seed = 0;
    EvalResult result;
};

struct SweepTable {
    std::vector<SweepRow> rows;
    // fraction,method,protocol,auroc,ci_low,ci_high,seed
    void write_csv(const std::string& path) const;
    nlohmann::json to_json() const;
};

// For each fraction and seed: pretrain + finetune (ours), supervised
// baseline, linear probe, all on the same patient subsample, evaluated on the
// held-out test cohort under each protocol.
SweepTable low_data_sweep(const cohort::Cohort& train_c, const cohort::Cohort& test_c,
                          const SweepConfig& cfg);

struct CounterfactualResult {
    std::vector<float> h;            // encoder latent of the record
    std::vector<float> h_hat;        // dynamics prediction under the action
    std::vector<float> logits;       // probe logits at h_hat
    std::vector<float> logits_base;  // probe logits at h
    double displacement = 0.0;       // ||h_hat - h||
    std::vector<int64_t> neighbor_records;  // k nearest cohort latents to h_hat
    std::vector<double> neighbor_distances;
    nlohmann::json to_json() const;
};

// Pushes one record's latent through the action-conditioned dynamics and
// reads it back out through a probe classifier plus nearest cohort latents.
// The action is a per-class vector in {-1, 0, 1}.
CounterfactualResult counterfactual_apply(const core::Checkpoint& world_model,
                                          const core::Checkpoint& probe,
                                          const cohort::Cohort& c, int64_t record_index,
                                          const std::vector<int8_t>& action, int64_t k,
                                          int64_t batch_size = 64);

// Schema-versioned report over one or more results; refuses to emit nothing.
nlohmann::json make_report(const std::vector<EvalResult>& results,
                           const nlohmann::json& provenance);
void write_json(const std::string& path, const nlohmann::json& j);

}  // namespace acwm::eval
