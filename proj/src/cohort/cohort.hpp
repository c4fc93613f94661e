// Longitudinal cohort storage and the synthetic generator used for desk-scale
// experiments. A cohort is a flat directory: manifest.json, waveforms.bin
// (little-endian f32, record-major), records.csv. The blob is checksummed so
// silent truncation or corruption is caught at load time.
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "core/tensor.hpp"

namespace acwm::cohort {

using core::Tensor;

struct CohortRecord {
    int64_t record_id = 0;
    int64_t patient_id = 0;
    int64_t order_index = 0;          // chronological rank within the patient
    int64_t waveform_offset = 0;      // element offset into the blob
    std::vector<uint8_t> labels;      // multi-hot, size n_classes
};

struct Cohort {
    int64_t channels = 0;
    int64_t samples = 0;
    std::vector<std::string> classes;
    std::vector<CohortRecord> records;
    std::vector<float> blob;  // [n_records * channels * samples]

    int64_t n_classes() const { return static_cast<int64_t>(classes.size()); }
    int64_t n_records() const { return static_cast<int64_t>(records.size()); }
    int64_t n_patients() const;
    // Sorted record indices per patient, chronological within each patient.
    std::unordered_map<int64_t, std::vector<int64_t>> by_patient() const;
    void validate() const;
};

void write_cohort(const std::string& dir, const Cohort& c);
Cohort read_cohort(const std::string& dir);

// One consecutive exam pair of a patient. Waveforms stay in the cohort blob;
// the pair stores record indices plus the label delta.
struct TransitionPair {
    int64_t patient_id = 0;
    int64_t t_index = 0;     // index into cohort.records
    int64_t next_index = 0;
    std::vector<int8_t> action;  // y_next - y_t, entries in {-1, 0, 1}
};

// Each patient with r records yields exactly r-1 pairs, in order.
std::vector<TransitionPair> extract_pairs(const Cohort& c);

struct CohortStats {
    int64_t n_patients = 0;
    int64_t n_records = 0;
    int64_t n_pairs = 0;
    int64_t n_stable_pairs = 0;   // action identically zero
    int64_t n_changed_pairs = 0;
    // Jaccard of the two label sets, both-empty counted as 1.0. Ten uniform
    // bins over [0, 1]; exact 1.0 lands in the top bin.
    std::vector<int64_t> jaccard_hist = std::vector<int64_t>(10, 0);
    std::vector<int64_t> action_l1_hist;  // over changed pairs, index = L1 magnitude
    std::vector<double> prevalence;       // per-class label frequency over records

    nlohmann::json to_json() const;
};

CohortStats cohort_stats(const Cohort& c);

struct SynthConfig {
    int64_t n_patients = 100;
    int64_t channels = 12;
    int64_t samples = 1000;   // 100 samples/second nominal
    int64_t n_classes = 4;
    // Per-class Markov dynamics; patients enter healthy and transition once
    // before their first record. Chronic classes never resolve.
    std::vector<float> onset_prob;       // defaults to 0.10 each
    std::vector<float> resolution_prob;  // defaults to 0.25 each
    std::vector<uint8_t> chronic;        // defaults to class 1 chronic
    double mean_records = 5.0;           // 1 + geometric
    float noise_level = 0.05f;
    uint64_t seed = 1;

    void finalize();  // fills per-class defaults, then validates

    nlohmann::json to_json() const;
    static SynthConfig from_json(const nlohmann::json& j);  // rejects unknown keys
};

// Pulse-train waveforms with per-patient anatomy. Active classes apply fixed
// morphological effects: 0 doubles pulse width, 1 adds a 5 Hz oscillation,
// 2 offsets the segment after each pulse, 3 multiplies the rate by 1.5.
// Classes beyond the fourth evolve as labels but leave the waveform alone.
Cohort synth_generate(SynthConfig cfg);

// Shuffles patients with the given seed and partitions them by fractions
// (must sum to 1). Every record of a patient lands in exactly one fold.
std::vector<std::vector<int64_t>> patient_split(const Cohort& c,
                                                const std::vector<double>& fractions,
                                                uint64_t seed);

// Deterministic subset of round(fraction * n) patients, at least one.
std::vector<int64_t> subsample_patients(const std::vector<int64_t>& patients, double fraction,
                                        uint64_t seed);

// New cohort holding only the given patients' records (blob compacted,
// order preserved). Used for fold materialization and low-data subsets.
Cohort filter_cohort(const Cohort& c, const std::vector<int64_t>& patient_ids);

// Batch assembly for training/eval.
Tensor waveform_batch(const Cohort& c, const std::vector<int64_t>& record_indices);
Tensor label_batch(const Cohort& c, const std::vector<int64_t>& record_indices);
Tensor action_batch(const std::vector<TransitionPair>& pairs,
                    const std::vector<int64_t>& pair_indices, int64_t n_classes);

}  // namespace acwm::cohort
