/*
 * C interface to the action-conditioned waveform world-model library.
 *
 * Conventions:
 *   - Every fallible call returns an acwm_status; ACWM_OK is 0.
 *   - On failure, acwm_last_error() returns a thread-local message that stays
 *     valid until the next API call on the same thread.
 *   - Out-parameters are written only on success.
 *   - Strings returned through char** out-parameters are heap-allocated;
 *     release them with acwm_string_free().
 *   - Handles are opaque; release them with the matching *_free() call.
 *     Passing NULL to a *_free() is a no-op.
 *   - Configuration crosses the boundary as UTF-8 JSON. Unknown keys are
 *     rejected; missing keys fall back to documented defaults.
 *   - The ACWM_THREADS environment variable caps internal parallelism
 *     (0 or 1 = serial). Results are identical for any thread count.
 */
#ifndef ACWM_H
#define ACWM_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum acwm_status {
    ACWM_OK = 0,
    ACWM_E_INVALID_ARGUMENT = 1,
    ACWM_E_IO = 2,
    ACWM_E_FORMAT = 3,
    ACWM_E_NUMERIC = 4,
    ACWM_E_NOT_FOUND = 5,
    ACWM_E_STATE = 6,
    ACWM_E_INTERNAL = 7
} acwm_status;

typedef struct acwm_cohort acwm_cohort;
typedef struct acwm_checkpoint acwm_checkpoint;

const char* acwm_version(void);
const char* acwm_status_name(acwm_status status);
const char* acwm_last_error(void);
void acwm_string_free(char* s);

/* ---- cohorts ------------------------------------------------------- */

/* Generates a synthetic cohort. Config keys: n_patients, channels, samples,
 * n_classes, onset_prob, resolution_prob, chronic, mean_records, noise_level,
 * seed. */
acwm_status acwm_synth_generate(const char* config_json, acwm_cohort** out);

/* Loads a cohort directory (manifest.json, waveforms.bin, records.csv). */
acwm_status acwm_cohort_open(const char* dir, acwm_cohort** out);

/* Writes the cohort as a directory; creates it if needed. */
acwm_status acwm_cohort_write(const acwm_cohort* c, const char* dir);

/* Descriptive statistics as JSON (patients, records, pairs, labels, action
 * histogram). */
acwm_status acwm_cohort_stats_json(const acwm_cohort* c, char** out_json);

/* Deterministic patient-level split; returns fold `fold_index` of the
 * partition defined by `fractions` (must sum to 1). */
acwm_status acwm_cohort_split(const acwm_cohort* c, const double* fractions, size_t n_fractions,
                              uint64_t seed, size_t fold_index, acwm_cohort** out);

void acwm_cohort_free(acwm_cohort* c);

/* ---- checkpoints ---------------------------------------------------- */

acwm_status acwm_checkpoint_open(const char* path, acwm_checkpoint** out);

/* Manifest summary: parameter names/shapes, config echo, provenance, file
 * hash. */
acwm_status acwm_checkpoint_info_json(const acwm_checkpoint* ckpt, char** out_json);

void acwm_checkpoint_free(acwm_checkpoint* ckpt);

/* ---- training ------------------------------------------------------- */
/* Each trainer writes checkpoint.ckpt, steps.csv, val.csv (when a validation
 * fold exists), and provenance.json into out_dir, and returns the provenance
 * JSON. Training configuration keys: objective, epochs, batch_size, max_lr,
 * lambda, sigreg{num_slices, resample_each_step}, clip_norm, seed,
 * data_fraction, val_fraction, grad_ratio_stride, asl{gamma_pos, gamma_neg,
 * margin}, model{...}. */

acwm_status acwm_pretrain(const acwm_cohort* c, const char* config_json, const char* out_dir,
                          char** out_provenance_json);

acwm_status acwm_train_supervised(const acwm_cohort* c, const char* config_json,
                                  const char* out_dir, char** out_provenance_json);

/* Linear probe of a frozen encoder checkpoint; the model architecture is read
 * from the checkpoint, not the config. */
acwm_status acwm_probe(const acwm_cohort* c, const acwm_checkpoint* encoder,
                       const char* config_json, const char* out_dir,
                       char** out_provenance_json);

acwm_status acwm_finetune(const acwm_cohort* c, const acwm_checkpoint* encoder,
                          const char* config_json, const char* out_dir,
                          char** out_provenance_json);

/* ---- evaluation ------------------------------------------------------ */

/* Macro-AUROC with a patient-level bootstrap interval. Eval config keys:
 * protocol (triage|monitoring), n_bootstrap, seed, batch_size. Returns a
 * schema-versioned report with provenance hashes. */
acwm_status acwm_evaluate(const acwm_checkpoint* ckpt, const acwm_cohort* test,
                          const char* eval_config_json, char** out_report_json);

/* Low-data grid: pretrain+finetune / supervised / probe per (fraction, seed),
 * evaluated on the held-out test cohort. Writes sweep.csv and sweep.json into
 * out_dir and returns the table JSON. */
acwm_status acwm_sweep(const acwm_cohort* train, const acwm_cohort* test,
                       const char* sweep_config_json, const char* out_dir,
                       char** out_table_json);

/* Pushes one record's latent through the action-conditioned dynamics; action
 * entries are per-class in {-1, 0, 1}. Returns latents, probe logits, the
 * displacement, and the k nearest cohort latents. */
acwm_status acwm_counterfactual(const acwm_checkpoint* world_model, const acwm_checkpoint* probe,
                                const acwm_cohort* c, int64_t record_index, const int8_t* action,
                                size_t action_len, int64_t k, char** out_json);

/* ---- diagnostics ------------------------------------------------------ */

/* Per-batch encoder gradient-norm ratio (prediction term / geometry term) at
 * initialization, without weight updates. */
acwm_status acwm_grad_ratio(const acwm_cohort* c, const char* config_json, int64_t steps,
                            char** out_json);

/* Finite-difference gradient verification across seeds; JSON lists each check
 * with its max relative error. */
acwm_status acwm_gradcheck(uint64_t base_seed, int64_t n_seeds, double tolerance,
                           char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* ACWM_H */
