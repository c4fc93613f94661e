#include "acwm.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "cohort/cohort.hpp"
#include "core/checkpoint.hpp"
#include "eval/protocols.hpp"
#include "train/train.hpp"
#include "util/error.hpp"
#include "util/sha256.hpp"
#include "verify/verify.hpp"

struct acwm_cohort {
    acwm::cohort::Cohort impl;
};

struct acwm_checkpoint {
    acwm::core::Checkpoint impl;
    std::string path;
    std::string file_sha256;
};

namespace {

thread_local std::string t_last_error;

acwm_status to_status(acwm::ErrorCategory cat) {
    using C = acwm::ErrorCategory;
    switch (cat) {
        case C::invalid_argument: return ACWM_E_INVALID_ARGUMENT;
        case C::io: return ACWM_E_IO;
        case C::format: return ACWM_E_FORMAT;
        case C::numeric: return ACWM_E_NUMERIC;
        case C::not_found: return ACWM_E_NOT_FOUND;
        case C::state: return ACWM_E_STATE;
        case C::internal: return ACWM_E_INTERNAL;
    }
    return ACWM_E_INTERNAL;
}

template <typename F>
acwm_status guard(F&& fn) {
    try {
        fn();
        t_last_error.clear();
        return ACWM_OK;
    } catch (const acwm::Error& e) {
        t_last_error = e.what();
        return to_status(e.category());
    } catch (const nlohmann::json::exception& e) {
        t_last_error = e.what();
        return ACWM_E_FORMAT;
    } catch (const std::bad_alloc&) {
        t_last_error = "out of memory";
        return ACWM_E_INTERNAL;
    } catch (const std::exception& e) {
        t_last_error = e.what();
        return ACWM_E_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.data(), s.size() + 1);
    return p;
}

void require(bool cond, const char* what) {
    ACWM_CHECK(cond, invalid_argument, std::string(what) + " must not be null");
}

nlohmann::json parse_json(const char* text, const char* what) {
    require(text != nullptr, what);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        acwm::raise(acwm::ErrorCategory::format,
                    std::string(what) + " is not valid JSON: " + e.what());
    }
}

// Shared epilogue of the four trainers: artifacts into out_dir, provenance
// out through the boundary.
void finish_training(const acwm::train::TrainResult& res, const char* out_dir,
                     char** out_provenance_json) {
    require(out_dir != nullptr, "out_dir");
    std::filesystem::create_directories(out_dir);
    const std::string dir(out_dir);
    acwm::core::save_checkpoint(dir + "/checkpoint.ckpt", res.params,
                                res.provenance.at("config"), res.provenance);
    res.log.write_csv(dir + "/steps.csv");
    if (!res.log.vals.empty()) res.log.write_val_csv(dir + "/val.csv");
    acwm::eval::write_json(dir + "/provenance.json", res.provenance);
    if (out_provenance_json) *out_provenance_json = dup_string(res.provenance.dump(2));
}

nlohmann::json cohort_fingerprint(const acwm::cohort::Cohort& c) {
    return {{"n_patients", c.n_patients()},
            {"n_records", c.n_records()},
            {"blob_sha256", acwm::sha256_hex(c.blob.data(), c.blob.size() * sizeof(float))}};
}

}  // namespace

extern "C" {

const char* acwm_version(void) { return "1.0.0"; }

const char* acwm_status_name(acwm_status status) {
    switch (status) {
        case ACWM_OK: return "ok";
        case ACWM_E_INVALID_ARGUMENT: return "invalid_argument";
        case ACWM_E_IO: return "io";
        case ACWM_E_FORMAT: return "format";
        case ACWM_E_NUMERIC: return "numeric";
        case ACWM_E_NOT_FOUND: return "not_found";
        case ACWM_E_STATE: return "state";
        case ACWM_E_INTERNAL: return "internal";
    }
    return "internal";
}

const char* acwm_last_error(void) { return t_last_error.c_str(); }

void acwm_string_free(char* s) { std::free(s); }

acwm_status acwm_synth_generate(const char* config_json, acwm_cohort** out) {
    return guard([&] {
        require(out != nullptr, "out");
        const auto cfg = acwm::cohort::SynthConfig::from_json(parse_json(config_json, "config"));
        auto handle = std::make_unique<acwm_cohort>();
        handle->impl = acwm::cohort::synth_generate(cfg);
        *out = handle.release();
    });
}

acwm_status acwm_cohort_open(const char* dir, acwm_cohort** out) {
    return guard([&] {
        require(dir != nullptr, "dir");
        require(out != nullptr, "out");
        auto handle = std::make_unique<acwm_cohort>();
        handle->impl = acwm::cohort::read_cohort(dir);
        *out = handle.release();
    });
}

acwm_status acwm_cohort_write(const acwm_cohort* c, const char* dir) {
    return guard([&] {
        require(c != nullptr, "cohort");
        require(dir != nullptr, "dir");
        acwm::cohort::write_cohort(dir, c->impl);
    });
}

acwm_status acwm_cohort_stats_json(const acwm_cohort* c, char** out_json) {
    return guard([&] {
        require(c != nullptr, "cohort");
        require(out_json != nullptr, "out_json");
        *out_json = dup_string(acwm::cohort::cohort_stats(c->impl).to_json().dump(2));
    });
}

acwm_status acwm_cohort_split(const acwm_cohort* c, const double* fractions, size_t n_fractions,
                              uint64_t seed, size_t fold_index, acwm_cohort** out) {
    return guard([&] {
        require(c != nullptr, "cohort");
        require(fractions != nullptr, "fractions");
        require(out != nullptr, "out");
        ACWM_CHECK(fold_index < n_fractions, invalid_argument, "fold_index out of range");
        const std::vector<double> fr(fractions, fractions + n_fractions);
        const auto folds = acwm::cohort::patient_split(c->impl, fr, seed);
        auto handle = std::make_unique<acwm_cohort>();
        handle->impl = acwm::cohort::filter_cohort(c->impl, folds[fold_index]);
        *out = handle.release();
    });
}

void acwm_cohort_free(acwm_cohort* c) { delete c; }

acwm_status acwm_checkpoint_open(const char* path, acwm_checkpoint** out) {
    return guard([&] {
        require(path != nullptr, "path");
        require(out != nullptr, "out");
        auto handle = std::make_unique<acwm_checkpoint>();
        handle->impl = acwm::core::load_checkpoint(path);
        handle->path = path;
        handle->file_sha256 = acwm::sha256_file_hex(path);
        *out = handle.release();
    });
}

acwm_status acwm_checkpoint_info_json(const acwm_checkpoint* ckpt, char** out_json) {
    return guard([&] {
        require(ckpt != nullptr, "checkpoint");
        require(out_json != nullptr, "out_json");
        nlohmann::json params = nlohmann::json::array();
        size_t total = 0;
        for (const auto& e : ckpt->impl.entries) {
            params.push_back(
                {{"name", e.name}, {"shape", e.shape}, {"trainable", e.trainable}});
            total += e.values.size();
        }
        const nlohmann::json info = {{"path", ckpt->path},
                                     {"file_sha256", ckpt->file_sha256},
                                     {"n_parameters", total},
                                     {"params", params},
                                     {"config", ckpt->impl.config},
                                     {"meta", ckpt->impl.meta}};
        *out_json = dup_string(info.dump(2));
    });
}

void acwm_checkpoint_free(acwm_checkpoint* ckpt) { delete ckpt; }

acwm_status acwm_pretrain(const acwm_cohort* c, const char* config_json, const char* out_dir,
                          char** out_provenance_json) {
    return guard([&] {
        require(c != nullptr, "cohort");
        const auto cfg = acwm::train::TrainConfig::from_json(parse_json(config_json, "config"));
        finish_training(acwm::train::pretrain_world_model(c->impl, cfg), out_dir,
                        out_provenance_json);
    });
}

acwm_status acwm_train_supervised(const acwm_cohort* c, const char* config_json,
                                  const char* out_dir, char** out_provenance_json) {
    return guard([&] {
        require(c != nullptr, "cohort");
        auto cfg = acwm::train::TrainConfig::from_json(parse_json(config_json, "config"));
        finish_training(acwm::train::train_supervised(c->impl, cfg), out_dir,
                        out_provenance_json);
    });
}

acwm_status acwm_probe(const acwm_cohort* c, const acwm_checkpoint* encoder,
                       const char* config_json, const char* out_dir,
                       char** out_provenance_json) {
    return guard([&] {
        require(c != nullptr, "cohort");
        require(encoder != nullptr, "encoder checkpoint");
        const auto cfg = acwm::train::TrainConfig::from_json(parse_json(config_json, "config"));
        auto res = acwm::train::linear_probe(c->impl, encoder->impl, cfg);
        res.provenance["encoder_checkpoint_sha256"] = encoder->file_sha256;
        finish_training(res, out_dir, out_provenance_json);
    });
}

acwm_status acwm_finetune(const acwm_cohort* c, const acwm_checkpoint* encoder,
                          const char* config_json, const char* out_dir,
                          char** out_provenance_json) {
    return guard([&] {
        require(c != nullptr, "cohort");
        require(encoder != nullptr, "encoder checkpoint");
        const auto cfg = acwm::train::TrainConfig::from_json(parse_json(config_json, "config"));
        auto res = acwm::train::finetune(c->impl, encoder->impl, cfg);
        res.provenance["encoder_checkpoint_sha256"] = encoder->file_sha256;
        finish_training(res, out_dir, out_provenance_json);
    });
}

acwm_status acwm_evaluate(const acwm_checkpoint* ckpt, const acwm_cohort* test,
                          const char* eval_config_json, char** out_report_json) {
    return guard([&] {
        require(ckpt != nullptr, "checkpoint");
        require(test != nullptr, "test cohort");
        require(out_report_json != nullptr, "out_report_json");
        const nlohmann::json cfg_j = parse_json(eval_config_json, "eval config");
        const auto cfg = acwm::eval::EvalConfig::from_json(cfg_j);
        const auto result = acwm::eval::evaluate_protocol(ckpt->impl, test->impl, cfg);
        const nlohmann::json provenance = {
            {"checkpoint_sha256", ckpt->file_sha256},
            {"checkpoint_path", ckpt->path},
            {"eval_config", cfg.to_json()},
            {"eval_config_sha256", acwm::sha256_hex(cfg.to_json().dump())},
            {"cohort", cohort_fingerprint(test->impl)}};
        *out_report_json = dup_string(acwm::eval::make_report({result}, provenance).dump(2));
    });
}

acwm_status acwm_sweep(const acwm_cohort* train, const acwm_cohort* test,
                       const char* sweep_config_json, const char* out_dir,
                       char** out_table_json) {
    return guard([&] {
        require(train != nullptr, "train cohort");
        require(test != nullptr, "test cohort");
        require(out_dir != nullptr, "out_dir");
        const nlohmann::json cfg_j = parse_json(sweep_config_json, "sweep config");
        const auto cfg = acwm::eval::SweepConfig::from_json(cfg_j);
        const auto table = acwm::eval::low_data_sweep(train->impl, test->impl, cfg);
        std::filesystem::create_directories(out_dir);
        const std::string dir(out_dir);
        table.write_csv(dir + "/sweep.csv");
        nlohmann::json out = table.to_json();
        out["provenance"] = {{"sweep_config", cfg.to_json()},
                             {"sweep_config_sha256", acwm::sha256_hex(cfg.to_json().dump())},
                             {"train_cohort", cohort_fingerprint(train->impl)},
                             {"test_cohort", cohort_fingerprint(test->impl)}};
        acwm::eval::write_json(dir + "/sweep.json", out);
        if (out_table_json) *out_table_json = dup_string(out.dump(2));
    });
}

acwm_status acwm_counterfactual(const acwm_checkpoint* world_model, const acwm_checkpoint* probe,
                                const acwm_cohort* c, int64_t record_index, const int8_t* action,
                                size_t action_len, int64_t k, char** out_json) {
    return guard([&] {
        require(world_model != nullptr, "world model checkpoint");
        require(probe != nullptr, "probe checkpoint");
        require(c != nullptr, "cohort");
        require(action != nullptr, "action");
        require(out_json != nullptr, "out_json");
        const std::vector<int8_t> a(action, action + action_len);
        auto res =
            acwm::eval::counterfactual_apply(world_model->impl, probe->impl, c->impl,
                                             record_index, a, k);
        nlohmann::json j = res.to_json();
        j["record_index"] = record_index;
        j["action"] = a;
        j["provenance"] = {{"world_model_sha256", world_model->file_sha256},
                           {"probe_sha256", probe->file_sha256},
                           {"cohort", cohort_fingerprint(c->impl)}};
        *out_json = dup_string(j.dump(2));
    });
}

acwm_status acwm_grad_ratio(const acwm_cohort* c, const char* config_json, int64_t steps,
                            char** out_json) {
    return guard([&] {
        require(c != nullptr, "cohort");
        require(out_json != nullptr, "out_json");
        const auto cfg = acwm::train::TrainConfig::from_json(parse_json(config_json, "config"));
        const auto ratios = acwm::train::grad_ratio_diagnostic(c->impl, cfg, steps);
        // Raw ratio of encoder gradient norms; the loss-weighted ratio scales
        // by (1 - lambda) / lambda.
        const double w = (1.0 - cfg.lambda) / cfg.lambda;
        nlohmann::json rows = nlohmann::json::array();
        for (size_t i = 0; i < ratios.size(); ++i)
            rows.push_back({{"step", i},
                            {"ratio_raw", ratios[i]},
                            {"ratio_weighted", ratios[i] * w}});
        const nlohmann::json j = {{"schema_version", 1},
                                  {"lambda", cfg.lambda},
                                  {"steps", rows}};
        *out_json = dup_string(j.dump(2));
    });
}

acwm_status acwm_gradcheck(uint64_t base_seed, int64_t n_seeds, double tolerance,
                           char** out_json) {
    return guard([&] {
        require(out_json != nullptr, "out_json");
        const auto outcomes = acwm::verify::gradient_suite(base_seed, n_seeds, tolerance);
        *out_json = dup_string(acwm::verify::outcomes_json(outcomes).dump(2));
    });
}

}  // extern "C"
