// Command-line front end. Everything substantive happens behind the C API;
// this file is flag parsing, config assembly, and file plumbing.
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <acwm.h>

namespace {

using nlohmann::json;

[[noreturn]] void die(acwm_status st) {
    std::fprintf(stderr, "error:%s: %s\n", acwm_status_name(st), acwm_last_error());
    std::exit(static_cast<int>(st));
}

void check(acwm_status st) {
    if (st != ACWM_OK) die(st);
}

[[noreturn]] void die_usage(const std::string& msg) {
    std::fprintf(stderr, "error:invalid_argument: %s\n", msg.c_str());
    std::exit(static_cast<int>(ACWM_E_INVALID_ARGUMENT));
}

struct CohortHandle {
    acwm_cohort* p = nullptr;
    ~CohortHandle() { acwm_cohort_free(p); }
};

struct CheckpointHandle {
    acwm_checkpoint* p = nullptr;
    ~CheckpointHandle() { acwm_checkpoint_free(p); }
};

struct OwnedString {
    char* p = nullptr;
    ~OwnedString() { acwm_string_free(p); }
};

json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f.good()) die_usage("cannot read config file " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        die_usage(path + " is not valid JSON: " + std::string(e.what()));
    }
    return j;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f.good()) die_usage("cannot write " + path);
    f << text;
    if (!text.empty() && text.back() != '\n') f << '\n';
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
}

// Training flags shared by pretrain / train-supervised / probe / finetune.
// Flags the user actually passed override the config file; everything else
// falls back to library defaults.
struct TrainFlags {
    std::string config_path;
    int64_t epochs = 0, batch_size = 0, grad_ratio_stride = 0;
    double max_lr = 0.0, lambda = 0.0, clip_norm = 0.0, data_fraction = 0.0, val_fraction = 0.0;
    uint64_t seed = 0;

    CLI::Option *o_epochs, *o_batch, *o_lr, *o_lambda, *o_clip, *o_frac, *o_val, *o_seed,
        *o_stride;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file (flag overrides apply on top)");
        o_epochs = cmd->add_option("--epochs", epochs, "training epochs");
        o_batch = cmd->add_option("--batch-size", batch_size, "minibatch size");
        o_lr = cmd->add_option("--max-lr", max_lr, "peak learning rate of the one-cycle schedule");
        o_lambda = cmd->add_option("--lambda", lambda, "geometry loss weight in [0,1]");
        o_clip = cmd->add_option("--clip-norm", clip_norm, "global gradient norm threshold (0 = off)");
        o_frac = cmd->add_option("--data-fraction", data_fraction,
                                 "patient fraction to train on, in (0,1]");
        o_val = cmd->add_option("--val-fraction", val_fraction,
                                "patient fraction held out for validation");
        o_seed = cmd->add_option("--seed", seed, "run seed; controls all randomness");
        o_stride = cmd->add_option("--grad-ratio-stride", grad_ratio_stride,
                                   "steps between gradient-ratio diagnostics (0 = off)");
    }

    json to_config() const {
        json j = config_path.empty() ? json::object() : load_json_file(config_path);
        if (o_epochs->count()) j["epochs"] = epochs;
        if (o_batch->count()) j["batch_size"] = batch_size;
        if (o_lr->count()) j["max_lr"] = max_lr;
        if (o_lambda->count()) j["lambda"] = lambda;
        if (o_clip->count()) j["clip_norm"] = clip_norm;
        if (o_frac->count()) j["data_fraction"] = data_fraction;
        if (o_val->count()) j["val_fraction"] = val_fraction;
        if (o_seed->count()) j["seed"] = seed;
        if (o_stride->count()) j["grad_ratio_stride"] = grad_ratio_stride;
        return j;
    }
};

CohortHandle open_cohort(const std::string& dir) {
    CohortHandle c;
    check(acwm_cohort_open(dir.c_str(), &c.p));
    return c;
}

CheckpointHandle open_checkpoint(const std::string& path) {
    CheckpointHandle c;
    check(acwm_checkpoint_open(path.c_str(), &c.p));
    return c;
}

int64_t cohort_n_classes(const CohortHandle& c) {
    OwnedString s;
    check(acwm_cohort_stats_json(c.p, &s.p));
    // One prevalence entry per class.
    return static_cast<int64_t>(json::parse(s.p).at("prevalence").size());
}

// "+2,-0" -> per-class vector; rejects duplicates, bad signs, out-of-range.
std::vector<int8_t> parse_action(const std::string& spec, int64_t n_classes) {
    std::vector<int8_t> action(static_cast<size_t>(n_classes), 0);
    if (spec.empty()) return action;
    std::vector<bool> seen(static_cast<size_t>(n_classes), false);
    for (const std::string& tok : split_commas(spec)) {
        if (tok.size() < 2 || (tok[0] != '+' && tok[0] != '-'))
            die_usage("action token '" + tok + "' must look like +IDX or -IDX");
        int64_t idx = 0;
        for (size_t i = 1; i < tok.size(); ++i) {
            if (tok[i] < '0' || tok[i] > '9')
                die_usage("action token '" + tok + "' must look like +IDX or -IDX");
            idx = idx * 10 + (tok[i] - '0');
        }
        if (idx >= n_classes)
            die_usage("action class " + std::to_string(idx) + " out of range (cohort has " +
                      std::to_string(n_classes) + " classes)");
        if (seen[static_cast<size_t>(idx)])
            die_usage("action lists class " + std::to_string(idx) + " twice");
        seen[static_cast<size_t>(idx)] = true;
        action[static_cast<size_t>(idx)] = tok[0] == '+' ? 1 : -1;
    }
    return action;
}

void emit(const char* text, const std::string& out_path) {
    if (!out_path.empty()) write_text_file(out_path, text);
    std::printf("%s\n", text);
}

int dispatch(int argc, char** argv);

}  // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const json::exception& e) {
        std::fprintf(stderr, "error:format: %s\n", e.what());
        return static_cast<int>(ACWM_E_FORMAT);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error:internal: %s\n", e.what());
        return static_cast<int>(ACWM_E_INTERNAL);
    }
}

namespace {

int dispatch(int argc, char** argv) {
    CLI::App app{"Action-conditioned latent world models for longitudinal biosignal cohorts"};
    app.set_version_flag("--version", std::string(acwm_version()));
    app.require_subcommand(1);
    app.footer("Environment: ACWM_THREADS caps internal parallelism (0 or 1 = serial);\n"
               "results are identical for any thread count.");

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "Generate a synthetic longitudinal cohort");
    std::string synth_out, synth_config;
    int64_t sy_patients = 0, sy_channels = 0, sy_samples = 0, sy_classes = 0;
    double sy_mean_records = 0.0, sy_noise = 0.0;
    uint64_t sy_seed = 0;
    synth->add_option("--out", synth_out, "output cohort directory")->required();
    synth->add_option("--config", synth_config, "JSON config file");
    auto* o_pat = synth->add_option("--patients", sy_patients, "number of patients");
    auto* o_ch = synth->add_option("--channels", sy_channels, "waveform channels");
    auto* o_sm = synth->add_option("--samples", sy_samples, "samples per record");
    auto* o_cl = synth->add_option("--classes", sy_classes, "label classes");
    auto* o_mr = synth->add_option("--mean-records", sy_mean_records, "mean records per patient");
    auto* o_no = synth->add_option("--noise", sy_noise, "additive noise level");
    auto* o_sd = synth->add_option("--seed", sy_seed, "generator seed");

    // ---- stats ----
    auto* stats = app.add_subcommand("stats", "Describe a cohort directory");
    std::string stats_dir;
    stats->add_option("dir", stats_dir, "cohort directory")->required();

    // ---- split ----
    auto* split = app.add_subcommand("split", "Patient-level split into fold directories");
    std::string split_cohort, split_fractions = "0.8,0.2";
    std::vector<std::string> split_outs;
    uint64_t split_seed = 1;
    split->add_option("--cohort", split_cohort, "cohort directory")->required();
    split->add_option("--fractions", split_fractions, "comma list summing to 1");
    split->add_option("--out", split_outs, "one output directory per fraction")->required();
    split->add_option("--seed", split_seed, "shuffle seed");

    // ---- pretrain ----
    auto* pretrain = app.add_subcommand("pretrain", "Pretrain the latent world model");
    std::string pre_cohort, pre_out, pre_objective;
    TrainFlags pre_flags;
    pretrain->add_option("--cohort", pre_cohort, "training cohort directory")->required();
    pretrain->add_option("--out", pre_out, "output run directory")->required();
    auto* o_obj = pretrain->add_option("--objective", pre_objective,
                                       "world_model or naive_ssl");
    pre_flags.attach(pretrain);

    // ---- train-supervised ----
    auto* sup = app.add_subcommand("train-supervised", "Train the supervised baseline");
    std::string sup_cohort, sup_out;
    TrainFlags sup_flags;
    sup->add_option("--cohort", sup_cohort, "training cohort directory")->required();
    sup->add_option("--out", sup_out, "output run directory")->required();
    sup_flags.attach(sup);

    // ---- probe ----
    auto* probe = app.add_subcommand("probe", "Linear probe of a frozen encoder checkpoint");
    std::string prb_cohort, prb_out, prb_encoder;
    TrainFlags prb_flags;
    probe->add_option("--cohort", prb_cohort, "training cohort directory")->required();
    probe->add_option("--encoder", prb_encoder, "encoder checkpoint path")->required();
    probe->add_option("--out", prb_out, "output run directory")->required();
    prb_flags.attach(probe);

    // ---- finetune ----
    auto* ft = app.add_subcommand("finetune", "Finetune a pretrained encoder with a fresh head");
    std::string ft_cohort, ft_out, ft_encoder;
    TrainFlags ft_flags;
    ft->add_option("--cohort", ft_cohort, "training cohort directory")->required();
    ft->add_option("--encoder", ft_encoder, "encoder checkpoint path")->required();
    ft->add_option("--out", ft_out, "output run directory")->required();
    ft_flags.attach(ft);

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "Evaluate a classifier checkpoint on a test cohort");
    std::string ev_ckpt, ev_cohort, ev_protocol = "triage", ev_out;
    int64_t ev_bootstrap = 1000, ev_batch = 64;
    uint64_t ev_seed = 1;
    ev->add_option("--checkpoint", ev_ckpt, "classifier checkpoint path")->required();
    ev->add_option("--cohort", ev_cohort, "held-out test cohort directory")->required();
    ev->add_option("--protocol", ev_protocol, "triage or monitoring");
    ev->add_option("--bootstrap", ev_bootstrap, "bootstrap replicates");
    ev->add_option("--seed", ev_seed, "bootstrap seed");
    ev->add_option("--batch-size", ev_batch, "scoring batch size");
    ev->add_option("--out", ev_out, "also write the report JSON here");

    // ---- sweep ----
    auto* sw = app.add_subcommand("sweep", "Low-data sweep: ours vs supervised vs probe");
    std::string sw_train, sw_test, sw_out, sw_config, sw_fractions, sw_seeds, sw_protocols;
    int64_t sw_bootstrap = 0;
    sw->add_option("--train-cohort", sw_train, "training cohort directory")->required();
    sw->add_option("--test-cohort", sw_test, "held-out test cohort directory")->required();
    sw->add_option("--out", sw_out, "output directory for sweep.csv / sweep.json")->required();
    sw->add_option("--config", sw_config, "sweep config JSON file (phase configs live here)");
    auto* o_fr = sw->add_option("--fractions", sw_fractions, "comma list, e.g. 1.0,0.1,0.01");
    auto* o_se = sw->add_option("--seeds", sw_seeds, "comma list, e.g. 1,2,3");
    auto* o_pr = sw->add_option("--protocols", sw_protocols, "comma list of protocols");
    auto* o_bs = sw->add_option("--bootstrap", sw_bootstrap, "bootstrap replicates per cell");

    // ---- counterfactual ----
    auto* cf = app.add_subcommand("counterfactual",
                                  "Apply an action to one record's latent and read the probe");
    std::string cf_wm, cf_probe, cf_cohort, cf_action, cf_out;
    int64_t cf_record = 0, cf_k = 5;
    cf->add_option("--world-model", cf_wm, "world-model checkpoint path")->required();
    cf->add_option("--probe", cf_probe, "probe checkpoint path")->required();
    cf->add_option("--cohort", cf_cohort, "cohort directory")->required();
    cf->add_option("--record", cf_record, "record index")->required();
    cf->add_option("--action", cf_action, "action spec like \"+2,-0\" (empty = no change)");
    cf->add_option("--k", cf_k, "nearest cohort latents to report");
    cf->add_option("--out", cf_out, "also write the result JSON here");

    // ---- gradcheck ----
    auto* gc = app.add_subcommand("gradcheck", "Run the gradient verification suite");
    int64_t gc_seeds = 20;
    uint64_t gc_base = 1;
    double gc_tol = 1e-3;
    std::string gc_out;
    gc->add_option("--seeds", gc_seeds, "number of seeds");
    gc->add_option("--seed", gc_base, "base seed");
    gc->add_option("--tolerance", gc_tol, "max relative error allowed");
    gc->add_option("--out", gc_out, "also write the outcome JSON here");

    // ---- grad-ratio ----
    auto* gr = app.add_subcommand("grad-ratio",
                                  "Encoder gradient-norm ratio of the two loss terms");
    std::string gr_cohort;
    int64_t gr_steps = 10;
    TrainFlags gr_flags;
    gr->add_option("--cohort", gr_cohort, "cohort directory")->required();
    gr->add_option("--steps", gr_steps, "batches to measure");
    gr_flags.attach(gr);

    CLI11_PARSE(app, argc, argv);

    if (synth->parsed()) {
        json cfg = synth_config.empty() ? json::object() : load_json_file(synth_config);
        if (o_pat->count()) cfg["n_patients"] = sy_patients;
        if (o_ch->count()) cfg["channels"] = sy_channels;
        if (o_sm->count()) cfg["samples"] = sy_samples;
        if (o_cl->count()) cfg["n_classes"] = sy_classes;
        if (o_mr->count()) cfg["mean_records"] = sy_mean_records;
        if (o_no->count()) cfg["noise_level"] = sy_noise;
        if (o_sd->count()) cfg["seed"] = sy_seed;
        CohortHandle c;
        check(acwm_synth_generate(cfg.dump().c_str(), &c.p));
        check(acwm_cohort_write(c.p, synth_out.c_str()));
        OwnedString stats_json;
        check(acwm_cohort_stats_json(c.p, &stats_json.p));
        const json prov = {{"op", "synth"}, {"config", cfg}, {"stats", json::parse(stats_json.p)}};
        write_text_file(synth_out + "/provenance.json", prov.dump(2));
        std::fprintf(stderr, "wrote cohort to %s\n", synth_out.c_str());
        return 0;
    }

    if (stats->parsed()) {
        CohortHandle c = open_cohort(stats_dir);
        OwnedString s;
        check(acwm_cohort_stats_json(c.p, &s.p));
        std::printf("%s\n", s.p);
        return 0;
    }

    if (split->parsed()) {
        std::vector<double> fr;
        for (const auto& t : split_commas(split_fractions)) fr.push_back(std::stod(t));
        if (fr.size() != split_outs.size())
            die_usage("need exactly one --out per fraction (" + std::to_string(fr.size()) +
                      " fractions, " + std::to_string(split_outs.size()) + " outputs)");
        CohortHandle c = open_cohort(split_cohort);
        for (size_t i = 0; i < fr.size(); ++i) {
            CohortHandle fold;
            check(acwm_cohort_split(c.p, fr.data(), fr.size(), split_seed, i, &fold.p));
            check(acwm_cohort_write(fold.p, split_outs[i].c_str()));
            std::fprintf(stderr, "wrote fold %zu to %s\n", i, split_outs[i].c_str());
        }
        return 0;
    }

    if (pretrain->parsed()) {
        json cfg = pre_flags.to_config();
        if (o_obj->count()) cfg["objective"] = pre_objective;
        CohortHandle c = open_cohort(pre_cohort);
        OwnedString prov;
        std::fprintf(stderr, "pretraining into %s ...\n", pre_out.c_str());
        check(acwm_pretrain(c.p, cfg.dump().c_str(), pre_out.c_str(), &prov.p));
        std::printf("%s\n", prov.p);
        return 0;
    }

    if (sup->parsed()) {
        json cfg = sup_flags.to_config();
        cfg["objective"] = "supervised";
        CohortHandle c = open_cohort(sup_cohort);
        OwnedString prov;
        std::fprintf(stderr, "training supervised baseline into %s ...\n", sup_out.c_str());
        check(acwm_train_supervised(c.p, cfg.dump().c_str(), sup_out.c_str(), &prov.p));
        std::printf("%s\n", prov.p);
        return 0;
    }

    if (probe->parsed()) {
        json cfg = prb_flags.to_config();
        cfg["objective"] = "supervised";
        CohortHandle c = open_cohort(prb_cohort);
        CheckpointHandle enc = open_checkpoint(prb_encoder);
        OwnedString prov;
        std::fprintf(stderr, "probing into %s ...\n", prb_out.c_str());
        check(acwm_probe(c.p, enc.p, cfg.dump().c_str(), prb_out.c_str(), &prov.p));
        std::printf("%s\n", prov.p);
        return 0;
    }

    if (ft->parsed()) {
        json cfg = ft_flags.to_config();
        cfg["objective"] = "supervised";
        CohortHandle c = open_cohort(ft_cohort);
        CheckpointHandle enc = open_checkpoint(ft_encoder);
        OwnedString prov;
        std::fprintf(stderr, "finetuning into %s ...\n", ft_out.c_str());
        check(acwm_finetune(c.p, enc.p, cfg.dump().c_str(), ft_out.c_str(), &prov.p));
        std::printf("%s\n", prov.p);
        return 0;
    }

    if (ev->parsed()) {
        const json cfg = {{"protocol", ev_protocol},
                          {"n_bootstrap", ev_bootstrap},
                          {"seed", ev_seed},
                          {"batch_size", ev_batch}};
        CheckpointHandle ckpt = open_checkpoint(ev_ckpt);
        CohortHandle c = open_cohort(ev_cohort);
        OwnedString report;
        check(acwm_evaluate(ckpt.p, c.p, cfg.dump().c_str(), &report.p));
        emit(report.p, ev_out);
        return 0;
    }

    if (sw->parsed()) {
        json cfg = sw_config.empty() ? json::object() : load_json_file(sw_config);
        if (o_fr->count()) {
            std::vector<double> v;
            for (const auto& t : split_commas(sw_fractions)) v.push_back(std::stod(t));
            cfg["fractions"] = v;
        }
        if (o_se->count()) {
            std::vector<uint64_t> v;
            for (const auto& t : split_commas(sw_seeds)) v.push_back(std::stoull(t));
            cfg["seeds"] = v;
        }
        if (o_pr->count()) cfg["protocols"] = split_commas(sw_protocols);
        if (o_bs->count()) cfg["n_bootstrap"] = sw_bootstrap;
        CohortHandle train_c = open_cohort(sw_train);
        CohortHandle test_c = open_cohort(sw_test);
        OwnedString table;
        std::fprintf(stderr, "sweeping into %s ...\n", sw_out.c_str());
        check(acwm_sweep(train_c.p, test_c.p, cfg.dump().c_str(), sw_out.c_str(), &table.p));
        std::printf("%s\n", table.p);
        return 0;
    }

    if (cf->parsed()) {
        CohortHandle c = open_cohort(cf_cohort);
        const std::vector<int8_t> action = parse_action(cf_action, cohort_n_classes(c));
        CheckpointHandle wm = open_checkpoint(cf_wm);
        CheckpointHandle pr = open_checkpoint(cf_probe);
        OwnedString out;
        check(acwm_counterfactual(wm.p, pr.p, c.p, cf_record, action.data(), action.size(),
                                  cf_k, &out.p));
        emit(out.p, cf_out);
        return 0;
    }

    if (gc->parsed()) {
        OwnedString out;
        check(acwm_gradcheck(gc_base, gc_seeds, gc_tol, &out.p));
        emit(out.p, gc_out);
        const json j = json::parse(out.p);
        for (const auto& row : j.at("checks"))
            if (!row.at("pass").get<bool>())
                std::fprintf(stderr, "FAIL %s seed=%llu rel=%g\n",
                             row.at("name").get<std::string>().c_str(),
                             static_cast<unsigned long long>(row.at("seed").get<uint64_t>()),
                             row.at("max_rel_err").get<double>());
        if (!j.at("all_pass").get<bool>()) {
            std::fprintf(stderr, "error:numeric: gradient verification failed\n");
            return static_cast<int>(ACWM_E_NUMERIC);
        }
        return 0;
    }

    if (gr->parsed()) {
        json cfg = gr_flags.to_config();
        CohortHandle c = open_cohort(gr_cohort);
        OwnedString out;
        check(acwm_grad_ratio(c.p, cfg.dump().c_str(), gr_steps, &out.p));
        std::printf("%s\n", out.p);
        return 0;
    }

    return 0;
}

}  // namespace
