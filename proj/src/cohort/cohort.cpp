#include "cohort/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "core/checkpoint.hpp"
#include "util/error.hpp"
#include "util/rng.hpp"
#include "util/sha256.hpp"

namespace acwm::cohort {

namespace fs = std::filesystem;

int64_t Cohort::n_patients() const {
    std::set<int64_t> ids;
    for (const auto& r : records) ids.insert(r.patient_id);
    return static_cast<int64_t>(ids.size());
}

std::unordered_map<int64_t, std::vector<int64_t>> Cohort::by_patient() const {
    std::unordered_map<int64_t, std::vector<int64_t>> m;
    for (int64_t i = 0; i < n_records(); ++i) m[records[i].patient_id].push_back(i);
    for (auto& [pid, idx] : m) {
        std::sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
            return records[a].order_index < records[b].order_index;
        });
        for (size_t k = 1; k < idx.size(); ++k) {
            int64_t prev = records[idx[k - 1]].order_index;
            int64_t cur = records[idx[k]].order_index;
            ACWM_CHECK(cur != prev, format,
                       "duplicate order_index " + std::to_string(cur) + " for patient " +
                           std::to_string(pid));
            ACWM_CHECK(cur == prev + 1, format,
                       "order_index gap for patient " + std::to_string(pid));
        }
    }
    return m;
}

void Cohort::validate() const {
    ACWM_CHECK(channels > 0 && samples > 0, format, "cohort has empty waveform dims");
    const int64_t elems = channels * samples;
    ACWM_CHECK(static_cast<int64_t>(blob.size()) == n_records() * elems, format,
               "blob size does not match record count");
    for (int64_t i = 0; i < n_records(); ++i) {
        const auto& r = records[i];
        ACWM_CHECK(r.waveform_offset == i * elems, format, "records out of blob order");
        ACWM_CHECK(static_cast<int64_t>(r.labels.size()) == n_classes(), format,
                   "label vector length mismatch");
        for (uint8_t y : r.labels)
            ACWM_CHECK(y == 0 || y == 1, format, "labels must be multi-hot");
    }
    by_patient();  // order_index checks
}

namespace {

std::string labels_field(const std::vector<uint8_t>& y) {
    std::string out;
    for (size_t c = 0; c < y.size(); ++c) {
        if (!y[c]) continue;
        if (!out.empty()) out += '|';
        out += std::to_string(c);
    }
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

int64_t parse_i64(const std::string& s, const char* what) {
    try {
        size_t pos = 0;
        int64_t v = std::stoll(s, &pos);
        ACWM_CHECK(pos == s.size(), format, std::string("bad integer in ") + what);
        return v;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        raise(ErrorCategory::format, std::string("bad integer in ") + what);
    }
}

}  // namespace

void write_cohort(const std::string& dir, const Cohort& c) {
    core::check_little_endian();
    c.validate();
    fs::create_directories(dir);

    {
        std::ofstream f(fs::path(dir) / "waveforms.bin", std::ios::binary | std::ios::trunc);
        ACWM_CHECK(f.good(), io, "cannot open waveforms.bin for writing");
        if (!c.blob.empty())
            f.write(reinterpret_cast<const char*>(c.blob.data()),
                    static_cast<std::streamsize>(c.blob.size() * sizeof(float)));
        ACWM_CHECK(f.good(), io, "failed writing waveforms.bin");
    }

    nlohmann::json manifest{
        {"version", 1},
        {"channels", c.channels},
        {"samples", c.samples},
        {"classes", c.classes},
        {"n_patients", c.n_patients()},
        {"n_records", c.n_records()},
        {"blob_sha256", sha256_hex(c.blob.data(), c.blob.size() * sizeof(float))},
    };
    {
        std::ofstream f(fs::path(dir) / "manifest.json", std::ios::trunc);
        ACWM_CHECK(f.good(), io, "cannot open manifest.json for writing");
        f << manifest.dump(2) << "\n";
    }

    {
        std::ofstream f(fs::path(dir) / "records.csv", std::ios::trunc);
        ACWM_CHECK(f.good(), io, "cannot open records.csv for writing");
        f << "record_id,patient_id,order,labels\n";
        for (const auto& r : c.records)
            f << r.record_id << ',' << r.patient_id << ',' << r.order_index << ','
              << labels_field(r.labels) << '\n';
        ACWM_CHECK(f.good(), io, "failed writing records.csv");
    }
}

Cohort read_cohort(const std::string& dir) {
    core::check_little_endian();
    const fs::path base(dir);
    std::ifstream mf(base / "manifest.json");
    ACWM_CHECK(mf.good(), io, "cannot open " + (base / "manifest.json").string());
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCategory::format, std::string("manifest.json: ") + e.what());
    }
    ACWM_CHECK(manifest.value("version", 0) == 1, format, "unsupported cohort version");

    Cohort c;
    try {
        c.channels = manifest.at("channels").get<int64_t>();
        c.samples = manifest.at("samples").get<int64_t>();
        c.classes = manifest.at("classes").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCategory::format, std::string("manifest.json: ") + e.what());
    }
    const int64_t n_records = manifest.value("n_records", int64_t{-1});
    ACWM_CHECK(c.channels > 0 && c.samples > 0 && n_records >= 0, format,
               "manifest dims invalid");

    {
        const fs::path blob_path = base / "waveforms.bin";
        std::ifstream bf(blob_path, std::ios::binary | std::ios::ate);
        ACWM_CHECK(bf.good(), io, "cannot open " + blob_path.string());
        const int64_t bytes = static_cast<int64_t>(bf.tellg());
        const int64_t want = n_records * c.channels * c.samples *
                             static_cast<int64_t>(sizeof(float));
        ACWM_CHECK(bytes == want, format,
                   "waveforms.bin truncated or mismatched: " + std::to_string(bytes) +
                       " bytes, manifest implies " + std::to_string(want));
        c.blob.resize(static_cast<size_t>(n_records * c.channels * c.samples));
        bf.seekg(0);
        if (!c.blob.empty())
            bf.read(reinterpret_cast<char*>(c.blob.data()), bytes);
        ACWM_CHECK(bf.good(), io, "failed reading waveforms.bin");
        const std::string digest = sha256_hex(c.blob.data(), static_cast<size_t>(bytes));
        ACWM_CHECK(digest == manifest.value("blob_sha256", ""), format,
                   "waveforms.bin checksum mismatch");
    }

    {
        std::ifstream rf(base / "records.csv");
        ACWM_CHECK(rf.good(), io, "cannot open " + (base / "records.csv").string());
        std::string line;
        ACWM_CHECK(std::getline(rf, line) && line == "record_id,patient_id,order,labels",
                   format, "records.csv header mismatch");
        const int64_t elems = c.channels * c.samples;
        while (std::getline(rf, line)) {
            if (line.empty()) continue;
            auto fields = split_csv_line(line);
            ACWM_CHECK(fields.size() == 4, format, "records.csv row has wrong field count");
            CohortRecord r;
            r.record_id = parse_i64(fields[0], "record_id");
            r.patient_id = parse_i64(fields[1], "patient_id");
            r.order_index = parse_i64(fields[2], "order");
            r.waveform_offset = static_cast<int64_t>(c.records.size()) * elems;
            r.labels.assign(c.classes.size(), 0);
            if (!fields[3].empty()) {
                std::stringstream ss(fields[3]);
                std::string tok;
                while (std::getline(ss, tok, '|')) {
                    int64_t cls = parse_i64(tok, "labels");
                    ACWM_CHECK(cls >= 0 && cls < c.n_classes(), format,
                               "label class index out of range");
                    r.labels[static_cast<size_t>(cls)] = 1;
                }
            }
            c.records.push_back(std::move(r));
        }
        ACWM_CHECK(c.n_records() == n_records, format,
                   "records.csv row count does not match manifest");
    }

    const int64_t n_patients = manifest.value("n_patients", int64_t{-1});
    ACWM_CHECK(c.n_patients() == n_patients, format,
               "manifest n_patients does not match records.csv");
    c.validate();
    return c;
}

std::vector<TransitionPair> extract_pairs(const Cohort& c) {
    auto groups = c.by_patient();
    // Deterministic output order: by patient id, then chronological.
    std::vector<int64_t> pids;
    pids.reserve(groups.size());
    for (const auto& [pid, _] : groups) pids.push_back(pid);
    std::sort(pids.begin(), pids.end());

    std::vector<TransitionPair> pairs;
    for (int64_t pid : pids) {
        const auto& idx = groups[pid];
        for (size_t k = 0; k + 1 < idx.size(); ++k) {
            TransitionPair p;
            p.patient_id = pid;
            p.t_index = idx[k];
            p.next_index = idx[k + 1];
            const auto& yt = c.records[static_cast<size_t>(p.t_index)].labels;
            const auto& yn = c.records[static_cast<size_t>(p.next_index)].labels;
            p.action.resize(yt.size());
            for (size_t j = 0; j < yt.size(); ++j)
                p.action[j] = static_cast<int8_t>(static_cast<int>(yn[j]) - static_cast<int>(yt[j]));
            pairs.push_back(std::move(p));
        }
    }
    return pairs;
}

nlohmann::json CohortStats::to_json() const {
    return {
        {"n_patients", n_patients},
        {"n_records", n_records},
        {"n_pairs", n_pairs},
        {"n_stable_pairs", n_stable_pairs},
        {"n_changed_pairs", n_changed_pairs},
        {"jaccard_hist", jaccard_hist},
        {"action_l1_hist", action_l1_hist},
        {"prevalence", prevalence},
    };
}

CohortStats cohort_stats(const Cohort& c) {
    c.validate();
    CohortStats s;
    s.n_patients = c.n_patients();
    s.n_records = c.n_records();
    s.prevalence.assign(static_cast<size_t>(c.n_classes()), 0.0);
    s.action_l1_hist.assign(static_cast<size_t>(c.n_classes()) + 1, 0);
    for (const auto& r : c.records)
        for (size_t j = 0; j < r.labels.size(); ++j) s.prevalence[j] += r.labels[j];
    if (s.n_records > 0)
        for (double& p : s.prevalence) p /= static_cast<double>(s.n_records);

    auto pairs = extract_pairs(c);
    s.n_pairs = static_cast<int64_t>(pairs.size());
    for (const auto& p : pairs) {
        const auto& yt = c.records[static_cast<size_t>(p.t_index)].labels;
        const auto& yn = c.records[static_cast<size_t>(p.next_index)].labels;
        int64_t l1 = 0, inter = 0, uni = 0;
        for (size_t j = 0; j < yt.size(); ++j) {
            l1 += std::abs(static_cast<int>(p.action[j]));
            inter += yt[j] & yn[j];
            uni += yt[j] | yn[j];
        }
        const double jac = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
        const int bin = std::min(static_cast<int>(jac * 10.0), 9);
        s.jaccard_hist[static_cast<size_t>(bin)]++;
        if (l1 == 0) {
            s.n_stable_pairs++;
        } else {
            s.n_changed_pairs++;
            s.action_l1_hist[static_cast<size_t>(l1)]++;
        }
    }
    return s;
}

void SynthConfig::finalize() {
    ACWM_CHECK(n_patients >= 1 && channels >= 1 && samples >= 8 && n_classes >= 1,
               invalid_argument, "synth config dims invalid");
    ACWM_CHECK(mean_records >= 1.0, invalid_argument, "mean_records must be >= 1");
    ACWM_CHECK(noise_level >= 0.0f, invalid_argument, "noise_level must be >= 0");
    const size_t C = static_cast<size_t>(n_classes);
    if (onset_prob.empty()) onset_prob.assign(C, 0.10f);
    if (resolution_prob.empty()) resolution_prob.assign(C, 0.25f);
    if (chronic.empty()) {
        chronic.assign(C, 0);
        if (C > 1) chronic[1] = 1;  // flutter analog persists once it appears
    }
    ACWM_CHECK(onset_prob.size() == C && resolution_prob.size() == C && chronic.size() == C,
               invalid_argument, "per-class synth vectors must have n_classes entries");
    for (size_t j = 0; j < C; ++j) {
        ACWM_CHECK(onset_prob[j] >= 0.0f && onset_prob[j] <= 1.0f, invalid_argument,
                   "onset_prob out of [0,1]");
        ACWM_CHECK(resolution_prob[j] >= 0.0f && resolution_prob[j] <= 1.0f, invalid_argument,
                   "resolution_prob out of [0,1]");
        if (chronic[j]) resolution_prob[j] = 0.0f;
    }
}

nlohmann::json SynthConfig::to_json() const {
    return {{"n_patients", n_patients},
            {"channels", channels},
            {"samples", samples},
            {"n_classes", n_classes},
            {"onset_prob", onset_prob},
            {"resolution_prob", resolution_prob},
            {"chronic", chronic},
            {"mean_records", mean_records},
            {"noise_level", noise_level},
            {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
    static const char* allowed[] = {"n_patients", "channels",     "samples",
                                    "n_classes",  "onset_prob",   "resolution_prob",
                                    "chronic",    "mean_records", "noise_level",
                                    "seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        ACWM_CHECK(ok, format, "unknown key '" + it.key() + "' in synth config");
    }
    SynthConfig cfg;
    try {
        cfg.n_patients = j.value("n_patients", cfg.n_patients);
        cfg.channels = j.value("channels", cfg.channels);
        cfg.samples = j.value("samples", cfg.samples);
        cfg.n_classes = j.value("n_classes", cfg.n_classes);
        cfg.onset_prob = j.value("onset_prob", cfg.onset_prob);
        cfg.resolution_prob = j.value("resolution_prob", cfg.resolution_prob);
        cfg.chronic = j.value("chronic", cfg.chronic);
        cfg.mean_records = j.value("mean_records", cfg.mean_records);
        cfg.noise_level = j.value("noise_level", cfg.noise_level);
        cfg.seed = j.value("seed", cfg.seed);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCategory::format, std::string("synth config: ") + e.what());
    }
    return cfg;
}

namespace {

struct Anatomy {
    double rate_hz;
    double width_s;
    double flutter_phase;
    std::vector<double> amp;  // per channel
};

Anatomy draw_anatomy(uint64_t seed, int64_t patient, int64_t channels) {
    Rng rng(derive_seed(seed, "anatomy", static_cast<uint64_t>(patient)));
    Anatomy a;
    a.rate_hz = rng.uniform(0.9, 1.5);
    a.width_s = rng.uniform(0.04, 0.07);
    a.flutter_phase = rng.uniform(0.0, 6.283185307179586);
    a.amp.resize(static_cast<size_t>(channels));
    for (double& v : a.amp) v = rng.uniform(0.5, 1.5);
    return a;
}

void render_waveform(const Anatomy& anat, const std::vector<uint8_t>& labels, float noise_level,
                     Rng& noise_rng, int64_t channels, int64_t samples, float* out) {
    constexpr double kFs = 100.0;  // samples per second
    const double duration = static_cast<double>(samples) / kFs;
    const bool wide = labels.size() > 0 && labels[0];
    const bool flutter = labels.size() > 1 && labels[1];
    const bool segment = labels.size() > 2 && labels[2];
    const bool fast = labels.size() > 3 && labels[3];

    const double rate = anat.rate_hz * (fast ? 1.5 : 1.0);
    const double w = anat.width_s * (wide ? 2.0 : 1.0);

    std::vector<double> centers;
    for (int64_t k = 0;; ++k) {
        const double t = (static_cast<double>(k) + 0.5) / rate;
        if (t >= duration) break;
        centers.push_back(t);
    }

    // Shared single-channel profile; channels differ by amplitude only.
    std::vector<double> profile(static_cast<size_t>(samples), 0.0);
    for (double tc : centers) {
        const int64_t lo = std::max<int64_t>(0, static_cast<int64_t>((tc - 4.0 * w) * kFs));
        const int64_t hi = std::min<int64_t>(samples, static_cast<int64_t>((tc + 4.0 * w) * kFs) + 1);
        for (int64_t i = lo; i < hi; ++i) {
            const double dt = static_cast<double>(i) / kFs - tc;
            profile[static_cast<size_t>(i)] += std::exp(-dt * dt / (2.0 * w * w));
        }
        if (segment) {
            const double s0 = tc + 1.5 * w;
            const int64_t a = std::min<int64_t>(samples, static_cast<int64_t>(s0 * kFs) + 1);
            const int64_t b = std::min<int64_t>(samples, static_cast<int64_t>((s0 + 0.12) * kFs) + 1);
            for (int64_t i = a; i < b; ++i) profile[static_cast<size_t>(i)] += 0.3;
        }
    }
    if (flutter) {
        for (int64_t i = 0; i < samples; ++i)
            profile[static_cast<size_t>(i)] +=
                0.3 * std::sin(6.283185307179586 * 5.0 * (static_cast<double>(i) / kFs) +
                               anat.flutter_phase);
    }

    for (int64_t ch = 0; ch < channels; ++ch) {
        const double amp = anat.amp[static_cast<size_t>(ch)];
        float* row = out + ch * samples;
        for (int64_t i = 0; i < samples; ++i)
            row[i] = static_cast<float>(amp * profile[static_cast<size_t>(i)] +
                                        noise_level * noise_rng.normal());
    }
}

}  // namespace

Cohort synth_generate(SynthConfig cfg) {
    cfg.finalize();
    Cohort c;
    c.channels = cfg.channels;
    c.samples = cfg.samples;
    static const char* kCodes[4] = {"I44", "I48", "I21", "I47"};
    for (int64_t j = 0; j < cfg.n_classes; ++j)
        c.classes.push_back(j < 4 ? kCodes[j]
                                  : "X" + std::string(j < 10 ? "0" : "") + std::to_string(j));

    const int64_t elems = cfg.channels * cfg.samples;
    int64_t record_id = 0;
    for (int64_t p = 0; p < cfg.n_patients; ++p) {
        Anatomy anat = draw_anatomy(cfg.seed, p, cfg.channels);
        Rng lab_rng(derive_seed(cfg.seed, "labels", static_cast<uint64_t>(p)));

        // 1 + geometric, inverted from a uniform draw; mean cfg.mean_records.
        int64_t n_rec = 1;
        if (cfg.mean_records > 1.0) {
            const double q = 1.0 / cfg.mean_records;
            const double u = std::max(lab_rng.uniform01(), 1e-12);
            n_rec += static_cast<int64_t>(std::floor(std::log(u) / std::log(1.0 - q)));
            n_rec = std::min<int64_t>(n_rec, static_cast<int64_t>(8.0 * cfg.mean_records));
        }

        std::vector<uint8_t> state(static_cast<size_t>(cfg.n_classes), 0);
        for (int64_t r = 0; r < n_rec; ++r) {
            for (int64_t j = 0; j < cfg.n_classes; ++j) {
                auto& y = state[static_cast<size_t>(j)];
                const double u = lab_rng.uniform01();
                if (y)
                    y = u < cfg.resolution_prob[static_cast<size_t>(j)] ? 0 : 1;
                else
                    y = u < cfg.onset_prob[static_cast<size_t>(j)] ? 1 : 0;
            }
            CohortRecord rec;
            rec.record_id = record_id;
            rec.patient_id = p;
            rec.order_index = r;
            rec.waveform_offset = record_id * elems;
            rec.labels = state;
            c.blob.resize(static_cast<size_t>((record_id + 1) * elems));
            Rng noise_rng(derive_seed(cfg.seed, "noise", static_cast<uint64_t>(record_id)));
            render_waveform(anat, state, cfg.noise_level, noise_rng, cfg.channels, cfg.samples,
                            c.blob.data() + rec.waveform_offset);
            c.records.push_back(std::move(rec));
            record_id++;
        }
    }
    return c;
}

std::vector<std::vector<int64_t>> patient_split(const Cohort& c,
                                                const std::vector<double>& fractions,
                                                uint64_t seed) {
    ACWM_CHECK(!fractions.empty(), invalid_argument, "no fold fractions given");
    double sum = 0.0;
    for (double f : fractions) {
        ACWM_CHECK(f > 0.0, invalid_argument, "fold fractions must be positive");
        sum += f;
    }
    ACWM_CHECK(std::abs(sum - 1.0) < 1e-9, invalid_argument, "fold fractions must sum to 1");

    std::set<int64_t> ids;
    for (const auto& r : c.records) ids.insert(r.patient_id);
    std::vector<int64_t> pids(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, "patient-split"));
    rng.shuffle(pids);

    const double n = static_cast<double>(pids.size());
    std::vector<std::vector<int64_t>> folds(fractions.size());
    double cum = 0.0;
    size_t start = 0;
    for (size_t k = 0; k < fractions.size(); ++k) {
        cum += fractions[k];
        const size_t end = k + 1 == fractions.size()
                               ? pids.size()
                               : static_cast<size_t>(std::llround(cum * n));
        ACWM_CHECK(end > start, invalid_argument,
                   "fold " + std::to_string(k) + " is empty; cohort too small");
        folds[k].assign(pids.begin() + static_cast<std::ptrdiff_t>(start),
                        pids.begin() + static_cast<std::ptrdiff_t>(end));
        std::sort(folds[k].begin(), folds[k].end());
        start = end;
    }
    return folds;
}

std::vector<int64_t> subsample_patients(const std::vector<int64_t>& patients, double fraction,
                                        uint64_t seed) {
    ACWM_CHECK(fraction > 0.0 && fraction <= 1.0, invalid_argument,
               "subsample fraction must be in (0, 1]");
    ACWM_CHECK(!patients.empty(), invalid_argument, "cannot subsample an empty patient set");
    std::vector<int64_t> pool(patients);
    std::sort(pool.begin(), pool.end());
    Rng rng(derive_seed(seed, "subsample"));
    rng.shuffle(pool);
    const size_t keep = std::max<size_t>(
        1, static_cast<size_t>(std::llround(fraction * static_cast<double>(pool.size()))));
    pool.resize(std::min(keep, pool.size()));
    std::sort(pool.begin(), pool.end());
    return pool;
}

Cohort filter_cohort(const Cohort& c, const std::vector<int64_t>& patient_ids) {
    std::set<int64_t> keep(patient_ids.begin(), patient_ids.end());
    Cohort out;
    out.channels = c.channels;
    out.samples = c.samples;
    out.classes = c.classes;
    const int64_t elems = c.channels * c.samples;
    for (const auto& r : c.records) {
        if (!keep.count(r.patient_id)) continue;
        CohortRecord nr = r;
        nr.waveform_offset = out.n_records() * elems;
        out.blob.insert(out.blob.end(), c.blob.begin() + r.waveform_offset,
                        c.blob.begin() + r.waveform_offset + elems);
        out.records.push_back(std::move(nr));
    }
    return out;
}

Tensor waveform_batch(const Cohort& c, const std::vector<int64_t>& record_indices) {
    ACWM_CHECK(!record_indices.empty(), invalid_argument, "empty batch");
    const int64_t elems = c.channels * c.samples;
    Tensor out = Tensor::zeros({static_cast<int64_t>(record_indices.size()), c.channels, c.samples});
    for (size_t b = 0; b < record_indices.size(); ++b) {
        const int64_t i = record_indices[b];
        ACWM_CHECK(i >= 0 && i < c.n_records(), invalid_argument, "record index out of range");
        std::memcpy(out.data() + static_cast<int64_t>(b) * elems,
                    c.blob.data() + c.records[static_cast<size_t>(i)].waveform_offset,
                    static_cast<size_t>(elems) * sizeof(float));
    }
    return out;
}

Tensor label_batch(const Cohort& c, const std::vector<int64_t>& record_indices) {
    ACWM_CHECK(!record_indices.empty(), invalid_argument, "empty batch");
    Tensor out = Tensor::zeros({static_cast<int64_t>(record_indices.size()), c.n_classes()});
    for (size_t b = 0; b < record_indices.size(); ++b) {
        const int64_t i = record_indices[b];
        ACWM_CHECK(i >= 0 && i < c.n_records(), invalid_argument, "record index out of range");
        const auto& y = c.records[static_cast<size_t>(i)].labels;
        for (size_t j = 0; j < y.size(); ++j)
            out.data()[b * y.size() + j] = static_cast<float>(y[j]);
    }
    return out;
}

Tensor action_batch(const std::vector<TransitionPair>& pairs,
                    const std::vector<int64_t>& pair_indices, int64_t n_classes) {
    ACWM_CHECK(!pair_indices.empty(), invalid_argument, "empty batch");
    Tensor out = Tensor::zeros({static_cast<int64_t>(pair_indices.size()), n_classes});
    for (size_t b = 0; b < pair_indices.size(); ++b) {
        const int64_t i = pair_indices[b];
        ACWM_CHECK(i >= 0 && i < static_cast<int64_t>(pairs.size()), invalid_argument,
                   "pair index out of range");
        const auto& a = pairs[static_cast<size_t>(i)].action;
        ACWM_CHECK(static_cast<int64_t>(a.size()) == n_classes, invalid_argument,
                   "action length mismatch");
        for (size_t j = 0; j < a.size(); ++j)
            out.data()[b * a.size() + j] = static_cast<float>(a[j]);
    }
    return out;
}

}  // namespace acwm::cohort
