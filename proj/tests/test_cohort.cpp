#include <doctest.h>
#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "cohort/cohort.hpp"
#include "util/error.hpp"

using namespace acwm;
using namespace acwm::cohort;

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("acwm_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

SynthConfig small_cfg(uint64_t seed, int64_t patients = 20) {
    SynthConfig cfg;
    cfg.n_patients = patients;
    cfg.channels = 2;
    cfg.samples = 64;
    cfg.seed = seed;
    return cfg;
}

// Hand-built cohort: one patient, given label history, constant waveforms.
Cohort label_history_cohort(const std::vector<std::vector<uint8_t>>& history, int64_t n_classes) {
    Cohort c;
    c.channels = 1;
    c.samples = 8;
    for (int64_t j = 0; j < n_classes; ++j) c.classes.push_back("K" + std::to_string(j));
    for (size_t r = 0; r < history.size(); ++r) {
        CohortRecord rec;
        rec.record_id = static_cast<int64_t>(r);
        rec.patient_id = 7;
        rec.order_index = static_cast<int64_t>(r);
        rec.waveform_offset = static_cast<int64_t>(r) * 8;
        rec.labels = history[r];
        c.records.push_back(rec);
        for (int i = 0; i < 8; ++i) c.blob.push_back(static_cast<float>(r) + 0.125f * i);
    }
    return c;
}

bool same_cohort(const Cohort& a, const Cohort& b) {
    if (a.channels != b.channels || a.samples != b.samples || a.classes != b.classes) return false;
    if (a.n_records() != b.n_records() || a.blob.size() != b.blob.size()) return false;
    if (!a.blob.empty() &&
        std::memcmp(a.blob.data(), b.blob.data(), a.blob.size() * sizeof(float)) != 0)
        return false;
    for (int64_t i = 0; i < a.n_records(); ++i) {
        const auto& x = a.records[i];
        const auto& y = b.records[i];
        if (x.record_id != y.record_id || x.patient_id != y.patient_id ||
            x.order_index != y.order_index || x.waveform_offset != y.waveform_offset ||
            x.labels != y.labels)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("synthetic cohort round-trips bitwise through the directory format") {
    Cohort c = synth_generate(small_cfg(11, 3));
    TempDir dir("roundtrip");
    write_cohort(dir.str(), c);
    CHECK(fs::exists(dir.path / "manifest.json"));
    CHECK(fs::exists(dir.path / "waveforms.bin"));
    CHECK(fs::exists(dir.path / "records.csv"));
    Cohort back = read_cohort(dir.str());
    CHECK(same_cohort(c, back));
}

TEST_CASE("empty cohort is a valid directory with all-zero stats") {
    Cohort c;
    c.channels = 2;
    c.samples = 16;
    c.classes = {"I44", "I48"};
    TempDir dir("empty");
    write_cohort(dir.str(), c);
    CHECK(fs::file_size(dir.path / "waveforms.bin") == 0);
    Cohort back = read_cohort(dir.str());
    CHECK(back.n_records() == 0);
    CohortStats s = cohort_stats(back);
    CHECK(s.n_patients == 0);
    CHECK(s.n_records == 0);
    CHECK(s.n_pairs == 0);
    CHECK(s.n_stable_pairs == 0);
    CHECK(s.n_changed_pairs == 0);
}

TEST_CASE("single corrupted blob byte is caught by the manifest checksum") {
    Cohort c = synth_generate(small_cfg(12, 2));
    TempDir dir("corrupt");
    write_cohort(dir.str(), c);
    {
        std::fstream f(dir.path / "waveforms.bin",
                       std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(17);
        char b;
        f.seekg(17);
        f.read(&b, 1);
        b = static_cast<char>(b ^ 0x01);
        f.seekp(17);
        f.write(&b, 1);
    }
    CHECK_THROWS_WITH_AS(read_cohort(dir.str()), doctest::Contains("checksum"), Error);
}

TEST_CASE("blob truncation and manifest count mismatch are rejected") {
    Cohort c = synth_generate(small_cfg(13, 2));
    TempDir dir("trunc");
    write_cohort(dir.str(), c);
    const auto blob_path = dir.path / "waveforms.bin";
    fs::resize_file(blob_path, fs::file_size(blob_path) - 4);
    CHECK_THROWS_WITH_AS(read_cohort(dir.str()), doctest::Contains("truncated"), Error);
}

TEST_CASE("records.csv header is part of the contract") {
    Cohort c = synth_generate(small_cfg(14, 2));
    TempDir dir("header");
    write_cohort(dir.str(), c);
    std::ifstream in(dir.path / "records.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "record_id,patient_id,order,labels");
}

TEST_CASE("three records of one patient yield the two consecutive pairs in order") {
    Cohort c = label_history_cohort({{0, 0}, {1, 0}, {1, 1}}, 2);
    auto pairs = extract_pairs(c);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].t_index == 0);
    CHECK(pairs[0].next_index == 1);
    CHECK(pairs[1].t_index == 1);
    CHECK(pairs[1].next_index == 2);
    CHECK(pairs[0].action == std::vector<int8_t>{1, 0});
    CHECK(pairs[1].action == std::vector<int8_t>{0, 1});
}

TEST_CASE("singleton patients contribute no pairs") {
    Cohort c = label_history_cohort({{0}}, 1);
    CHECK(extract_pairs(c).empty());
}

TEST_CASE("duplicate or gapped order_index is rejected") {
    Cohort c = label_history_cohort({{0}, {0}}, 1);
    c.records[1].order_index = 0;
    CHECK_THROWS_WITH_AS(extract_pairs(c), doctest::Contains("duplicate"), Error);
    c.records[1].order_index = 2;
    CHECK_THROWS_WITH_AS(extract_pairs(c), doctest::Contains("gap"), Error);
}

TEST_CASE("pair count and action alphabet hold on a generated cohort") {
    Cohort c = synth_generate(small_cfg(21, 40));
    auto pairs = extract_pairs(c);
    CHECK(static_cast<int64_t>(pairs.size()) == c.n_records() - c.n_patients());
    for (const auto& p : pairs) {
        const auto& yt = c.records[p.t_index].labels;
        const auto& yn = c.records[p.next_index].labels;
        CHECK(c.records[p.t_index].patient_id == p.patient_id);
        CHECK(c.records[p.next_index].patient_id == p.patient_id);
        CHECK(c.records[p.next_index].order_index == c.records[p.t_index].order_index + 1);
        for (size_t j = 0; j < yt.size(); ++j) {
            CHECK(p.action[j] == static_cast<int>(yn[j]) - static_cast<int>(yt[j]));
            CHECK(std::abs(static_cast<int>(p.action[j])) <= 1);
        }
    }
}

TEST_CASE("stats on the onset-of-I44-atop-I48 pair") {
    // y_t = {I48}, y_next = {I44, I48}: one shared label of two total.
    Cohort c = label_history_cohort({{0, 1}, {1, 1}}, 2);
    CohortStats s = cohort_stats(c);
    CHECK(s.n_pairs == 1);
    CHECK(s.n_stable_pairs == 0);
    CHECK(s.n_changed_pairs == 1);
    CHECK(s.action_l1_hist[1] == 1);
    CHECK(s.jaccard_hist[5] == 1);  // Jaccard 0.5
    CHECK(s.prevalence[0] == doctest::Approx(0.5));
    CHECK(s.prevalence[1] == doctest::Approx(1.0));
}

TEST_CASE("identical labels make a stable pair with Jaccard 1") {
    Cohort c = label_history_cohort({{1, 0}, {1, 0}}, 2);
    CohortStats s = cohort_stats(c);
    CHECK(s.n_stable_pairs == 1);
    CHECK(s.jaccard_hist[9] == 1);
    // Both-empty label sets count as maximally similar too.
    Cohort e = label_history_cohort({{0, 0}, {0, 0}}, 2);
    CHECK(cohort_stats(e).jaccard_hist[9] == 1);
}

TEST_CASE("zero onset probability forces an all-stable healthy cohort") {
    SynthConfig cfg = small_cfg(31, 30);
    cfg.onset_prob.assign(4, 0.0f);
    Cohort c = synth_generate(cfg);
    CohortStats s = cohort_stats(c);
    CHECK(s.n_pairs > 0);
    CHECK(s.n_stable_pairs == s.n_pairs);
    for (double p : s.prevalence) CHECK(p == 0.0);
}

TEST_CASE("generator is bitwise deterministic in the seed") {
    Cohort a = synth_generate(small_cfg(42, 6));
    Cohort b = synth_generate(small_cfg(42, 6));
    CHECK(same_cohort(a, b));
    Cohort d = synth_generate(small_cfg(43, 6));
    CHECK_FALSE(same_cohort(a, d));
}

TEST_CASE("chronic class persists after onset") {
    SynthConfig cfg = small_cfg(55, 60);
    cfg.onset_prob = {0.3f, 0.3f, 0.3f, 0.3f};
    cfg.resolution_prob = {0.5f, 0.5f, 0.5f, 0.5f};  // class 1 forced to 0 (chronic)
    Cohort c = synth_generate(cfg);
    int64_t onsets_seen = 0;
    for (const auto& [pid, idx] : c.by_patient()) {
        bool active = false;
        for (int64_t i : idx) {
            const bool now = c.records[i].labels[1] == 1;
            if (active) CHECK(now);  // never resolves
            if (now && !active) onsets_seen++;
            active = active || now;
        }
    }
    CHECK(onsets_seen > 10);
}

TEST_CASE("empirical onset frequency concentrates around the configured rate") {
    SynthConfig cfg;
    cfg.n_patients = 2500;
    cfg.channels = 1;
    cfg.samples = 8;
    cfg.seed = 77;
    Cohort c = synth_generate(cfg);
    auto pairs = extract_pairs(c);
    REQUIRE(pairs.size() > 8000);
    for (int64_t cls = 0; cls < 4; ++cls) {
        int64_t opportunities = 0, onsets = 0;
        for (const auto& p : pairs) {
            if (c.records[p.t_index].labels[cls] != 0) continue;
            opportunities++;
            if (p.action[cls] == 1) onsets++;
        }
        REQUIRE(opportunities > 1000);
        const double p_hat = static_cast<double>(onsets) / opportunities;
        const double p = 0.10;
        const double se = std::sqrt(p * (1.0 - p) / opportunities);
        INFO("class ", cls, " p_hat ", p_hat, " over ", opportunities);
        CHECK(std::abs(p_hat - p) <= 3.0 * se);
    }
}

TEST_CASE("stats are invariant to patient block order") {
    Cohort c = synth_generate(small_cfg(61, 8));
    // Reassemble with patients in reverse id order.
    Cohort r;
    r.channels = c.channels;
    r.samples = c.samples;
    r.classes = c.classes;
    const int64_t elems = c.channels * c.samples;
    for (int64_t pid = 7; pid >= 0; --pid) {
        for (const auto& rec : c.records) {
            if (rec.patient_id != pid) continue;
            CohortRecord nr = rec;
            nr.waveform_offset = r.n_records() * elems;
            r.blob.insert(r.blob.end(), c.blob.begin() + rec.waveform_offset,
                          c.blob.begin() + rec.waveform_offset + elems);
            r.records.push_back(nr);
        }
    }
    CohortStats a = cohort_stats(c);
    CohortStats b = cohort_stats(r);
    CHECK(a.to_json() == b.to_json());
}

TEST_CASE("patient split is leakage-free and exhaustive") {
    Cohort c = synth_generate(small_cfg(71, 25));
    auto folds = patient_split(c, {0.8, 0.2}, 1337);
    REQUIRE(folds.size() == 2);
    std::set<int64_t> seen;
    for (const auto& fold : folds)
        for (int64_t pid : fold) CHECK(seen.insert(pid).second);  // no double assignment
    CHECK(static_cast<int64_t>(seen.size()) == c.n_patients());
    CHECK(folds[0].size() == 20);
    CHECK(folds[1].size() == 5);

    // Two-patient cohort at 50/50: each fold is exactly one whole patient.
    Cohort two = synth_generate(small_cfg(72, 2));
    auto f2 = patient_split(two, {0.5, 0.5}, 9);
    CHECK(f2[0].size() == 1);
    CHECK(f2[1].size() == 1);
    CHECK(f2[0][0] != f2[1][0]);
}

TEST_CASE("patient split rejects bad fractions and too-small cohorts") {
    Cohort c = synth_generate(small_cfg(73, 1));
    CHECK_THROWS_AS(patient_split(c, {0.6, 0.6}, 1), Error);
    CHECK_THROWS_AS(patient_split(c, {}, 1), Error);
    CHECK_THROWS_AS(patient_split(c, {0.5, 0.5}, 1), Error);  // one patient, two folds
}

TEST_CASE("subsampling replays deterministically and respects the fraction") {
    std::vector<int64_t> patients(2000);
    for (int64_t i = 0; i < 2000; ++i) patients[i] = i * 3;
    auto a = subsample_patients(patients, 0.1, 5);
    auto b = subsample_patients(patients, 0.1, 5);
    CHECK(a == b);
    CHECK(a.size() == 200);
    auto c = subsample_patients(patients, 0.1, 6);
    CHECK(a != c);
    auto all = subsample_patients(patients, 1.0, 5);
    std::vector<int64_t> sorted(patients);
    std::sort(sorted.begin(), sorted.end());
    CHECK(all == sorted);
    CHECK(subsample_patients(patients, 1e-9, 5).size() == 1);  // never empty
    CHECK_THROWS_AS(subsample_patients(patients, 0.0, 5), Error);
}

TEST_CASE("filtering keeps whole patients and compacts the blob") {
    Cohort c = synth_generate(small_cfg(81, 10));
    auto folds = patient_split(c, {0.5, 0.5}, 3);
    Cohort train = filter_cohort(c, folds[0]);
    train.validate();
    CHECK(train.n_patients() == 5);
    const int64_t elems = c.channels * c.samples;
    // Every kept record's waveform is a bitwise copy of the original slice.
    for (const auto& rec : train.records) {
        auto orig = std::find_if(c.records.begin(), c.records.end(), [&](const CohortRecord& r) {
            return r.record_id == rec.record_id;
        });
        REQUIRE(orig != c.records.end());
        CHECK(std::memcmp(train.blob.data() + rec.waveform_offset,
                          c.blob.data() + orig->waveform_offset,
                          elems * sizeof(float)) == 0);
    }
}

TEST_CASE("batch assembly produces the expected tensors") {
    Cohort c = label_history_cohort({{1, 0}, {0, 1}, {1, 1}}, 2);
    auto x = waveform_batch(c, {2, 0});
    CHECK(x.shape() == core::Shape{2, 1, 8});
    CHECK(x.data()[0] == 2.0f);          // record 2 starts at value 2.0
    CHECK(x.data()[8] == 0.0f);          // record 0 starts at value 0.0
    auto y = label_batch(c, {1});
    CHECK(y.shape() == core::Shape{1, 2});
    CHECK(y.data()[0] == 0.0f);
    CHECK(y.data()[1] == 1.0f);
    auto pairs = extract_pairs(c);
    auto a = action_batch(pairs, {0, 1}, 2);
    CHECK(a.data()[0] == -1.0f);  // {1,0} -> {0,1}
    CHECK(a.data()[1] == 1.0f);
    CHECK(a.data()[2] == 1.0f);   // {0,1} -> {1,1}
    CHECK(a.data()[3] == 0.0f);
    CHECK_THROWS_AS(waveform_batch(c, {}), Error);
    CHECK_THROWS_AS(waveform_batch(c, {9}), Error);
}

TEST_CASE("synth config validation") {
    SynthConfig bad = small_cfg(1);
    bad.onset_prob = {1.5f, 0, 0, 0};
    CHECK_THROWS_AS(synth_generate(bad), Error);
    SynthConfig bad2 = small_cfg(1);
    bad2.mean_records = 0.5;
    CHECK_THROWS_AS(synth_generate(bad2), Error);
    SynthConfig bad3 = small_cfg(1);
    bad3.onset_prob = {0.1f, 0.1f};  // wrong length for 4 classes
    CHECK_THROWS_AS(synth_generate(bad3), Error);
}
