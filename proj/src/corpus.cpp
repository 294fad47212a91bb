// SPDX-License-Identifier: Apache-2.0
#include "polyscore/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "polyscore/evalgen.hpp"
#include "polyscore/kern.hpp"

namespace polyscore {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        case Split::test: return "test";
    }
    return "?";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "valid" || s == "validation") return Split::valid;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split '" + s + "' (train, valid, test)");
}

namespace {

json body_json(const CorpusManifest& m) {
    json j;
    j["format"] = "polyscore-manifest/1";
    j["root"] = m.root;
    j["seed"] = m.seed;
    j["ratios"] = {m.ratios.train, m.ratios.valid, m.ratios.test};
    j["max_parts"] = m.max_parts;
    j["exclude_piano_from_eval"] = m.exclude_piano_from_eval;
    j["frames_per_beat"] = m.encoding.resolution.frames_per_beat;
    j["pitch_range"] = {m.encoding.range.lo, m.encoding.range.hi};
    json d = json::array();
    for (const auto& r : m.encoding.vocab.durations()) d.push_back(r.to_string());
    j["durations"] = d;
    json files = json::array();
    for (const auto& f : m.files)
        files.push_back({{"path", f.path},
                         {"split", to_string(f.split)},
                         {"composer", f.composer},
                         {"piano", f.piano},
                         {"parts", f.parts},
                         {"notes", f.notes}});
    j["files"] = files;
    return j;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ManifestError("cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

std::string CorpusManifest::hash() const { return hex64(fnv1a(body_json(*this).dump())); }

std::string CorpusManifest::to_json() const {
    json j = body_json(*this);
    j["hash"] = hash();
    return j.dump(1);
}

CorpusManifest CorpusManifest::from_json(const std::string& text) {
    CorpusManifest m;
    try {
        const json j = json::parse(text);
        if (j.value("format", "") != "polyscore-manifest/1") throw ManifestError("not a corpus manifest");
        m.root = j.at("root").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        const auto& r = j.at("ratios");
        m.ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
        m.max_parts = j.at("max_parts").get<std::size_t>();
        m.exclude_piano_from_eval = j.at("exclude_piano_from_eval").get<bool>();
        m.encoding.resolution = Resolution::from_frames_per_beat(j.at("frames_per_beat").get<std::int64_t>());
        m.encoding.range = PitchRange{j.at("pitch_range").at(0).get<int>(), j.at("pitch_range").at(1).get<int>()};
        std::vector<RationalTime> durs;
        for (const auto& d : j.at("durations")) durs.push_back(RationalTime::parse(d.get<std::string>()));
        m.encoding.vocab = DurationVocab(std::move(durs));
        for (const auto& f : j.at("files")) {
            ManifestEntry e;
            e.path = f.at("path").get<std::string>();
            e.split = parse_split(f.at("split").get<std::string>());
            e.composer = f.value("composer", "");
            e.piano = f.value("piano", false);
            e.parts = f.value("parts", std::size_t{0});
            e.notes = f.value("notes", std::size_t{0});
            m.files.push_back(std::move(e));
        }
        const std::string stored = j.at("hash").get<std::string>();
        if (stored != m.hash()) throw ManifestError("manifest hash " + stored + " does not match its contents");
    } catch (const json::exception& e) {
        throw ManifestError(std::string("malformed manifest: ") + e.what());
    }
    return m;
}

void CorpusManifest::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ManifestError("cannot write " + path);
    out << to_json() << '\n';
}

CorpusManifest CorpusManifest::load(const std::string& path) { return from_json(read_file(path)); }

std::vector<const ManifestEntry*> CorpusManifest::entries(Split s) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& f : files)
        if (f.split == s) out.push_back(&f);
    return out;
}

CorpusSplit load_split(const CorpusManifest& m, Split s, bool polyphonic_eval) {
    CorpusSplit out;
    kern::ParseOptions po;
    po.max_parts = m.max_parts;
    for (const auto* e : m.entries(s)) {
        if (polyphonic_eval && m.exclude_piano_from_eval && e->piano) continue;
        out.scores.push_back(kern::parse_kern_file((fs::path(m.root) / e->path).string(), po));
        out.names.push_back(e->path);
    }
    return out;
}

std::vector<Split> assign_splits(const std::vector<std::string>& names, const SplitRatios& ratios, std::uint64_t seed) {
    const double sum = ratios.train + ratios.valid + ratios.test;
    if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 || sum <= 0)
        throw std::invalid_argument("split ratios must be non-negative with a positive sum");
    const std::size_t n = names.size();
    const auto n_train = static_cast<std::size_t>(std::llround(ratios.train / sum * static_cast<double>(n)));
    const auto n_valid = std::min(n - std::min(n, n_train),
                                  static_cast<std::size_t>(std::llround(ratios.valid / sum * static_cast<double>(n))));
    std::string salt(8, '\0');
    for (int i = 0; i < 8; ++i) salt[i] = static_cast<char>((seed >> (8 * i)) & 0xff);
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    for (std::size_t i = 0; i < n; ++i) keyed.emplace_back(fnv1a(names[i], fnv1a(salt)), i);
    std::sort(keyed.begin(), keyed.end());
    std::vector<Split> out(n, Split::test);
    for (std::size_t r = 0; r < n; ++r) {
        if (r < n_train) out[keyed[r].second] = Split::train;
        else if (r < n_train + n_valid) out[keyed[r].second] = Split::valid;
    }
    return out;
}

Encoding build_encoding(const std::vector<Score>& train, const std::vector<Score>& all, int lo, int hi) {
    Encoding e;
    e.vocab = DurationVocab::from_corpus(train);
    e.resolution = compute_resolution(train);
    e.range = PitchRange::from_corpus(all, lo, hi);
    return e;
}

IngestResult ingest_directory(const std::string& dir, const IngestOptions& o) {
    IngestResult res;
    if (!fs::is_directory(dir)) throw ManifestError(dir + " is not a directory");
    std::vector<std::string> paths;
    for (const auto& it : fs::recursive_directory_iterator(dir))
        if (it.is_regular_file() && it.path().extension() == ".krn")
            paths.push_back(fs::relative(it.path(), dir).generic_string());
    std::sort(paths.begin(), paths.end());

    kern::ParseOptions po;
    po.max_parts = o.max_parts;
    po.strict = o.strict;
    std::vector<Score> scores;
    std::vector<std::string> names;
    for (const auto& p : paths) {
        try {
            Score s = kern::parse_kern_file((fs::path(dir) / p).string(), po);
            if (s.length() <= RationalTime(0)) throw std::runtime_error("score has no events");
            scores.push_back(std::move(s));
            names.push_back(p);
        } catch (const std::exception& e) {
            res.failures.emplace_back(p, e.what());
        }
    }
    if (scores.empty()) throw EmptyCorpus("no parseable .krn files under " + dir);

    const auto splits = assign_splits(names, o.ratios, o.seed);
    std::vector<Score> train;
    auto& m = res.manifest;
    m.root = fs::absolute(dir).lexically_normal().string();
    m.ratios = o.ratios;
    m.seed = o.seed;
    m.max_parts = o.max_parts;
    m.exclude_piano_from_eval = o.exclude_piano_from_eval;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const Score& s = scores[i];
        ManifestEntry e;
        e.path = names[i];
        e.split = splits[i];
        e.composer = s.meta.composer.empty() ? "unknown" : s.meta.composer;
        e.piano = s.meta.piano;
        e.parts = s.parts.size();
        e.notes = s.note_count();
        res.notes_by_composer[e.composer] += e.notes;
        res.notes_by_ensemble[e.piano ? "piano" : std::to_string(e.parts) + "-part"] += e.notes;
        res.total_notes += e.notes;
        if (e.split == Split::train) train.push_back(s);
        m.files.push_back(std::move(e));
    }
    if (train.empty()) throw EmptyCorpus("the training split is empty");
    m.encoding = build_encoding(train, scores, o.pitch_lo, o.pitch_hi);
    return res;
}

}  // namespace polyscore
