// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "polyscore/model.hpp"

namespace polyscore {

class ManifestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

enum class Split { train, valid, test };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct ManifestEntry {
    std::string path;  // relative to the manifest root
    Split split = Split::train;
    std::string composer;
    bool piano = false;
    std::size_t parts = 0;
    std::size_t notes = 0;
    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct SplitRatios {
    double train = 0.8, valid = 0.1, test = 0.1;
};

struct CorpusManifest {
    std::string root;
    std::vector<ManifestEntry> files;  // sorted by path
    SplitRatios ratios;
    std::uint64_t seed = 0;
    std::size_t max_parts = kDefaultMaxParts;
    bool exclude_piano_from_eval = true;
    Encoding encoding;

    /// FNV-1a of the canonical JSON form of every other field.
    [[nodiscard]] std::string hash() const;
    [[nodiscard]] std::string to_json() const;
    /// Throws ManifestError when the stored hash does not match the contents.
    static CorpusManifest from_json(const std::string& text);
    void save(const std::string& path) const;
    static CorpusManifest load(const std::string& path);

    [[nodiscard]] std::vector<const ManifestEntry*> entries(Split s) const;
};

struct CorpusSplit {
    std::vector<Score> scores;
    std::vector<std::string> names;
};

/// Parses the files of one split. With polyphonic_eval set, piano scores are
/// dropped when the manifest's piano filter is on.
CorpusSplit load_split(const CorpusManifest& m, Split s, bool polyphonic_eval = false);

struct IngestOptions {
    SplitRatios ratios;
    std::uint64_t seed = 0;
    std::size_t max_parts = kDefaultMaxParts;
    bool exclude_piano_from_eval = true;
    bool strict = false;
    int pitch_lo = 21;
    int pitch_hi = 109;
};

struct IngestResult {
    CorpusManifest manifest;
    std::vector<std::pair<std::string, std::string>> failures;  // path, reason
    std::map<std::string, std::size_t> notes_by_composer;
    std::map<std::string, std::size_t> notes_by_ensemble;
    std::size_t total_notes = 0;
};

/// Files are ordered by a seeded hash of their name; the first
/// round(train * n) go to train, the next round(valid * n) to valid.
std::vector<Split> assign_splits(const std::vector<std::string>& names, const SplitRatios& ratios, std::uint64_t seed);

/// Scans `dir` recursively for .krn files. Unparseable files are listed and
/// skipped; EmptyCorpus when nothing parses. Vocabulary and resolution come from the training split; the pitch
/// range covers every split.
IngestResult ingest_directory(const std::string& dir, const IngestOptions& options = {});

/// Vocabulary and resolution from `train`, pitch range from all of `all`.
Encoding build_encoding(const std::vector<Score>& train, const std::vector<Score>& all, int lo = 21, int hi = 109);

}  // namespace polyscore
