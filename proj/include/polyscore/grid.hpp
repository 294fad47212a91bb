// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "polyscore/evalgen.hpp"
#include "polyscore/train.hpp"

namespace polyscore {

/// One experiment: a spec plus the training options in force on its line.
struct GridEntry {
    std::string label;
    TrainConfig config;
};

/// Line format: `# comment`, `key=value` (a training option applying to the
/// entries below it), or `[label:] spec`.
std::vector<GridEntry> parse_grid(const std::string& text, const TrainConfig& base = TrainConfig{});

struct GridCorpus {
    std::vector<Score> train, valid, eval;
    std::vector<std::string> eval_names;
    // Evaluation scores for coupled models (piano filtered out when requested).
    std::vector<Score> eval_polyphonic;
    std::vector<std::string> eval_polyphonic_names;
    Encoding encoding;
};

struct GridRow {
    std::size_t experiment = 0;
    std::string label;
    std::string spec;
    std::size_t params = 0;
    std::size_t epochs = 0;
    std::size_t best_epoch = 0;
    double seconds = 0.0;
    EvalReport report;
};

std::vector<GridRow> run_grid(const std::vector<GridEntry>& entries, const GridCorpus& corpus,
                              const std::function<void(const GridRow&)>& on_row = {});

std::string grid_table(const std::vector<GridRow>& rows);
std::string grid_json(const std::vector<GridRow>& rows);
std::vector<GridRow> grid_from_json(const std::string& text);

}  // namespace polyscore
