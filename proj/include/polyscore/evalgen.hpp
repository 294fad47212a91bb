// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "polyscore/model.hpp"

namespace polyscore {

class EmptyCorpus : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ScoreRate {
    std::string name;
    std::size_t events = 0;
    double beats = 0.0;
    double bits_t = 0.0;  // summed over the score's events
    double bits_n = 0.0;
    double t_per_beat = 0.0;
    double n_per_beat = 0.0;
    [[nodiscard]] double total_per_beat() const { return t_per_beat + n_per_beat; }
};

/// Rates are means over scores of each score's bits / length in beats.
struct EvalReport {
    double total_bits_per_beat = 0.0;
    double loss_t_bits_per_beat = 0.0;
    double loss_n_bits_per_beat = 0.0;
    // Pooled over every event of the corpus.
    double bits_per_event = 0.0;
    double loss_t_bits_per_event = 0.0;
    double loss_n_bits_per_event = 0.0;
    std::size_t events = 0;
    double beats = 0.0;
    std::size_t skipped_empty = 0;  // zero-length scores, left out of the mean
    EncodeStats oov;
    std::vector<ScoreRate> per_score;
};

/// Throws EmptyCorpus when no score has positive length.
EvalReport cross_entropy_rate(const ScoreModel& model, const std::vector<Score>& corpus, const Encoding& enc,
                              const std::vector<std::string>& names = {});

std::string report_json(const EvalReport& report, int indent = 2);
EvalReport report_from_json(const std::string& text);
/// Human-readable summary plus one line per score.
std::string format_report(const EvalReport& report, bool per_score = false);

// Refinement check ---------------------------------------------------------------

struct RefinementLevel {
    RationalTime delta;
    bool encoded = false;       // every score fits the grid
    bool events_equal = false;  // decoded events match the originals
    double rate = 0.0;
    double difference = 0.0;    // |rate - reference rate|
    std::string message;
    [[nodiscard]] bool pass(double tolerance) const {
        return encoded && events_equal && difference < tolerance;
    }
};

struct RefinementReport {
    RationalTime delta;
    double reference_rate = 0.0;
    std::vector<RefinementLevel> levels;
    bool pass = false;
    std::string first_discrepancy;
};

/// Re-encodes every score on a uniform grid of each listed frame length,
/// decodes it back and compares events and model rates with the originals.
RefinementReport refinement_invariance_check(const ScoreModel& model, const std::vector<Score>& corpus,
                                             const Encoding& enc, const std::vector<RationalTime>& deltas,
                                             double tolerance = 1e-12);
/// delta / 2 and delta / 4 of the encoding's resolution.
RefinementReport refinement_invariance_check(const ScoreModel& model, const std::vector<Score>& corpus,
                                             const Encoding& enc);

// Sampling -----------------------------------------------------------------------

struct SampledEvent {
    std::size_t duration_class = 0;
    std::vector<std::uint8_t> pitch_bits;
};

/// Duration from the softmax, then pitch bits lowest first, each given the
/// bits below it. temperature <= 0 picks the most likely value at each step.
SampledEvent sample_event(const ScoreModel& model, const EventContext& ctx, ad::Rng& rng, double temperature = 1.0);

Event to_event(const SampledEvent& s, const Encoding& enc);

/// Advancement clocks of a score under construction.
struct GenerationState {
    std::vector<RationalTime> clocks;
    std::vector<Part> parts;
    std::uint64_t seed = 0;

    explicit GenerationState(std::size_t n_parts = 0, std::uint64_t seed_ = 0)
        : clocks(n_parts), parts(n_parts), seed(seed_) {}
    /// Least advanced part, ties to the lowest index.
    [[nodiscard]] std::size_t next_part() const;
    /// Parts emitted so far as a score (parts may differ in length).
    [[nodiscard]] Score partial() const;
};

struct GenerateOptions {
    std::size_t parts = 1;
    RationalTime length;  // beats
    std::uint64_t seed = 1;
    double temperature = 1.0;
    std::size_t max_parts = kDefaultMaxParts;
};

/// Samples parts until every clock reaches the length; the last event of each
/// part is cut at the boundary.
Score generate(const ScoreModel& model, const Encoding& enc, const GenerateOptions& options);

}  // namespace polyscore
