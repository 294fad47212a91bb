// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "polyscore/rational.hpp"

namespace polyscore {

/// Upper bound on simultaneous part tracks in a score.
inline constexpr std::size_t kDefaultMaxParts = 6;

/// MIDI note number; middle C = 60.
struct Pitch {
    int midi = 60;

    friend auto operator<=>(const Pitch&, const Pitch&) = default;
};

/// One homophony in a part: a note, a chord, or a rest (empty pitch set).
struct Event {
    RationalTime duration;
    std::vector<Pitch> pitches;  // sorted ascending, unique
    // Filler rest covering a span where the part track does not exist
    // (before a split creates it, after a merge absorbs it). Never predicted.
    bool padding = false;

    [[nodiscard]] bool is_rest() const { return pitches.empty(); }
    friend bool operator==(const Event&, const Event&) = default;
};

Event make_event(RationalTime duration, std::vector<int> midi_numbers);

struct Part {
    std::vector<Event> events;
    std::string name;

    [[nodiscard]] RationalTime length() const;
    /// Onset of every event, in beats from the start of the score.
    [[nodiscard]] std::vector<RationalTime> onsets() const;
};

/// Square 0/1 matrix; entry (dest, src) = 1 when part `src` flows into part
/// `dest` at this step. Rows of dead parts are zero.
class FlowMatrix {
public:
    FlowMatrix() = default;
    explicit FlowMatrix(std::size_t parts) : n_(parts), cells_(parts * parts, 0) {}
    static FlowMatrix identity(std::size_t parts);

    [[nodiscard]] std::size_t size() const { return n_; }
    [[nodiscard]] std::uint8_t at(std::size_t dest, std::size_t src) const { return cells_[dest * n_ + src]; }
    void set(std::size_t dest, std::size_t src, std::uint8_t v) { cells_[dest * n_ + src] = v; }
    [[nodiscard]] std::size_t row_sum(std::size_t dest) const;
    [[nodiscard]] std::size_t col_sum(std::size_t src) const;
    [[nodiscard]] bool is_identity() const;

    /// Connectivity composition (boolean semiring): result = this after `first`.
    [[nodiscard]] FlowMatrix compose_after(const FlowMatrix& first) const;

    friend bool operator==(const FlowMatrix&, const FlowMatrix&) = default;

private:
    std::size_t n_ = 0;
    std::vector<std::uint8_t> cells_;
};

struct FlowStep {
    RationalTime time;
    FlowMatrix matrix;
};

struct ScoreMeta {
    std::string title;
    std::string composer;
    std::string source_path;
    std::vector<std::string> instruments;  // *I codes seen on kern spines
    bool piano = false;
};

struct Score {
    std::vector<Part> parts;  // fixed tie-break order
    std::vector<FlowStep> flows;
    ScoreMeta meta;

    [[nodiscard]] RationalTime length() const;
    /// True when every flow step is an identity.
    [[nodiscard]] bool flow_free() const;
    [[nodiscard]] std::size_t note_count() const;
};

/// Throws std::invalid_argument describing the first violated invariant.
void validate_score(const Score& score, std::size_t max_parts = kDefaultMaxParts);

/// Event-level equality (ignores metadata and flows).
bool events_equal(const Score& a, const Score& b);

/// One schedulable (non-padding) event, in the order the part factorization
/// predicts them: least advanced part first, ties broken by part order.
struct EventRef {
    std::size_t part = 0;
    std::size_t event = 0;
    RationalTime onset;
};

std::vector<EventRef> prediction_schedule(const Score& score);

}  // namespace polyscore
