// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "polyscore/score.hpp"

namespace polyscore::kern {

enum class ErrorKind {
    unparseable_token,
    inconsistent_spine_count,
    unsupported_construct,
    too_many_parts,
    rhythm_error,
    no_kern_spine,
    unrepresentable_duration,
};

const char* to_string(ErrorKind kind);

class KernError : public std::runtime_error {
public:
    KernError(ErrorKind kind, std::size_t line, std::size_t column, std::string token, const std::string& detail);

    [[nodiscard]] ErrorKind kind() const { return kind_; }
    [[nodiscard]] std::size_t line() const { return line_; }  // 1-based, 0 when not applicable
    [[nodiscard]] std::size_t column() const { return column_; }
    [[nodiscard]] const std::string& token() const { return token_; }

private:
    ErrorKind kind_;
    std::size_t line_;
    std::size_t column_;
    std::string token_;
};

struct ParseOptions {
    // Strict parsing rejects constructs that are otherwise skipped and counted
    // (unknown signifiers, partial ties, spine additions).
    bool strict = false;
    std::size_t max_parts = kDefaultMaxParts;
};

/// Non-fatal irregularities encountered while parsing.
struct ParseReport {
    std::size_t grace_notes_dropped = 0;
    std::size_t partial_ties = 0;
    std::size_t mixed_chord_durations = 0;
    std::map<char, std::size_t> skipped_signifiers;
    std::size_t gaps_padded = 0;

    [[nodiscard]] std::size_t skipped_total() const;
};

Score parse_kern(const std::string& text, const ParseOptions& options = {}, ParseReport* report = nullptr);
Score parse_kern_file(const std::string& path, const ParseOptions& options = {}, ParseReport* report = nullptr);

/// A single note/rest subtoken, e.g. "8cc#" or "4.r".
struct NoteToken {
    std::optional<RationalTime> duration;  // absent for grace notes
    std::optional<int> midi;              // absent for rests
    bool tie_start = false;
    bool tie_end = false;
    bool grace = false;
};

/// Parses one space-free kern subtoken. Throws KernError(unparseable_token).
NoteToken parse_note_token(const std::string& token, ParseReport* report = nullptr, bool strict = false);

/// Recip duration of a **kern token in beats ("4" -> 1, "2." -> 3, "0" -> 8).
RationalTime recip_to_beats(const std::string& recip);

struct SerializeOptions {
    // Durations with no dotted-recip spelling are written in the extended
    // "n%m" recip form; when false they raise unrepresentable_duration.
    bool allow_rational_recip = true;
};

std::string serialize_kern(const Score& score, const SerializeOptions& options = {});

/// Kern recip spelling for a duration in beats, e.g. 3/2 -> "4.". Throws
/// KernError(unrepresentable_duration).
std::string beats_to_recip(const RationalTime& beats, bool allow_rational = true);
std::string midi_to_kern_pitch(int midi);

// Spine flow resolution -----------------------------------------------------

/// One spine-manipulator record: one token per current column.
struct SpineManipulation {
    RationalTime time;
    std::vector<std::string> tokens;
    std::size_t line = 0;
};

/// Column state of the resolver. Non-kern columns carry track = -1.
struct SpineColumn {
    std::string exclusive;  // "**kern", "**dynam", ... (may be empty until declared)
    int track = -1;
};

/// Maps kern spine columns onto a bounded set of part tracks while splits,
/// merges, terminations and additions happen.
class SpineTracker {
public:
    SpineTracker(std::vector<std::string> exclusive_interpretations, std::size_t max_parts, bool strict);

    /// Applies one manipulator line; returns false if no kern track changed.
    bool apply(const SpineManipulation& manip);
    /// Declares exclusive interpretations for columns created by "*+".
    void declare(std::size_t column, const std::string& exclusive);

    [[nodiscard]] const std::vector<SpineColumn>& columns() const { return columns_; }
    [[nodiscard]] std::size_t track_count() const { return track_count_; }
    [[nodiscard]] std::vector<bool> live_tracks() const;

    struct Edge {
        int dest;
        int src;
    };
    struct Step {
        RationalTime time;
        std::vector<Edge> edges;  // full mapping for this step (live destinations only)
    };
    [[nodiscard]] const std::vector<Step>& steps() const { return steps_; }
    [[nodiscard]] const std::vector<bool>& initial_live() const { return initial_live_; }

    /// Builds the flow list [(0, live diagonal), steps...] sized to track_count().
    [[nodiscard]] std::vector<FlowStep> flows() const;

private:
    int allocate_track(std::size_t line);

    std::vector<SpineColumn> columns_;
    std::size_t max_parts_;
    bool strict_;
    std::size_t track_count_ = 0;
    std::vector<bool> live_;
    std::vector<bool> initial_live_;
    std::vector<Step> steps_;
};

struct FlowResolution {
    std::size_t track_count = 0;
    std::vector<std::vector<SpineColumn>> layouts;  // column layout after each manipulation
    std::vector<FlowStep> flows;
};

/// Resolves a sequence of manipulator lines starting from the given spine
/// layout. Throws KernError(too_many_parts) when more than `max_parts` tracks
/// would be needed at once.
FlowResolution resolve_flows(const std::vector<std::string>& exclusive_interpretations,
                             const std::vector<SpineManipulation>& manipulations,
                             std::size_t max_parts = kDefaultMaxParts);

}  // namespace polyscore::kern
