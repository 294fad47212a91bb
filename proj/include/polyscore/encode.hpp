// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "polyscore/score.hpp"

namespace polyscore {

class EncodeError : public std::runtime_error {
public:
    enum class Kind { unknown_duration, pitch_out_of_range, unrepresentable_at_resolution, empty_corpus, shape };
    EncodeError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct Resolution {
    RationalTime delta{1};
    std::int64_t frames_per_beat = 1;

    static Resolution from_frames_per_beat(std::int64_t fpb);
    /// Finer resolution delta / m.
    [[nodiscard]] Resolution refined(std::int64_t m) const { return from_frames_per_beat(frames_per_beat * m); }
};

/// lcm of the denominators of every onset and duration in the score.
std::int64_t time_denominator(const Score& score);
/// Finest grid on which every event of the corpus starts and ends.
Resolution compute_resolution(const std::vector<Score>& corpus);

/// Counters for lossy lookups done while encoding evaluation data.
struct EncodeStats {
    std::size_t oov_durations = 0;
    std::size_t off_grid_locations = 0;
};

/// Index 0 is the continuation symbol; 1..D-1 are the sorted distinct
/// durations seen in training data.
class DurationVocab {
public:
    static constexpr std::size_t kContinuation = 0;

    DurationVocab() = default;
    explicit DurationVocab(std::vector<RationalTime> durations);
    static DurationVocab from_corpus(const std::vector<Score>& scores);

    /// D, including the continuation slot.
    [[nodiscard]] std::size_t size() const { return durations_.size() + 1; }
    /// Number of classes a fresh onset can take (D - 1).
    [[nodiscard]] std::size_t onset_classes() const { return durations_.size(); }
    /// Duration of vocabulary index i >= 1.
    [[nodiscard]] const RationalTime& duration(std::size_t index) const { return durations_.at(index - 1); }
    [[nodiscard]] const std::vector<RationalTime>& durations() const { return durations_; }
    [[nodiscard]] RationalTime max_duration() const;

    [[nodiscard]] std::optional<std::size_t> find(const RationalTime& d) const;
    /// Exact index, or the nearest entry (counted in stats). Strict lookup
    /// throws EncodeError(unknown_duration) instead.
    std::size_t lookup(const RationalTime& d, EncodeStats* stats = nullptr, bool strict = false) const;

    friend bool operator==(const DurationVocab&, const DurationVocab&) = default;

private:
    std::vector<RationalTime> durations_;
};

struct PitchRange {
    int lo = 21;
    int hi = 109;  // exclusive

    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(hi - lo); }
    [[nodiscard]] bool contains(int midi) const { return midi >= lo && midi < hi; }
    /// midi - lo; throws EncodeError(pitch_out_of_range).
    [[nodiscard]] std::size_t index(int midi) const;

    /// Default bounds clipped to the pitches actually present.
    static PitchRange from_corpus(const std::vector<Score>& scores, int lo = 21, int hi = 109);

    friend bool operator==(const PitchRange&, const PitchRange&) = default;
};

std::vector<std::uint8_t> pitch_class_feature(int midi, const PitchRange& range);

/// Slot of the beat subdivision at time t: frac(t) * frames_per_beat.
std::size_t location_index(const RationalTime& t, std::int64_t frames_per_beat, EncodeStats* stats = nullptr);
std::vector<std::uint8_t> location_feature(const RationalTime& t, std::int64_t frames_per_beat);

// History tensors ---------------------------------------------------------------

/// x in {0,1}^{T x P x (N + D)}; frame 0 is the oldest. Within a channel the
/// first N entries are pitch bits and the last D are duration bits.
struct HistoryTensor {
    std::size_t T = 0, P = 0, N = 0, D = 0;
    std::vector<std::uint8_t> data;

    HistoryTensor() = default;
    HistoryTensor(std::size_t t, std::size_t p, std::size_t n, std::size_t d)
        : T(t), P(p), N(n), D(d), data(t * p * (n + d), 0) {}

    [[nodiscard]] std::size_t width() const { return N + D; }
    std::uint8_t& at(std::size_t t, std::size_t p, std::size_t c) { return data[(t * P + p) * width() + c]; }
    [[nodiscard]] std::uint8_t at(std::size_t t, std::size_t p, std::size_t c) const {
        return data[(t * P + p) * width() + c];
    }
    [[nodiscard]] std::uint8_t pitch(std::size_t t, std::size_t p, std::size_t n) const { return at(t, p, n); }
    [[nodiscard]] std::uint8_t duration(std::size_t t, std::size_t p, std::size_t d) const { return at(t, p, N + d); }
    /// True when no bit of the channel is set (dead, padded or pre-start frame).
    [[nodiscard]] bool empty(std::size_t t, std::size_t p) const;

    friend bool operator==(const HistoryTensor&, const HistoryTensor&) = default;
};

/// Real-valued T x P x F tensor (embedded histories).
struct RealTensor3 {
    std::size_t T = 0, P = 0, F = 0;
    std::vector<double> data;
    [[nodiscard]] double at(std::size_t t, std::size_t p, std::size_t f) const { return data[(t * P + p) * F + f]; }
};

/// One channel of one frame: the event sounding in that part at the frame time.
struct FrameCell {
    bool live = false;                  // false for dead, padded or silent-gap spans
    std::uint32_t duration_slot = 0;    // vocab index; 0 = continuation
    std::vector<std::uint16_t> pitches; // indices into the pitch range, ascending
};

enum class FrameMode {
    // A frame starts wherever any part has an onset (or a flow step occurs).
    onset_union,
    // A frame every delta beats.
    uniform,
};

struct FrameOptions {
    FrameMode mode = FrameMode::onset_union;
    std::optional<Resolution> resolution;  // required for uniform frames
    bool strict = false;                   // unknown durations throw instead of mapping to nearest
};

/// The frame grid of a whole score, shared by every prediction within it.
struct ScoreFrames {
    std::size_t parts = 0;
    std::vector<RationalTime> times;
    std::vector<FrameCell> cells;                 // times.size() x parts
    std::vector<std::vector<std::size_t>> flows;  // per frame: indices into Score::flows applied before it

    [[nodiscard]] std::size_t size() const { return times.size(); }
    [[nodiscard]] const FrameCell& cell(std::size_t t, std::size_t p) const { return cells[t * parts + p]; }
    /// Frame that starts exactly at `time`; throws if none.
    [[nodiscard]] std::size_t frame_at(const RationalTime& time) const;
};

ScoreFrames build_frames(const Score& score, const DurationVocab& vocab, const PitchRange& range,
                         const FrameOptions& options = {}, EncodeStats* stats = nullptr);

/// Single-channel frames made of one part's own (non-padding) events only.
ScoreFrames build_part_frames(const Score& score, std::size_t part, const DurationVocab& vocab,
                              const PitchRange& range, bool strict = false, EncodeStats* stats = nullptr);

/// The k frames strictly before frame `frame`, zero-padded before the start.
HistoryTensor history_from_frames(const ScoreFrames& frames, std::size_t frame, std::size_t k, std::size_t N,
                                  std::size_t D);

struct EventTargets {
    std::size_t duration_class = 0;           // onset class in [0, D-1), i.e. vocab index - 1
    std::vector<std::uint8_t> pitch_bits;     // length N
};

struct HistoryExample {
    HistoryTensor history;
    std::vector<std::uint8_t> location;
    EventTargets targets;
    RationalTime time;
};

/// Encodes the prediction of event `event_index` of `part`: the full-score
/// history of every part before its onset, its beat location and its targets.
HistoryExample encode_history(const Score& score, std::size_t part, std::size_t event_index, std::size_t k,
                              const DurationVocab& vocab, const PitchRange& range, const Resolution& resolution,
                              const FrameOptions& options = {}, EncodeStats* stats = nullptr);

EventTargets encode_targets(const Event& event, const DurationVocab& vocab, const PitchRange& range,
                            bool strict = false, EncodeStats* stats = nullptr);

/// Pitch axis re-centred on `center`: absolute slot a maps to a - c + N - 1 on
/// an axis of 2N - 1 slots. Duration bits are unchanged.
HistoryTensor relative_view(const HistoryTensor& h, int center_midi, const PitchRange& range);
/// Moves every pitch bit by s slots; bits pushed off the axis are dropped.
HistoryTensor shift_pitches(const HistoryTensor& h, int s);

struct PitchEmbedding {
    enum class Kind { fixed_octave, learned };
    Kind kind = Kind::fixed_octave;
    std::size_t dim = 12;
    std::size_t rows = 0;          // pitch slots
    std::vector<double> weights;   // rows x dim, row-major

    /// Row a is the one-hot of (lo + a) mod 12.
    static PitchEmbedding fixed_octave(const PitchRange& range);
    static PitchEmbedding learned(std::size_t rows, std::size_t dim, std::vector<double> weights);
};

/// Replaces each channel's pitch bits by the sum of embedding rows.
RealTensor3 embed(const HistoryTensor& h, const PitchEmbedding& e);

// Comparison encodings --------------------------------------------------------------

/// Two bits per (frame, slot): sounding and onset. Slots 0..127 are MIDI
/// pitches; kRestSlot marks a sounding rest and kPadSlot a padding span, so
/// consecutive rests stay distinct and decoding is lossless.
struct DiscreteGrid {
    static constexpr std::size_t kSlots = 130;
    static constexpr std::size_t kRestSlot = 128;
    static constexpr std::size_t kPadSlot = 129;

    RationalTime delta{1};
    std::size_t parts = 0;
    std::size_t frames = 0;
    std::vector<std::uint8_t> on;     // parts x frames x kSlots
    std::vector<std::uint8_t> onset;  // parts x frames x kSlots

    [[nodiscard]] std::size_t offset(std::size_t p, std::size_t t, std::size_t s) const {
        return (p * frames + t) * kSlots + s;
    }
};

/// Throws EncodeError(unrepresentable_at_resolution) when an onset or
/// duration is not a multiple of delta.
DiscreteGrid encode_discrete_grid(const Score& score, const RationalTime& delta);
/// Parts with events only; flows and metadata are not carried by the grid.
Score decode_discrete_grid(const DiscreteGrid& grid);

struct RunLengthInstruction {
    enum class Kind { start, stop, advance };
    Kind kind = Kind::advance;
    int pitch = 0;        // start / stop
    RationalTime beats;   // advance
    friend bool operator==(const RunLengthInstruction&, const RunLengthInstruction&) = default;
};

/// start(pitch) / stop(pitch) / advance(beats) sequence over all parts.
std::vector<RunLengthInstruction> encode_runlength(const Score& score);
std::string to_string(const RunLengthInstruction& ins);

}  // namespace polyscore
