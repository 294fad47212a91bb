// SPDX-License-Identifier: Apache-2.0
#include "polyscore/encode.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace polyscore {

Resolution Resolution::from_frames_per_beat(std::int64_t fpb) {
    if (fpb <= 0) throw std::invalid_argument("frames per beat must be positive");
    return Resolution{RationalTime(1, fpb), fpb};
}

std::int64_t time_denominator(const Score& score) {
    std::int64_t den = 1;
    for (const auto& part : score.parts) {
        RationalTime t;
        for (const auto& e : part.events) {
            den = checked_lcm(den, e.duration.den());
            den = checked_lcm(den, t.den());
            t += e.duration;
        }
    }
    for (const auto& f : score.flows) den = checked_lcm(den, f.time.den());
    return den;
}

Resolution compute_resolution(const std::vector<Score>& corpus) {
    if (corpus.empty()) throw EncodeError(EncodeError::Kind::empty_corpus, "cannot compute the resolution of an empty corpus");
    std::int64_t den = 1;
    for (const auto& s : corpus) den = checked_lcm(den, time_denominator(s));
    return Resolution::from_frames_per_beat(den);
}

// Vocabularies ------------------------------------------------------------------

DurationVocab::DurationVocab(std::vector<RationalTime> durations) : durations_(std::move(durations)) {
    std::sort(durations_.begin(), durations_.end());
    durations_.erase(std::unique(durations_.begin(), durations_.end()), durations_.end());
    if (!durations_.empty() && durations_.front() <= RationalTime(0)) {
        throw std::invalid_argument("duration vocabulary entries must be positive");
    }
}

DurationVocab DurationVocab::from_corpus(const std::vector<Score>& scores) {
    std::vector<RationalTime> all;
    for (const auto& s : scores)
        for (const auto& p : s.parts)
            for (const auto& e : p.events)
                if (!e.padding) all.push_back(e.duration);
    return DurationVocab(std::move(all));
}

RationalTime DurationVocab::max_duration() const {
    return durations_.empty() ? RationalTime(0) : durations_.back();
}

std::optional<std::size_t> DurationVocab::find(const RationalTime& d) const {
    auto it = std::lower_bound(durations_.begin(), durations_.end(), d);
    if (it == durations_.end() || *it != d) return std::nullopt;
    return static_cast<std::size_t>(it - durations_.begin()) + 1;
}

std::size_t DurationVocab::lookup(const RationalTime& d, EncodeStats* stats, bool strict) const {
    if (auto i = find(d)) return *i;
    if (strict || durations_.empty()) {
        throw EncodeError(EncodeError::Kind::unknown_duration, "duration " + d.to_string() + " is not in the vocabulary");
    }
    if (stats) ++stats->oov_durations;
    auto it = std::lower_bound(durations_.begin(), durations_.end(), d);
    if (it == durations_.end()) return durations_.size();
    if (it == durations_.begin()) return 1;
    auto below = it - 1;
    // Ties go to the shorter duration.
    bool take_below = (d - *below) <= (*it - d);
    return static_cast<std::size_t>((take_below ? below : it) - durations_.begin()) + 1;
}

std::size_t PitchRange::index(int midi) const {
    if (!contains(midi)) {
        throw EncodeError(EncodeError::Kind::pitch_out_of_range, "pitch " + std::to_string(midi) + " outside [" +
                                                                     std::to_string(lo) + ", " + std::to_string(hi) + ")");
    }
    return static_cast<std::size_t>(midi - lo);
}

PitchRange PitchRange::from_corpus(const std::vector<Score>& scores, int lo, int hi) {
    int mn = 128, mx = -1;
    for (const auto& s : scores)
        for (const auto& p : s.parts)
            for (const auto& e : p.events)
                if (!e.padding)
                    for (auto pitch : e.pitches) {
                        mn = std::min(mn, pitch.midi);
                        mx = std::max(mx, pitch.midi);
                    }
    if (mx < 0) return PitchRange{lo, hi};
    PitchRange r{std::max(lo, mn), std::min(hi, mx + 1)};
    if (r.lo >= r.hi) r = PitchRange{lo, hi};
    return r;
}

std::vector<std::uint8_t> pitch_class_feature(int midi, const PitchRange& range) {
    std::vector<std::uint8_t> v(range.size(), 0);
    v[range.index(midi)] = 1;
    return v;
}

std::size_t location_index(const RationalTime& t, std::int64_t frames_per_beat, EncodeStats* stats) {
    RationalTime slot = t.frac() * RationalTime(frames_per_beat);
    if (!slot.is_integer() && stats) ++stats->off_grid_locations;
    return static_cast<std::size_t>(slot.floor());
}

std::vector<std::uint8_t> location_feature(const RationalTime& t, std::int64_t frames_per_beat) {
    std::vector<std::uint8_t> v(static_cast<std::size_t>(frames_per_beat), 0);
    v[location_index(t, frames_per_beat)] = 1;
    return v;
}

// Frames ------------------------------------------------------------------------------

bool HistoryTensor::empty(std::size_t t, std::size_t p) const {
    const auto* row = &data[(t * P + p) * width()];
    return std::all_of(row, row + width(), [](std::uint8_t b) { return b == 0; });
}

std::size_t ScoreFrames::frame_at(const RationalTime& time) const {
    auto it = std::lower_bound(times.begin(), times.end(), time);
    if (it == times.end() || *it != time) throw std::out_of_range("no frame starts at beat " + time.to_string());
    return static_cast<std::size_t>(it - times.begin());
}

namespace {

FrameCell make_cell(const Event& e, bool onset, const DurationVocab& vocab, const PitchRange& range, bool strict,
                    EncodeStats* stats) {
    FrameCell c;
    if (e.padding) return c;
    c.live = true;
    c.duration_slot = onset ? static_cast<std::uint32_t>(vocab.lookup(e.duration, stats, strict)) : 0u;
    for (auto p : e.pitches) c.pitches.push_back(static_cast<std::uint16_t>(range.index(p.midi)));
    return c;
}

}  // namespace

ScoreFrames build_frames(const Score& score, const DurationVocab& vocab, const PitchRange& range,
                         const FrameOptions& options, EncodeStats* stats) {
    ScoreFrames out;
    out.parts = score.parts.size();
    const RationalTime length = score.length();
    if (options.mode == FrameMode::uniform) {
        if (!options.resolution) throw std::invalid_argument("uniform frames need a resolution");
        const RationalTime delta = options.resolution->delta;
        RationalTime count = length / delta;
        if (!count.is_integer()) {
            throw EncodeError(EncodeError::Kind::unrepresentable_at_resolution,
                              "score length " + length.to_string() + " is not a multiple of " + delta.to_string());
        }
        for (std::int64_t i = 0; i < count.num(); ++i) out.times.push_back(delta * RationalTime(i));
    } else {
        for (const auto& part : score.parts) {
            RationalTime t;
            for (const auto& e : part.events) {
                if (!e.padding) out.times.push_back(t);
                t += e.duration;
            }
        }
        for (std::size_t i = 1; i < score.flows.size(); ++i)
            if (score.flows[i].time < length) out.times.push_back(score.flows[i].time);
        std::sort(out.times.begin(), out.times.end());
        out.times.erase(std::unique(out.times.begin(), out.times.end()), out.times.end());
    }

    const std::size_t T = out.times.size();
    out.cells.resize(T * out.parts);
    for (std::size_t p = 0; p < out.parts; ++p) {
        const auto& events = score.parts[p].events;
        if (options.mode == FrameMode::uniform) {
            // Events that start or end between frames cannot be encoded.
            RationalTime on;
            for (const auto& e : events) {
                on += e.duration;
                if (!(on / options.resolution->delta).is_integer()) {
                    throw EncodeError(EncodeError::Kind::unrepresentable_at_resolution,
                                      "event boundary " + on.to_string() + " is not a multiple of " +
                                          options.resolution->delta.to_string());
                }
            }
        }
        std::size_t ei = 0;
        RationalTime start;
        for (std::size_t t = 0; t < T; ++t) {
            const RationalTime& now = out.times[t];
            while (ei < events.size() && start + events[ei].duration <= now) {
                start += events[ei].duration;
                ++ei;
            }
            if (ei >= events.size()) break;
            out.cells[t * out.parts + p] = make_cell(events[ei], now == start, vocab, range, options.strict, stats);
        }
    }

    out.flows.resize(T);
    for (std::size_t i = 1; i < score.flows.size(); ++i) {
        if (score.flows[i].time >= length) continue;
        out.flows[out.frame_at(score.flows[i].time)].push_back(i);
    }
    return out;
}

ScoreFrames build_part_frames(const Score& score, std::size_t part, const DurationVocab& vocab,
                              const PitchRange& range, bool strict, EncodeStats* stats) {
    ScoreFrames out;
    out.parts = 1;
    RationalTime t;
    for (const auto& e : score.parts.at(part).events) {
        if (!e.padding) {
            out.times.push_back(t);
            out.cells.push_back(make_cell(e, true, vocab, range, strict, stats));
        }
        t += e.duration;
    }
    out.flows.resize(out.times.size());
    return out;
}

HistoryTensor history_from_frames(const ScoreFrames& frames, std::size_t frame, std::size_t k, std::size_t N,
                                  std::size_t D) {
    HistoryTensor h(k, frames.parts, N, D);
    for (std::size_t j = 0; j < k; ++j) {
        if (frame + j < k) continue;
        std::size_t src = frame + j - k;
        for (std::size_t p = 0; p < frames.parts; ++p) {
            const FrameCell& c = frames.cell(src, p);
            if (!c.live) continue;
            for (auto a : c.pitches) h.at(j, p, a) = 1;
            h.at(j, p, N + c.duration_slot) = 1;
        }
    }
    return h;
}

EventTargets encode_targets(const Event& event, const DurationVocab& vocab, const PitchRange& range, bool strict,
                            EncodeStats* stats) {
    EventTargets t;
    t.duration_class = vocab.lookup(event.duration, stats, strict) - 1;
    t.pitch_bits.assign(range.size(), 0);
    for (auto p : event.pitches) t.pitch_bits[range.index(p.midi)] = 1;
    return t;
}

HistoryExample encode_history(const Score& score, std::size_t part, std::size_t event_index, std::size_t k,
                              const DurationVocab& vocab, const PitchRange& range, const Resolution& resolution,
                              const FrameOptions& options, EncodeStats* stats) {
    const auto& events = score.parts.at(part).events;
    const Event& target = events.at(event_index);
    if (target.padding) throw std::invalid_argument("padding events are never predicted");
    RationalTime onset;
    for (std::size_t i = 0; i < event_index; ++i) onset += events[i].duration;

    FrameOptions opts = options;
    if (opts.mode == FrameMode::uniform && !opts.resolution) opts.resolution = resolution;
    ScoreFrames frames = build_frames(score, vocab, range, opts, stats);
    HistoryExample ex;
    ex.time = onset;
    ex.history = history_from_frames(frames, frames.frame_at(onset), k, range.size(), vocab.size());
    ex.location.assign(static_cast<std::size_t>(resolution.frames_per_beat), 0);
    ex.location[location_index(onset, resolution.frames_per_beat, stats)] = 1;
    ex.targets = encode_targets(target, vocab, range, opts.strict, stats);
    return ex;
}

HistoryTensor relative_view(const HistoryTensor& h, int center_midi, const PitchRange& range) {
    if (h.N != range.size()) throw EncodeError(EncodeError::Kind::shape, "history pitch axis does not match range");
    const std::size_t N = h.N;
    const std::size_t c = range.index(center_midi);
    HistoryTensor out(h.T, h.P, 2 * N - 1, h.D);
    for (std::size_t t = 0; t < h.T; ++t)
        for (std::size_t p = 0; p < h.P; ++p) {
            for (std::size_t a = 0; a < N; ++a)
                if (h.pitch(t, p, a)) out.at(t, p, a + N - 1 - c) = 1;
            for (std::size_t d = 0; d < h.D; ++d) out.at(t, p, out.N + d) = h.duration(t, p, d);
        }
    return out;
}

HistoryTensor shift_pitches(const HistoryTensor& h, int s) {
    HistoryTensor out(h.T, h.P, h.N, h.D);
    for (std::size_t t = 0; t < h.T; ++t)
        for (std::size_t p = 0; p < h.P; ++p) {
            for (std::size_t a = 0; a < h.N; ++a) {
                long b = static_cast<long>(a) + s;
                if (h.pitch(t, p, a) && b >= 0 && b < static_cast<long>(h.N)) out.at(t, p, static_cast<std::size_t>(b)) = 1;
            }
            for (std::size_t d = 0; d < h.D; ++d) out.at(t, p, h.N + d) = h.duration(t, p, d);
        }
    return out;
}

PitchEmbedding PitchEmbedding::fixed_octave(const PitchRange& range) {
    PitchEmbedding e;
    e.kind = Kind::fixed_octave;
    e.dim = 12;
    e.rows = range.size();
    e.weights.assign(e.rows * 12, 0.0);
    for (std::size_t a = 0; a < e.rows; ++a) e.weights[a * 12 + static_cast<std::size_t>((range.lo + static_cast<int>(a)) % 12)] = 1.0;
    return e;
}

PitchEmbedding PitchEmbedding::learned(std::size_t rows, std::size_t dim, std::vector<double> weights) {
    if (weights.size() != rows * dim) throw EncodeError(EncodeError::Kind::shape, "embedding weights must be rows x dim");
    PitchEmbedding e;
    e.kind = Kind::learned;
    e.rows = rows;
    e.dim = dim;
    e.weights = std::move(weights);
    return e;
}

RealTensor3 embed(const HistoryTensor& h, const PitchEmbedding& e) {
    if (h.N != e.rows) throw EncodeError(EncodeError::Kind::shape, "embedding rows do not match the pitch axis");
    RealTensor3 out{h.T, h.P, e.dim + h.D, {}};
    out.data.assign(out.T * out.P * out.F, 0.0);
    for (std::size_t t = 0; t < h.T; ++t)
        for (std::size_t p = 0; p < h.P; ++p) {
            double* row = &out.data[(t * h.P + p) * out.F];
            for (std::size_t a = 0; a < h.N; ++a)
                if (h.pitch(t, p, a))
                    for (std::size_t j = 0; j < e.dim; ++j) row[j] += e.weights[a * e.dim + j];
            for (std::size_t d = 0; d < h.D; ++d) row[e.dim + d] = h.duration(t, p, d);
        }
    return out;
}

// Comparison encodings ------------------------------------------------------------------

DiscreteGrid encode_discrete_grid(const Score& score, const RationalTime& delta) {
    if (delta <= RationalTime(0)) throw std::invalid_argument("frame length must be positive");
    auto steps = [&](const RationalTime& t, const char* what) {
        RationalTime q = t / delta;
        if (!q.is_integer()) {
            throw EncodeError(EncodeError::Kind::unrepresentable_at_resolution,
                              std::string(what) + " " + t.to_string() + " is not a multiple of " + delta.to_string());
        }
        return static_cast<std::size_t>(q.num());
    };
    DiscreteGrid g;
    g.delta = delta;
    g.parts = score.parts.size();
    g.frames = steps(score.length(), "score length");
    g.on.assign(g.parts * g.frames * DiscreteGrid::kSlots, 0);
    g.onset.assign(g.on.size(), 0);
    for (std::size_t p = 0; p < g.parts; ++p) {
        RationalTime t;
        for (const auto& e : score.parts[p].events) {
            std::size_t s = steps(t, "onset");
            std::size_t n = steps(e.duration, "duration");
            std::vector<std::size_t> slots;
            if (e.padding) {
                slots.push_back(DiscreteGrid::kPadSlot);
            } else if (e.pitches.empty()) {
                slots.push_back(DiscreteGrid::kRestSlot);
            } else {
                for (auto pitch : e.pitches) slots.push_back(static_cast<std::size_t>(pitch.midi));
            }
            for (auto slot : slots) {
                g.onset[g.offset(p, s, slot)] = 1;
                for (std::size_t f = s; f < s + n; ++f) g.on[g.offset(p, f, slot)] = 1;
            }
            t += e.duration;
        }
    }
    return g;
}

Score decode_discrete_grid(const DiscreteGrid& g) {
    Score s;
    s.parts.resize(g.parts);
    for (std::size_t p = 0; p < g.parts; ++p) {
        std::size_t t = 0;
        while (t < g.frames) {
            std::vector<std::size_t> slots;
            for (std::size_t k = 0; k < DiscreteGrid::kSlots; ++k)
                if (g.onset[g.offset(p, t, k)]) slots.push_back(k);
            if (slots.empty()) throw std::runtime_error("grid frame without an event onset");
            std::size_t end = t + 1;
            while (end < g.frames) {
                bool any = false;
                for (std::size_t k = 0; k < DiscreteGrid::kSlots && !any; ++k) any = g.onset[g.offset(p, end, k)] != 0;
                if (any) break;
                ++end;
            }
            Event e;
            e.duration = g.delta * RationalTime(static_cast<std::int64_t>(end - t));
            for (auto k : slots) {
                if (k == DiscreteGrid::kPadSlot) e.padding = true;
                else if (k < 128) e.pitches.push_back(Pitch{static_cast<int>(k)});
            }
            s.parts[p].events.push_back(std::move(e));
            t = end;
        }
    }
    return s;
}

std::vector<RunLengthInstruction> encode_runlength(const Score& score) {
    std::map<RationalTime, std::pair<std::vector<int>, std::vector<int>>> at;  // time -> (stops, starts)
    for (const auto& part : score.parts) {
        RationalTime t;
        for (const auto& e : part.events) {
            if (!e.padding)
                for (auto p : e.pitches) {
                    at[t].second.push_back(p.midi);
                    at[t + e.duration].first.push_back(p.midi);
                }
            t += e.duration;
        }
    }
    std::vector<RunLengthInstruction> out;
    RationalTime clock;
    using K = RunLengthInstruction::Kind;
    for (auto& [time, ops] : at) {
        if (time > clock) out.push_back({K::advance, 0, time - clock});
        clock = time;
        std::sort(ops.first.begin(), ops.first.end());
        std::sort(ops.second.begin(), ops.second.end());
        for (int m : ops.first) out.push_back({K::stop, m, {}});
        for (int m : ops.second) out.push_back({K::start, m, {}});
    }
    return out;
}

std::string to_string(const RunLengthInstruction& ins) {
    switch (ins.kind) {
        case RunLengthInstruction::Kind::start: return "start(" + std::to_string(ins.pitch) + ")";
        case RunLengthInstruction::Kind::stop: return "stop(" + std::to_string(ins.pitch) + ")";
        case RunLengthInstruction::Kind::advance: return "advance(" + ins.beats.to_string() + ")";
    }
    return "?";
}

}  // namespace polyscore
