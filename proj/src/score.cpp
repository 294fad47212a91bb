// SPDX-License-Identifier: Apache-2.0
#include "polyscore/score.hpp"

#include <algorithm>
#include <stdexcept>

namespace polyscore {

Event make_event(RationalTime duration, std::vector<int> midi_numbers) {
    std::sort(midi_numbers.begin(), midi_numbers.end());
    midi_numbers.erase(std::unique(midi_numbers.begin(), midi_numbers.end()), midi_numbers.end());
    Event e;
    e.duration = duration;
    for (int m : midi_numbers) e.pitches.push_back(Pitch{m});
    return e;
}

RationalTime Part::length() const {
    RationalTime t;
    for (const auto& e : events) t += e.duration;
    return t;
}

std::vector<RationalTime> Part::onsets() const {
    std::vector<RationalTime> out;
    out.reserve(events.size());
    RationalTime t;
    for (const auto& e : events) {
        out.push_back(t);
        t += e.duration;
    }
    return out;
}

FlowMatrix FlowMatrix::identity(std::size_t parts) {
    FlowMatrix m(parts);
    for (std::size_t i = 0; i < parts; ++i) m.set(i, i, 1);
    return m;
}

std::size_t FlowMatrix::row_sum(std::size_t dest) const {
    std::size_t s = 0;
    for (std::size_t j = 0; j < n_; ++j) s += at(dest, j);
    return s;
}

std::size_t FlowMatrix::col_sum(std::size_t src) const {
    std::size_t s = 0;
    for (std::size_t i = 0; i < n_; ++i) s += at(i, src);
    return s;
}

bool FlowMatrix::is_identity() const { return *this == identity(n_); }

FlowMatrix FlowMatrix::compose_after(const FlowMatrix& first) const {
    if (first.n_ != n_) throw std::invalid_argument("flow matrix size mismatch");
    FlowMatrix out(n_);
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t k = 0; k < n_; ++k)
            if (at(i, k))
                for (std::size_t j = 0; j < n_; ++j)
                    if (first.at(k, j)) out.set(i, j, 1);
    return out;
}

RationalTime Score::length() const {
    RationalTime t;
    for (const auto& p : parts) t = std::max(t, p.length());
    return t;
}

bool Score::flow_free() const {
    return std::all_of(flows.begin(), flows.end(), [](const FlowStep& f) { return f.matrix.is_identity(); });
}

std::size_t Score::note_count() const {
    std::size_t n = 0;
    for (const auto& p : parts)
        for (const auto& e : p.events)
            if (!e.padding) n += e.pitches.size();
    return n;
}

void validate_score(const Score& score, std::size_t max_parts) {
    if (score.parts.empty() || score.parts.size() > max_parts) {
        throw std::invalid_argument("score must have between 1 and " + std::to_string(max_parts) + " parts, has " +
                                    std::to_string(score.parts.size()));
    }
    const RationalTime total = score.length();
    for (std::size_t p = 0; p < score.parts.size(); ++p) {
        const auto& part = score.parts[p];
        for (const auto& e : part.events) {
            if (e.duration <= RationalTime(0)) throw std::invalid_argument("non-positive event duration");
            for (std::size_t i = 0; i < e.pitches.size(); ++i) {
                if (e.pitches[i].midi < 0 || e.pitches[i].midi > 127) throw std::invalid_argument("pitch out of MIDI range");
                if (i > 0 && !(e.pitches[i - 1] < e.pitches[i])) throw std::invalid_argument("pitches not sorted/unique");
            }
        }
        if (part.length() != total) {
            throw std::invalid_argument("part " + std::to_string(p) + " has length " + part.length().to_string() +
                                        " but score length is " + total.to_string());
        }
    }
    for (const auto& f : score.flows) {
        if (f.matrix.size() != score.parts.size()) throw std::invalid_argument("flow matrix size differs from part count");
    }
}

bool events_equal(const Score& a, const Score& b) {
    if (a.parts.size() != b.parts.size()) return false;
    for (std::size_t p = 0; p < a.parts.size(); ++p) {
        if (a.parts[p].events != b.parts[p].events) return false;
    }
    return true;
}

std::vector<EventRef> prediction_schedule(const Score& score) {
    std::vector<EventRef> refs;
    for (std::size_t p = 0; p < score.parts.size(); ++p) {
        RationalTime t;
        const auto& events = score.parts[p].events;
        for (std::size_t i = 0; i < events.size(); ++i) {
            if (!events[i].padding) refs.push_back(EventRef{p, i, t});
            t += events[i].duration;
        }
    }
    std::stable_sort(refs.begin(), refs.end(), [](const EventRef& a, const EventRef& b) {
        if (a.onset != b.onset) return a.onset < b.onset;
        return a.part < b.part;
    });
    return refs;
}

}  // namespace polyscore
