// SPDX-License-Identifier: Apache-2.0
// Helpers shared by the unit tests and the acceptance runner.
#pragma once

#include <random>
#include <utility>
#include <vector>

#include "polyscore/model.hpp"
#include "polyscore/score.hpp"

namespace polyscore::testing {

inline Score single_part(const std::vector<std::pair<RationalTime, std::vector<int>>>& evs) {
    Score s;
    s.parts.emplace_back();
    for (const auto& [d, p] : evs) s.parts[0].events.push_back(make_event(d, p));
    return s;
}

/// Random flow-free score; pitches in [lo, lo + span), parts padded with a
/// final rest to a common length.
inline Score random_score(std::mt19937_64& rng, std::size_t max_parts = 3, std::size_t max_events = 8, int lo = 48,
                          int span = 30) {
    static const std::vector<RationalTime> durs = {RationalTime(1, 4), RationalTime(1, 3), RationalTime(1, 2),
                                                   RationalTime(1), RationalTime(3, 2), RationalTime(2)};
    Score s;
    std::size_t parts = 1 + rng() % max_parts;
    for (std::size_t p = 0; p < parts; ++p) {
        Part part;
        std::size_t n = 1 + rng() % max_events;
        for (std::size_t k = 0; k < n; ++k) {
            std::vector<int> notes;
            for (std::size_t c = rng() % 3; c > 0; --c) notes.push_back(lo + static_cast<int>(rng() % span));
            part.events.push_back(make_event(durs[rng() % durs.size()], notes));
        }
        s.parts.push_back(part);
    }
    RationalTime total = s.length();
    for (auto& p : s.parts)
        if (p.length() < total) p.events.push_back(make_event(total - p.length(), {}));
    return s;
}

inline Encoding encoding_for(const std::vector<Score>& corpus) {
    Encoding e;
    e.vocab = DurationVocab::from_corpus(corpus);
    e.range = PitchRange::from_corpus(corpus);
    e.resolution = compute_resolution(corpus);
    return e;
}

inline void fill_params(ad::ParamSet& ps, double v) {
    for (auto* p : ps.all()) std::fill(p->value.data.begin(), p->value.data.end(), v);
}

inline void randomize_params(ad::ParamSet& ps, std::uint64_t seed, double scale = 0.5) {
    ad::Rng rng(seed);
    for (auto* p : ps.all())
        for (auto& v : p->value.data) v = rng.uniform(-scale, scale);
}

inline Score transpose(Score s, int semitones) {
    for (auto& p : s.parts)
        for (auto& e : p.events)
            for (auto& q : e.pitches) q.midi += semitones;
    return s;
}

inline Score permute_parts(const Score& s, const std::vector<std::size_t>& order) {
    Score out = s;
    for (std::size_t i = 0; i < order.size(); ++i) out.parts[i] = s.parts[order[i]];
    return out;
}

}  // namespace polyscore::testing
