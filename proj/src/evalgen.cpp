// SPDX-License-Identifier: Apache-2.0
#include "polyscore/evalgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace polyscore {

namespace {

using nlohmann::json;

std::string score_name(const std::vector<std::string>& names, const Score& s, std::size_t i) {
    if (i < names.size()) return names[i];
    if (!s.meta.source_path.empty()) return s.meta.source_path;
    return "score" + std::to_string(i);
}

}  // namespace

EvalReport cross_entropy_rate(const ScoreModel& model, const std::vector<Score>& corpus, const Encoding& enc,
                              const std::vector<std::string>& names) {
    EvalReport r;
    double bits_t = 0, bits_n = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const Score& s = corpus[i];
        const double beats = s.length().to_double();
        if (beats <= 0) {
            ++r.skipped_empty;
            continue;
        }
        auto ctx = build_contexts(s, enc, model.full_score_frames(), &r.oov);
        ScoreRate sr;
        sr.name = score_name(names, s, i);
        sr.beats = beats;
        sr.events = ctx.events.size();
        for (const auto& b : model.nll(ctx.events)) {
            sr.bits_t += b.t;
            sr.bits_n += b.n;
        }
        sr.t_per_beat = sr.bits_t / beats;
        sr.n_per_beat = sr.bits_n / beats;
        bits_t += sr.bits_t;
        bits_n += sr.bits_n;
        r.events += sr.events;
        r.beats += beats;
        r.per_score.push_back(std::move(sr));
    }
    if (r.per_score.empty()) throw EmptyCorpus("no score with positive length to evaluate");

    for (const auto& s : r.per_score) {
        r.loss_t_bits_per_beat += s.t_per_beat;
        r.loss_n_bits_per_beat += s.n_per_beat;
    }
    const double n = static_cast<double>(r.per_score.size());
    r.loss_t_bits_per_beat /= n;
    r.loss_n_bits_per_beat /= n;
    r.total_bits_per_beat = r.loss_t_bits_per_beat + r.loss_n_bits_per_beat;
    if (r.events > 0) {
        const double e = static_cast<double>(r.events);
        r.loss_t_bits_per_event = bits_t / e;
        r.loss_n_bits_per_event = bits_n / e;
        r.bits_per_event = r.loss_t_bits_per_event + r.loss_n_bits_per_event;
    }
    return r;
}

std::string report_json(const EvalReport& r, int indent) {
    json j;
    j["total_bits_per_beat"] = r.total_bits_per_beat;
    j["loss_t_bits_per_beat"] = r.loss_t_bits_per_beat;
    j["loss_n_bits_per_beat"] = r.loss_n_bits_per_beat;
    j["bits_per_event"] = r.bits_per_event;
    j["loss_t_bits_per_event"] = r.loss_t_bits_per_event;
    j["loss_n_bits_per_event"] = r.loss_n_bits_per_event;
    j["events"] = r.events;
    j["beats"] = r.beats;
    j["skipped_empty"] = r.skipped_empty;
    j["oov_durations"] = r.oov.oov_durations;
    j["off_grid_locations"] = r.oov.off_grid_locations;
    j["per_score"] = json::array();
    for (const auto& s : r.per_score) {
        j["per_score"].push_back({{"name", s.name},
                                  {"events", s.events},
                                  {"beats", s.beats},
                                  {"bits_t", s.bits_t},
                                  {"bits_n", s.bits_n},
                                  {"t_per_beat", s.t_per_beat},
                                  {"n_per_beat", s.n_per_beat}});
    }
    return j.dump(indent);
}

EvalReport report_from_json(const std::string& text) {
    const json j = json::parse(text);
    EvalReport r;
    r.total_bits_per_beat = j.at("total_bits_per_beat").get<double>();
    r.loss_t_bits_per_beat = j.at("loss_t_bits_per_beat").get<double>();
    r.loss_n_bits_per_beat = j.at("loss_n_bits_per_beat").get<double>();
    r.bits_per_event = j.at("bits_per_event").get<double>();
    r.loss_t_bits_per_event = j.at("loss_t_bits_per_event").get<double>();
    r.loss_n_bits_per_event = j.at("loss_n_bits_per_event").get<double>();
    r.events = j.at("events").get<std::size_t>();
    r.beats = j.at("beats").get<double>();
    r.skipped_empty = j.value("skipped_empty", std::size_t{0});
    r.oov.oov_durations = j.value("oov_durations", std::size_t{0});
    r.oov.off_grid_locations = j.value("off_grid_locations", std::size_t{0});
    for (const auto& s : j.value("per_score", json::array())) {
        ScoreRate sr;
        sr.name = s.at("name").get<std::string>();
        sr.events = s.at("events").get<std::size_t>();
        sr.beats = s.at("beats").get<double>();
        sr.bits_t = s.at("bits_t").get<double>();
        sr.bits_n = s.at("bits_n").get<double>();
        sr.t_per_beat = s.at("t_per_beat").get<double>();
        sr.n_per_beat = s.at("n_per_beat").get<double>();
        r.per_score.push_back(std::move(sr));
    }
    return r;
}

std::string format_report(const EvalReport& r, bool per_score) {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "bits/beat   total %.4f   Loss_t %.4f   Loss_n %.4f\n", r.total_bits_per_beat,
                  r.loss_t_bits_per_beat, r.loss_n_bits_per_beat);
    os << buf;
    std::snprintf(buf, sizeof buf, "bits/event  total %.4f   Loss_t %.4f   Loss_n %.4f\n", r.bits_per_event,
                  r.loss_t_bits_per_event, r.loss_n_bits_per_event);
    os << buf;
    os << r.per_score.size() << " scores, " << r.events << " events, " << r.beats << " beats";
    if (r.oov.oov_durations) os << ", " << r.oov.oov_durations << " out-of-vocabulary durations";
    if (r.oov.off_grid_locations) os << ", " << r.oov.off_grid_locations << " off-grid onsets";
    if (r.skipped_empty) os << ", " << r.skipped_empty << " empty scores skipped";
    os << '\n';
    if (per_score) {
        for (const auto& s : r.per_score) {
            std::snprintf(buf, sizeof buf, "  %-40s %8.4f %8.4f %8.4f  (%zu events, %.2f beats)\n", s.name.c_str(),
                          s.total_per_beat(), s.t_per_beat, s.n_per_beat, s.events, s.beats);
            os << buf;
        }
    }
    return os.str();
}

// Refinement -----------------------------------------------------------------------

RefinementReport refinement_invariance_check(const ScoreModel& model, const std::vector<Score>& corpus,
                                             const Encoding& enc, const std::vector<RationalTime>& deltas,
                                             double tolerance) {
    RefinementReport rep;
    rep.delta = enc.resolution.delta;
    rep.reference_rate = cross_entropy_rate(model, corpus, enc).total_bits_per_beat;
    rep.pass = true;
    for (const auto& delta : deltas) {
        RefinementLevel lv;
        lv.delta = delta;
        std::vector<Score> decoded;
        lv.encoded = true;
        lv.events_equal = true;
        for (std::size_t i = 0; i < corpus.size() && lv.encoded && lv.events_equal; ++i) {
            try {
                Score d = decode_discrete_grid(encode_discrete_grid(corpus[i], delta));
                // The grid carries events only; the flow schedule is time-indexed and reattached.
                d.flows = corpus[i].flows;
                d.meta = corpus[i].meta;
                if (!events_equal(d, corpus[i])) {
                    lv.events_equal = false;
                    lv.message = "score " + std::to_string(i) + ": events differ after decoding";
                }
                decoded.push_back(std::move(d));
            } catch (const EncodeError& e) {
                lv.encoded = false;
                lv.events_equal = false;
                lv.message = "score " + std::to_string(i) + ": " + e.what();
            }
        }
        if (lv.encoded && lv.events_equal) {
            lv.rate = cross_entropy_rate(model, decoded, enc).total_bits_per_beat;
            lv.difference = std::abs(lv.rate - rep.reference_rate);
            if (!(lv.difference < tolerance)) lv.message = "rate differs by " + std::to_string(lv.difference);
        }
        if (!lv.pass(tolerance)) {
            if (rep.pass) rep.first_discrepancy = "delta " + delta.to_string() + ": " + lv.message;
            rep.pass = false;
        }
        rep.levels.push_back(std::move(lv));
    }
    return rep;
}

RefinementReport refinement_invariance_check(const ScoreModel& model, const std::vector<Score>& corpus,
                                             const Encoding& enc) {
    const RationalTime d = enc.resolution.delta;
    return refinement_invariance_check(model, corpus, enc, {d / RationalTime(2), d / RationalTime(4)});
}

// Sampling -------------------------------------------------------------------------

SampledEvent sample_event(const ScoreModel& model, const EventContext& ctx, ad::Rng& rng, double temperature) {
    SampledEvent out;
    const bool greedy = temperature <= 0;
    const auto dl = model.duration_logits(ctx);
    if (greedy) {
        out.duration_class = static_cast<std::size_t>(std::max_element(dl.begin(), dl.end()) - dl.begin());
    } else {
        const auto p = ad::softmax(ad::Tensor::column(dl), temperature);
        double u = rng.uniform(), acc = 0;
        out.duration_class = p.size() - 1;
        for (std::size_t i = 0; i < p.size(); ++i) {
            acc += p[i];
            if (u < acc) {
                out.duration_class = i;
                break;
            }
        }
    }

    const auto pl = model.pitch_logits(ctx, out.duration_class);
    const std::size_t N = pl.base.size();
    out.pitch_bits.assign(N, 0);
    for (std::size_t n = 0; n < N; ++n) {
        double z = pl.base[n];
        for (std::size_t j = 0; j < n; ++j)
            if (out.pitch_bits[j]) z += pl.coupling[n * N + j];
        bool on = greedy ? z > 0 : rng.uniform() < ad::sigmoid_value(z / temperature);
        out.pitch_bits[n] = on ? 1 : 0;
    }
    return out;
}

Event to_event(const SampledEvent& s, const Encoding& enc) {
    std::vector<int> notes;
    for (std::size_t n = 0; n < s.pitch_bits.size(); ++n)
        if (s.pitch_bits[n]) notes.push_back(enc.range.lo + static_cast<int>(n));
    return make_event(enc.vocab.duration(s.duration_class + 1), notes);
}

std::size_t GenerationState::next_part() const {
    return static_cast<std::size_t>(std::min_element(clocks.begin(), clocks.end()) - clocks.begin());
}

Score GenerationState::partial() const {
    Score s;
    s.parts = parts;
    return s;
}

Score generate(const ScoreModel& model, const Encoding& enc, const GenerateOptions& o) {
    if (o.parts == 0 || o.parts > o.max_parts)
        throw std::invalid_argument("part count must be in [1, " + std::to_string(o.max_parts) + "]");
    if (o.length < RationalTime(0)) throw std::invalid_argument("length must be non-negative");
    GenerationState st(o.parts, o.seed);
    ad::Rng rng(o.seed);
    const RationalTime span = enc.vocab.max_duration();
    for (std::size_t p = 0; p < o.parts; ++p) st.parts[p].name = "part" + std::to_string(p + 1);

    while (true) {
        const std::size_t p = st.next_part();
        const RationalTime now = st.clocks[p];
        if (now >= o.length) break;

        // Every part has emitted everything that starts before `now`, so the
        // history seen here equals the one seen when scoring the finished score.
        auto set = std::make_shared<FrameSet>();
        const Score partial = st.partial();
        std::size_t channel = p;
        if (model.full_score_frames()) {
            set->frames = build_frames(partial, enc.vocab, enc.range);
        } else {
            set->frames = build_part_frames(partial, p, enc.vocab, enc.range);
            channel = 0;
        }
        EventContext ctx = generation_context(set, channel, p, now, enc);
        Event e = to_event(sample_event(model, ctx, rng, o.temperature), enc);
        if (now + e.duration > o.length) e.duration = o.length - now;
        st.parts[p].events.push_back(std::move(e));
        st.clocks[p] = now + st.parts[p].events.back().duration;

        const auto [lo, hi] = std::minmax_element(st.clocks.begin(), st.clocks.end());
        if (*hi - *lo > span) throw std::logic_error("part clocks drifted apart by more than one event");
    }
    Score out = st.partial();
    out.flows = {FlowStep{RationalTime(0), FlowMatrix::identity(o.parts)}};
    return out;
}

}  // namespace polyscore
