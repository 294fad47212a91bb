// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "polyscore/coupled.hpp"
#include "polyscore/evalgen.hpp"
#include "polyscore/kern.hpp"
#include "support.hpp"

#include <cmath>
#include <functional>
#include <map>

using namespace polyscore;
using namespace polyscore::testing;

namespace {

const std::string kData = POLYSCORE_TEST_DATA;

std::vector<Score> fixtures() {
    std::vector<Score> out;
    for (const char* f : {"chords.krn", "split_merge.krn", "texture4.krn", "ties.krn", "triplets.krn"})
        out.push_back(kern::parse_kern_file(kData + "/fixtures/" + f));
    return out;
}

Encoding tiny_encoding(std::vector<RationalTime> durations, int lo, int hi) {
    Encoding e;
    e.vocab = DurationVocab(std::move(durations));
    e.range = PitchRange{lo, hi};
    e.resolution = Resolution::from_frames_per_beat(1);
    return e;
}

}  // namespace

TEST_CASE("one event at probability one half for each of duration and pitches costs two bits per beat") {
    Encoding enc = tiny_encoding({RationalTime(1), RationalTime(2)}, 60, 61);
    HomophonicModel m(ModelSpec::parse("bias"), enc.dims());
    fill_params(m.params(), 0.0);
    auto r = cross_entropy_rate(m, {single_part({{RationalTime(1), {60}}})}, enc);
    CHECK(r.total_bits_per_beat == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(r.loss_t_bits_per_beat == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.bits_per_event == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("rates average per-score bits per beat without weighting by length") {
    auto corpus = fixtures();
    Encoding enc = encoding_for(corpus);
    for (const char* spec : {"lin,k=4,rel,loc,pc", "rnn,k=3,h=4,cont"}) {
        HomophonicModel m(ModelSpec::parse(spec), enc.dims(), 3);
        randomize_params(m.params(), 5);
        auto r = cross_entropy_rate(m, corpus, enc);
        REQUIRE(r.per_score.size() == corpus.size());
        double t = 0, n = 0;
        std::size_t events = 0;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            auto ctx = build_contexts(corpus[i], enc, m.full_score_frames());
            double bt = 0, bn = 0;
            for (const auto& b : m.nll(ctx.events)) {
                bt += b.t;
                bn += b.n;
            }
            t += bt / corpus[i].length().to_double();
            n += bn / corpus[i].length().to_double();
            events += ctx.events.size();
            CHECK(r.per_score[i].bits_t == doctest::Approx(bt).epsilon(1e-14));
        }
        CHECK(r.loss_t_bits_per_beat == doctest::Approx(t / corpus.size()).epsilon(1e-14));
        CHECK(r.loss_n_bits_per_beat == doctest::Approx(n / corpus.size()).epsilon(1e-14));
        CHECK(std::abs(r.total_bits_per_beat - (r.loss_t_bits_per_beat + r.loss_n_bits_per_beat)) <= 1e-9);
        CHECK(r.events == events);

        auto back = report_from_json(report_json(r));
        CHECK(back.total_bits_per_beat == r.total_bits_per_beat);
        CHECK(back.loss_n_bits_per_beat == r.loss_n_bits_per_beat);
        CHECK(back.per_score.size() == r.per_score.size());
        CHECK(back.per_score[2].bits_n == r.per_score[2].bits_n);
        CHECK(format_report(r, true).find("bits/beat") != std::string::npos);
    }
}

TEST_CASE("an empty corpus cannot be evaluated") {
    Encoding enc = tiny_encoding({RationalTime(1)}, 60, 62);
    HomophonicModel m(ModelSpec::parse("bias"), enc.dims());
    CHECK_THROWS_AS(cross_entropy_rate(m, {}, enc), EmptyCorpus);
    Score empty;
    empty.parts.emplace_back();
    CHECK_THROWS_AS(cross_entropy_rate(m, {empty}, enc), EmptyCorpus);
}

TEST_CASE("out-of-vocabulary durations are counted") {
    Encoding enc = tiny_encoding({RationalTime(1), RationalTime(2)}, 60, 62);
    HomophonicModel m(ModelSpec::parse("bias"), enc.dims());
    auto r = cross_entropy_rate(m, {single_part({{RationalTime(3), {60}}, {RationalTime(1), {}}})}, enc);
    CHECK(r.oov.oov_durations == 1);
}

TEST_CASE("rates do not change when the grid is refined") {
    auto corpus = fixtures();
    Encoding enc = encoding_for(corpus);
    HomophonicModel lin(ModelSpec::parse("lin,k=4,rel,loc,pc"), enc.dims(), 2);
    CoupledModel hier(CoupledSpec::parse("hier,pk=3,gk=3,h=3,loc"), enc.dims(), 2);
    randomize_params(lin.params(), 1);
    randomize_params(hier.params(), 1);
    for (const ScoreModel* m : {static_cast<const ScoreModel*>(&lin), static_cast<const ScoreModel*>(&hier)}) {
        auto r = refinement_invariance_check(*m, corpus, enc);
        CHECK(r.pass);
        REQUIRE(r.levels.size() == 2);
        for (const auto& lv : r.levels) CHECK(lv.difference < 1e-12);

        auto coarse = refinement_invariance_check(*m, corpus, enc, {enc.resolution.delta * RationalTime(2)});
        CHECK_FALSE(coarse.pass);
        CHECK_FALSE(coarse.levels[0].encoded);
        CHECK(coarse.first_discrepancy.find("not a multiple") != std::string::npos);
    }
}

TEST_CASE("untrained samples are uniform over durations") {
    Score s = single_part({{RationalTime(1), {60}}, {RationalTime(1, 2), {62}}, {RationalTime(3, 2), {}},
                           {RationalTime(2), {64}}, {RationalTime(1, 4), {65}}});
    Encoding enc = encoding_for({s});
    HomophonicModel m(ModelSpec::parse("lin,k=3,loc"), enc.dims());
    fill_params(m.params(), 0.0);
    auto ctx = build_contexts(s, enc, false).events[2];
    const std::size_t K = enc.vocab.onset_classes(), n = 10000, N = enc.range.size();
    std::vector<std::size_t> counts(K, 0);
    std::vector<std::size_t> bits(N, 0);
    ad::Rng rng(17);
    for (std::size_t i = 0; i < n; ++i) {
        auto e = sample_event(m, ctx, rng);
        ++counts.at(e.duration_class);
        for (std::size_t j = 0; j < N; ++j) bits[j] += e.pitch_bits[j];
    }
    const double p = 1.0 / static_cast<double>(K);
    const double sigma = std::sqrt(n * p * (1 - p));
    for (auto c : counts) CHECK(std::abs(static_cast<double>(c) - n * p) < 3 * sigma);
    for (auto b : bits) CHECK(std::abs(static_cast<double>(b) - n * 0.5) < 3 * std::sqrt(n * 0.25));
}

TEST_CASE("the mean bits of self-sampled events match the model entropy") {
    Score s;
    s.parts.resize(2);
    s.parts[0].events = {make_event(RationalTime(1), {60}), make_event(RationalTime(1, 2), {61, 62}),
                         make_event(RationalTime(1, 2), {})};
    s.parts[1].events = {make_event(RationalTime(1, 2), {62}), make_event(RationalTime(3, 2), {60})};
    Encoding enc = encoding_for({s});
    REQUIRE(enc.range.size() == 3);
    HomophonicModel lin(ModelSpec::parse("lin,k=2,abs,loc,cont"), enc.dims(), 1);
    CoupledModel dist(CoupledSpec::parse("dist,pk=2,h=3,pc"), enc.dims(), 1);
    randomize_params(lin.params(), 3, 1.0);
    randomize_params(dist.params(), 3, 1.0);
    for (const ScoreModel* m : {static_cast<const ScoreModel*>(&lin), static_cast<const ScoreModel*>(&dist)}) {
        EventContext base = build_contexts(s, enc, true).events[3];
        double H = 0, H2 = 0;
        for (std::size_t yt = 0; yt < enc.vocab.onset_classes(); ++yt)
            for (int bits = 0; bits < 8; ++bits) {
                EventContext c = base;
                c.targets.duration_class = yt;
                c.targets.pitch_bits = {static_cast<std::uint8_t>(bits & 1), static_cast<std::uint8_t>((bits >> 1) & 1),
                                        static_cast<std::uint8_t>(bits >> 2)};
                auto b = m->event_nll(c);
                double q = std::exp2(-(b.t + b.n));
                H += q * (b.t + b.n);
                H2 += q * (b.t + b.n) * (b.t + b.n);
            }
        const double sd = std::sqrt(H2 - H * H);
        ad::Rng rng(4);
        const int n = 4000;
        double mean = 0;
        for (int i = 0; i < n; ++i) {
            auto e = sample_event(*m, base, rng);
            EventContext c = base;
            c.targets.duration_class = e.duration_class;
            c.targets.pitch_bits = e.pitch_bits;
            auto b = m->event_nll(c);
            mean += (b.t + b.n) / n;
        }
        CHECK(std::abs(mean - H) < 3 * sd / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("scoring every complete generation path gives total probability one") {
    Encoding enc = tiny_encoding({RationalTime(1), RationalTime(2)}, 60, 61);
    const RationalTime L(2);
    HomophonicModel lin(ModelSpec::parse("lin,k=2,abs,loc"), enc.dims(), 1);
    HomophonicModel rnn(ModelSpec::parse("rnn,k=2,h=2,cont"), enc.dims(), 1);
    CoupledModel hier(CoupledSpec::parse("hier,pk=2,gk=2,h=2,abs,loc"), enc.dims(), 1);
    randomize_params(lin.params(), 6, 1.0);
    randomize_params(rnn.params(), 6, 1.0);
    randomize_params(hier.params(), 6, 1.0);
    for (const ScoreModel* m : {static_cast<const ScoreModel*>(&lin), static_cast<const ScoreModel*>(&rnn),
                                static_cast<const ScoreModel*>(&hier)}) {
        CAPTURE(m->spec_string());
        double total = 0;
        std::size_t paths = 0;
        GenerationState st(3);
        std::function<void()> walk = [&]() {
            const std::size_t p = st.next_part();
            if (st.clocks[p] >= L) {
                Score s = st.partial();
                const RationalTime end = s.length();
                for (auto& part : s.parts)
                    if (part.length() < end) {
                        Event pad = make_event(end - part.length(), {});
                        pad.padding = true;
                        part.events.push_back(pad);
                    }
                double bits = 0;
                for (const auto& b : m->nll(build_contexts(s, enc, m->full_score_frames()).events)) bits += b.t + b.n;
                total += std::exp2(-bits);
                ++paths;
                return;
            }
            for (std::size_t d = 1; d <= 2; ++d)
                for (int bit = 0; bit < 2; ++bit) {
                    const RationalTime saved = st.clocks[p];
                    st.parts[p].events.push_back(make_event(enc.vocab.duration(d), bit ? std::vector<int>{60} : std::vector<int>{}));
                    st.clocks[p] = saved + enc.vocab.duration(d);
                    walk();
                    st.parts[p].events.pop_back();
                    st.clocks[p] = saved;
                }
        };
        walk();
        CHECK(paths == 1000);
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
}

TEST_CASE("generation conditions on the same history as scoring") {
    auto corpus = fixtures();
    Encoding enc = encoding_for(corpus);
    HomophonicModel lin(ModelSpec::parse("lin,k=4,rel,loc,pc"), enc.dims(), 2);
    HomophonicModel cont(ModelSpec::parse("conv=3,k=4,h=4,loc,cont"), enc.dims(), 2);
    CoupledModel hier(CoupledSpec::parse("hier,pk=3,gk=4,h=4,loc"), enc.dims(), 2);
    for (auto* m : {static_cast<ScoreModel*>(&lin), static_cast<ScoreModel*>(&cont), static_cast<ScoreModel*>(&hier)}) {
        CAPTURE(m->spec_string());
        randomize_params(m->params(), 9, 1.0);
        GenerateOptions o;
        o.parts = 3;
        o.length = RationalTime(10);
        o.seed = 5;
        o.temperature = 0;
        Score s = generate(*m, enc, o);
        validate_score(s);
        std::size_t checked = 0;
        for (const auto& c : build_contexts(s, enc, m->full_score_frames()).events) {
            // The last event of a part may have been cut at the boundary.
            const auto& events = s.parts[c.part].events;
            if (c.onset == s.parts[c.part].length() - events.back().duration) continue;
            ad::Rng rng(0);
            auto e = sample_event(*m, c, rng, 0);
            CHECK(e.duration_class == c.targets.duration_class);
            CHECK(e.pitch_bits == c.targets.pitch_bits);
            ++checked;
        }
        CHECK(checked > 6);
    }
}

TEST_CASE("generated scores are deterministic, bounded and round-trip through kern") {
    auto corpus = fixtures();
    Encoding enc = encoding_for(corpus);
    HomophonicModel lin(ModelSpec::parse("lin,k=4,rel,loc,pc"), enc.dims(), 2);
    CoupledModel dist(CoupledSpec::parse("dist,pk=3,h=4"), enc.dims(), 2);
    randomize_params(lin.params(), 2);
    randomize_params(dist.params(), 2);
    for (const ScoreModel* m : {static_cast<const ScoreModel*>(&lin), static_cast<const ScoreModel*>(&dist)}) {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            GenerateOptions o;
            o.parts = 1 + seed % 4;
            o.length = RationalTime(static_cast<std::int64_t>(seed % 5 + 2), 1 + seed % 2);
            o.seed = seed;
            Score s = generate(*m, enc, o);
            validate_score(s);
            CHECK(s.length() == o.length);
            CHECK(s.parts.size() == o.parts);
            const std::string text = kern::serialize_kern(s);
            CHECK(kern::serialize_kern(generate(*m, enc, o)) == text);
            CHECK(events_equal(kern::parse_kern(text), s));
        }
    }
    GenerateOptions zero;
    zero.parts = 2;
    Score empty = generate(lin, enc, zero);
    CHECK(empty.parts.size() == 2);
    CHECK(empty.parts[0].events.empty());
    zero.parts = 7;
    CHECK_THROWS_AS(generate(lin, enc, zero), std::invalid_argument);
}
