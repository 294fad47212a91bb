// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "polyscore/model.hpp"
#include "support.hpp"

#include <cmath>

using namespace polyscore;
using namespace polyscore::testing;

namespace {

const std::vector<std::string> kSpecs = {
    "bias",
    "lin,k=3",
    "lin,k=3,rel,loc,pc",
    "lin,k=2,temb=fixed12,emb=learned3",
    "fc,k=3,h=4",
    "fc,k=3,rel,pc,emb=learned3,temb=fixed12,h=4",
    "conv=5:3,k=4,h=3",
    "conv=3,k=3,rel,pc,loc,emb=learned3,temb=fixed12,h=3",
    "rnn,k=3,h=4",
    "rnn,k=3,rel,pc,loc,h=4,cont",
    "rnn,k=3,rel,emb=learned3,temb=fixed12,h=3",
};

std::vector<Score> small_corpus(std::uint64_t seed, std::size_t n = 3, int span = 5) {
    std::mt19937_64 rng(seed);
    std::vector<Score> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(random_score(rng, 2, 6, 60, span));
    return out;
}

double total_bits(const ScoreModel& m, const std::vector<EventContext>& events) {
    double s = 0;
    for (auto b : m.nll(events)) s += b.t + b.n;
    return s;
}

}  // namespace

TEST_CASE("spec strings parse and print") {
    auto s = ModelSpec::parse("rnn,k=10,rel,loc,pc,emb=learned16");
    CHECK(s.body == BodyKind::rnn);
    CHECK(s.history_k == 10);
    CHECK(s.pitch_mode == PitchMode::relative);
    CHECK(s.use_location);
    CHECK(s.use_pitch_class);
    CHECK(s.pitch_embed_dim == 16);
    CHECK(s.to_string() == "rnn,k=10,rel,loc,pc,emb=learned16,h=32");
    CHECK(ModelSpec::parse(s.to_string()) == s);

    auto c = ModelSpec::parse("conv=5:3,k=10,temb=fixed12");
    CHECK(c.conv_widths == std::vector<std::size_t>{5, 3});
    CHECK(c.duration_embed_fixed);
    CHECK(ModelSpec::parse(c.to_string()) == c);
    CHECK(ModelSpec::parse("loglinear,k=5").body == BodyKind::loglinear);
    CHECK(ModelSpec::parse("bias,loc,k=9").to_string() == "bias");

    CHECK_THROWS_AS(ModelSpec::parse("lstm"), SpecError);
    CHECK_THROWS_AS(ModelSpec::parse("lin,pc"), SpecError);
    CHECK_THROWS_AS(ModelSpec::parse("lin,k=0"), SpecError);
    CHECK_THROWS_AS(ModelSpec::parse("lin,k=x"), SpecError);
    CHECK_THROWS_AS(ModelSpec::parse("conv=5:"), SpecError);
    CHECK_THROWS_AS(ModelSpec::parse("lin,wide"), SpecError);
    for (const auto& text : kSpecs) CHECK(ModelSpec::parse(ModelSpec::parse(text).to_string()) == ModelSpec::parse(text));
}

TEST_CASE("zero weights give uniform predictions") {
    auto corpus = small_corpus(3);
    Encoding enc = encoding_for(corpus);
    const double N = static_cast<double>(enc.range.size());
    const double D1 = static_cast<double>(enc.vocab.onset_classes());
    for (const auto& text : kSpecs) {
        CAPTURE(text);
        HomophonicModel m(ModelSpec::parse(text), enc.dims(), 7);
        fill_params(m.params(), 0.0);
        auto ctx = build_contexts(corpus[0], enc, m.full_score_frames());
        for (auto b : m.nll(ctx.events)) {
            CHECK(b.t == doctest::Approx(std::log2(D1)).epsilon(1e-12));
            CHECK(b.n == doctest::Approx(N).epsilon(1e-12));
        }
        auto pl = m.pitch_logits(ctx.events[0], 0);
        for (double v : pl.base) CHECK(v == 0.0);
    }
}

TEST_CASE("bias body ignores the history") {
    auto corpus = small_corpus(4);
    Encoding enc = encoding_for(corpus);
    HomophonicModel m(ModelSpec::parse("bias"), enc.dims(), 2);
    randomize_params(m.params(), 9);
    auto ctx = build_contexts(corpus[0], enc, false);
    REQUIRE(ctx.events.size() > 2);
    CHECK(m.duration_logits(ctx.events[0]) == m.duration_logits(ctx.events.back()));
    CHECK(m.pitch_logits(ctx.events[0], 1).base == m.pitch_logits(ctx.events.back(), 1).base);
    CHECK(m.params().scalar_count() == enc.vocab.onset_classes() + enc.range.size());
}

TEST_CASE("every body passes a gradient check") {
    auto corpus = small_corpus(11, 2, 4);
    Encoding enc = encoding_for(corpus);
    for (const auto& text : kSpecs) {
        CAPTURE(text);
        HomophonicModel m(ModelSpec::parse(text), enc.dims(), 5);
        randomize_params(m.params(), 13, 0.7);
        auto ctx = build_contexts(corpus[1], enc, m.full_score_frames());
        auto forward = [&](ad::Graph& g) {
            std::vector<ad::Var> terms;
            for (auto& l : m.losses(g, ctx.events)) {
                terms.push_back(l.t);
                terms.push_back(l.n);
            }
            ad::Var s = terms[0];
            for (std::size_t i = 1; i < terms.size(); ++i) s = ad::add(s, terms[i]);
            return s;
        };
        ad::GradCheckOptions o;
        o.max_entries_per_param = 40;
        auto report = ad::grad_check(forward, m.params(), o);
        CHECK(report.pass);
        CHECK(report.max_rel_error <= 1e-4);
    }
}

TEST_CASE("distribution over outcomes sums to one on a two-pitch range") {
    std::vector<Score> corpus = {single_part({{RationalTime(1), {60}},
                                              {RationalTime(1, 2), {61}},
                                              {RationalTime(1, 2), {60, 61}},
                                              {RationalTime(1), {}}})};
    Encoding enc = encoding_for(corpus);
    REQUIRE(enc.range.size() == 2);
    REQUIRE(enc.vocab.size() == 3);
    for (const auto& text : kSpecs) {
        CAPTURE(text);
        HomophonicModel m(ModelSpec::parse(text), enc.dims(), 3);
        randomize_params(m.params(), 21, 1.5);
        auto ctx = build_contexts(corpus[0], enc, m.full_score_frames());
        for (const auto& base : ctx.events) {
            double total = 0;
            for (std::size_t yt = 0; yt < 2; ++yt)
                for (int bits = 0; bits < 4; ++bits) {
                    EventContext c = base;
                    c.targets.duration_class = yt;
                    c.targets.pitch_bits = {static_cast<std::uint8_t>(bits & 1), static_cast<std::uint8_t>(bits >> 1)};
                    auto b = m.event_nll(c);
                    total += std::exp2(-(b.t + b.n));
                }
            CHECK(std::abs(total - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("pitch logits decompose into a base and a lower-bit coupling") {
    auto corpus = small_corpus(8, 2, 6);
    Encoding enc = encoding_for(corpus);
    const std::size_t N = enc.range.size();
    for (const auto& text : kSpecs) {
        CAPTURE(text);
        HomophonicModel m(ModelSpec::parse(text), enc.dims(), 4);
        randomize_params(m.params(), 5);
        auto ctx = build_contexts(corpus[0], enc, m.full_score_frames());
        for (const auto& c : ctx.events) {
            auto pl = m.pitch_logits(c, c.targets.duration_class);
            double bits = 0;
            for (std::size_t n = 0; n < N; ++n) {
                double z = pl.base[n];
                for (std::size_t j = 0; j < n; ++j)
                    if (c.targets.pitch_bits[j]) z += pl.coupling[n * N + j];
                bits += ad::bce_bits(z, c.targets.pitch_bits[n] != 0);
            }
            CHECK(bits == doctest::Approx(m.event_nll(c).n).epsilon(1e-12));
        }
    }
}

TEST_CASE("relative pitch logits are transposition equivariant without pitch-class features") {
    std::mt19937_64 rng(17);
    Encoding enc;
    enc.range = PitchRange{48, 80};
    const std::size_t N = enc.range.size();
    for (const char* text : {"lin,k=4,rel", "fc,k=3,rel,h=5", "conv=3:3,k=4,rel,h=3", "rnn,k=4,rel,h=5,emb=learned4",
                             "rnn,k=4,rel,h=4,cont"}) {
        CAPTURE(text);
        for (int trial = 0; trial < 10; ++trial) {
            Score s = random_score(rng, 2, 6, 50, 14);
            enc.vocab = DurationVocab::from_corpus({s});
            enc.resolution = compute_resolution({s});
            HomophonicModel m(ModelSpec::parse(text), enc.dims(), 100 + trial);
            randomize_params(m.params(), 200 + trial);
            const int shift = 1 + static_cast<int>(rng() % 12);
            Score up = transpose(s, shift);
            auto a = build_contexts(s, enc, m.full_score_frames());
            auto b = build_contexts(up, enc, m.full_score_frames());
            REQUIRE(a.events.size() == b.events.size());
            for (std::size_t e = 0; e < a.events.size(); ++e) {
                auto la = m.pitch_logits(a.events[e], 0);
                auto lb = m.pitch_logits(b.events[e], 0);
                for (std::size_t n = 0; n + shift < N; ++n) {
                    CHECK(la.base[n] == lb.base[n + shift]);
                    for (std::size_t j = 0; j < n; ++j) CHECK(la.coupling[n * N + j] == lb.coupling[(n + shift) * N + j + shift]);
                }
            }
        }
    }
    // With 1_n the same shifted view may score differently.
    Score s = random_score(rng, 1, 6, 50, 14);
    enc.vocab = DurationVocab::from_corpus({s});
    enc.resolution = compute_resolution({s});
    HomophonicModel m(ModelSpec::parse("lin,k=4,rel,pc"), enc.dims(), 1);
    randomize_params(m.params(), 2);
    auto a = build_contexts(s, enc, false);
    auto b = build_contexts(transpose(s, 3), enc, false);
    CHECK(m.pitch_logits(a.events[1], 0).base[5] != m.pitch_logits(b.events[1], 0).base[8]);
}

TEST_CASE("log-linear model fits a repeated event") {
    Score s = single_part({});
    for (int i = 0; i < 12; ++i) s.parts[0].events.push_back(make_event(RationalTime(1), {60, 64}));
    Encoding enc = encoding_for({s});
    HomophonicModel m(ModelSpec::parse("lin,k=2"), enc.dims(), 1);
    auto ctx = build_contexts(s, enc, false);
    ad::OptimizerConfig oc;
    oc.learning_rate = 0.1;
    ad::Optimizer opt(oc);
    const double start = total_bits(m, ctx.events);
    for (int step = 0; step < 300; ++step) {
        ad::Graph g;
        std::vector<ad::Var> terms;
        for (auto& l : m.losses(g, ctx.events)) terms.push_back(ad::add(l.t, l.n));
        ad::Var sum = terms[0];
        for (std::size_t i = 1; i < terms.size(); ++i) sum = ad::add(sum, terms[i]);
        g.backward(sum);
        opt.step(m.params());
    }
    const double end = total_bits(m, ctx.events);
    CHECK(start > 10.0);
    CHECK(end / static_cast<double>(ctx.events.size()) < 0.05);
}

TEST_CASE("contexts follow the prediction schedule") {
    std::mt19937_64 rng(5);
    Score s = random_score(rng, 3, 6);
    Encoding enc = encoding_for({s});
    auto full = build_contexts(s, enc, true);
    auto own = build_contexts(s, enc, false);
    auto sched = prediction_schedule(s);
    REQUIRE(full.events.size() == sched.size());
    REQUIRE(own.events.size() == sched.size());
    for (std::size_t i = 0; i < sched.size(); ++i) {
        CHECK(full.events[i].part == sched[i].part);
        CHECK(full.events[i].set->frames.times[full.events[i].frame] == sched[i].onset);
        CHECK(own.events[i].set->frames.times[own.events[i].frame] == sched[i].onset);
        CHECK(own.events[i].targets.pitch_bits == full.events[i].targets.pitch_bits);
    }
    CHECK(full.length == s.length());
}
