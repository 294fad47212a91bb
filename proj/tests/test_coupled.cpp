// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "polyscore/coupled.hpp"
#include "polyscore/kern.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace polyscore;
using namespace polyscore::testing;
using ad::Graph;
using ad::Tensor;
using ad::Var;

namespace {

const std::string kData = POLYSCORE_TEST_DATA;

Tensor random_tensor(std::size_t r, std::size_t c, ad::Rng& rng) {
    Tensor t(r, c);
    for (auto& v : t.data) v = rng.uniform(-1, 1);
    return t;
}

void copy_shared(const ad::ParamSet& from, ad::ParamSet& to) {
    for (const auto* p : from.all())
        if (auto* q = to.find(p->name)) {
            REQUIRE(q->value.shape() == p->value.shape());
            q->value = p->value;
        }
}

void zero(ad::Param* p) {
    REQUIRE(p);
    std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
}

Score two_part_toy() {
    // 6 frames: onsets at 0, 1/2, 1, 3/2, 2, 5/2.
    Score s;
    s.parts.resize(2);
    s.parts[0].events = {make_event(RationalTime(1), {60}), make_event(RationalTime(1, 2), {62}),
                         make_event(RationalTime(1, 2), {}), make_event(RationalTime(1), {64, 67})};
    s.parts[1].events = {make_event(RationalTime(1, 2), {55}), make_event(RationalTime(1), {57}),
                         make_event(RationalTime(1), {59}), make_event(RationalTime(1, 2), {60})};
    return s;
}

ad::Var summed_loss(const ScoreModel& m, Graph& g, const std::vector<EventContext>& events) {
    std::vector<Var> terms;
    for (auto& l : m.losses(g, events)) terms.push_back(ad::add(l.t, l.n));
    Var s = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) s = ad::add(s, terms[i]);
    return s;
}

}  // namespace

TEST_CASE("coupled spec strings") {
    auto s = CoupledSpec::parse("hier,pk=10,gk=4,loc,pc,h=16");
    CHECK(s.arch == Architecture::hierarchical);
    CHECK(s.part_k == 10);
    CHECK(s.global_k == 4);
    CHECK(s.pitch_mode == PitchMode::relative);
    CHECK(s.to_string() == "hier,pk=10,gk=4,loc,pc,h=16");
    CHECK(CoupledSpec::parse(s.to_string()) == s);
    auto d = CoupledSpec::parse("dist,pk=5,abs,noshare");
    CHECK(d.to_string() == "dist,pk=5,abs,h=32,noshare");
    CHECK(CoupledSpec::parse(d.to_string()) == d);
    CHECK(CoupledSpec::parse("indep").global_k == 0);
    CHECK_THROWS_AS(CoupledSpec::parse("dist,gk=3"), SpecError);
    CHECK_THROWS_AS(CoupledSpec::parse("indep,abs,pc"), SpecError);
    CHECK_THROWS_AS(CoupledSpec::parse("mesh"), SpecError);
}

TEST_CASE("flow matrices sum merged states and duplicate split ones") {
    ad::Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        Graph g(false);
        PartStates h = {g.constant(random_tensor(4, 1, rng)), g.constant(random_tensor(4, 1, rng)),
                        g.constant(random_tensor(4, 1, rng))};
        auto same = apply_flow(g, h, FlowMatrix::identity(3));
        for (int q = 0; q < 3; ++q) CHECK(same[q]->value() == h[q]->value());

        FlowMatrix merge(3);  // 0 and 1 merge into 0, 2 carries on
        merge.set(0, 0, 1);
        merge.set(0, 1, 1);
        merge.set(2, 2, 1);
        auto m = apply_flow(g, h, merge);
        CHECK_FALSE(m[1].has_value());
        for (std::size_t i = 0; i < 4; ++i) CHECK(m[0]->value().data[i] == h[0]->value().data[i] + h[1]->value().data[i]);
        CHECK(m[2]->value() == h[2]->value());

        PartStates two = {h[0], std::nullopt, h[2]};
        FlowMatrix split(3);  // 0 splits into 0 and 1
        split.set(0, 0, 1);
        split.set(1, 0, 1);
        split.set(2, 2, 1);
        auto s = apply_flow(g, two, split);
        CHECK(s[0]->value() == h[0]->value());
        CHECK(s[1]->value() == h[0]->value());

        auto l1 = [](const PartStates& st) {
            double t = 0;
            for (const auto& v : st)
                if (v)
                    for (double x : v->value().data) t += std::abs(x);
            return t;
        };
        // Mass is preserved by merges only up to sign cancellation; doubling on split is exact.
        CHECK(l1(s) == doctest::Approx(l1(two) + l1({h[0]})).epsilon(1e-12));
    }
    Graph g(false);
    CHECK_THROWS_AS(apply_flow(g, PartStates(2), FlowMatrix::identity(3)), ad::ShapeMismatch);
}

TEST_CASE("part and global steps") {
    ModelDims dims{4, 3, 2, 60};
    ad::Rng rng(5);
    CoupledModel m(CoupledSpec::parse("hier,pk=3,gk=3,abs,h=5"), dims, 9);
    const auto& st = m.duration_stream();
    {
        CoupledModel z(CoupledSpec::parse("hier,pk=3,gk=3,abs,h=5"), dims, 9);
        fill_params(z.params(), 0.0);
        Graph g(false);
        Var x = g.constant(random_tensor(5, 1, rng));
        Var h = g.constant(random_tensor(5, 1, rng));
        for (double v : z.duration_stream().part_step(g, 0, &h, ad::scale(x, 0.0)).value().data) CHECK(v == 0.0);
    }
    Graph g(false);
    Var x = g.constant(random_tensor(5, 1, rng));
    Var h = g.constant(random_tensor(5, 1, rng));
    CHECK(st.part_step(g, 0, &h, x).value() == st.part_step(g, 1, &h, x).value());

    // All-zero part states and no previous global state give tanh(b_g).
    randomize_params(m.params(), 4);
    Var zs = g.constant(Tensor(5, 1));
    auto out = st.global_step(g, nullptr, {zs, zs}, 1).value();
    for (std::size_t i = 0; i < 5; ++i) CHECK(out.data[i] == std::tanh(st.global_bias()->value.data[i]));

    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Var> parts;
        for (int q = 0; q < 4; ++q) parts.push_back(g.constant(random_tensor(5, 1, rng)));
        Var prev = g.constant(random_tensor(5, 1, rng));
        Tensor a = st.global_step(g, &prev, parts, 1).value();
        std::vector<Var> shuffled = parts;
        std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
        CHECK(st.global_step(g, &prev, shuffled, 1).value() == a);
    }
}

TEST_CASE("one live part makes the hierarchical path a stacked recurrence") {
    Score s = single_part({{RationalTime(1), {60}}, {RationalTime(1, 2), {62}}, {RationalTime(1, 2), {}},
                           {RationalTime(1), {60, 64}}, {RationalTime(1), {62}}});
    Encoding enc = encoding_for({s});
    CoupledModel m(CoupledSpec::parse("hier,pk=4,gk=4,abs,h=3"), enc.dims(), 2);
    randomize_params(m.params(), 8);
    auto ctx = build_contexts(s, enc, true);
    const auto& st = m.duration_stream();
    const auto& tr = st.track(0);
    const std::size_t N = enc.range.size(), D = enc.vocab.size();
    for (const auto& e : ctx.events) {
        Graph g(false);
        auto states = st.run(g, e);
        // Reference: h_t = tanh(Wp h + Wx x_t + b), g_t = tanh(Wh g + Win h_t + bg).
        NetInput in = history_input(e, 0, 4, N, D, PitchMode::absolute);
        std::optional<Tensor> h, gl;
        for (std::size_t j = 0; j < 4; ++j) {
            if (e.frame + j < 4) continue;
            Tensor x = frame_projection(g, in, j, N, nullptr, *tr.Wx, nullptr).value();
            Tensor hn(3, 1), gn(3, 1);
            for (std::size_t r = 0; r < 3; ++r) {
                double z = x.data[r];
                if (h)
                    for (std::size_t c = 0; c < 3; ++c) z += tr.Wp->value(r, c) * h->data[c];
                hn.data[r] = std::tanh(z + tr.b->value.data[r]);
            }
            for (std::size_t r = 0; r < 3; ++r) {
                double z = 0, zi = 0;
                for (std::size_t c = 0; c < 3; ++c) zi += st.global_input()->value(r, c) * hn.data[c];
                if (gl)
                    for (std::size_t c = 0; c < 3; ++c) z += st.global_recurrence()->value(r, c) * gl->data[c];
                gn.data[r] = std::tanh(z + zi + st.global_bias()->value.data[r]);
            }
            h = hn;
            gl = gn;
        }
        if (!h) {
            CHECK_FALSE(states.global.has_value());
            continue;
        }
        for (std::size_t r = 0; r < 3; ++r) {
            CHECK(states.parts[0]->value().data[r] == doctest::Approx(h->data[r]).epsilon(1e-12));
            CHECK(states.global->value().data[r] == doctest::Approx(gl->data[r]).epsilon(1e-12));
        }
    }
}

TEST_CASE("distributed steps") {
    ModelDims dims{4, 3, 2, 60};
    ad::Rng rng(6);
    CoupledModel m(CoupledSpec::parse("dist,pk=3,abs,h=4"), dims, 1);
    randomize_params(m.params(), 3);
    const auto& st = m.duration_stream();
    for (int trial = 0; trial < 100; ++trial) {
        Graph g(false);
        PartStates prev;
        std::vector<std::optional<Var>> x;
        for (int q = 0; q < 3; ++q) {
            prev.push_back(g.constant(random_tensor(4, 1, rng)));
            x.push_back(g.constant(random_tensor(4, 1, rng)));
        }
        auto base = st.distributed_step(g, prev, x);
        std::vector<std::size_t> perm = {0, 1, 2};
        std::shuffle(perm.begin(), perm.end(), rng.engine());
        PartStates pp(3);
        std::vector<std::optional<Var>> px(3);
        for (int q = 0; q < 3; ++q) {
            pp[q] = prev[perm[q]];
            px[q] = x[perm[q]];
        }
        auto permuted = st.distributed_step(g, pp, px);
        for (int q = 0; q < 3; ++q) CHECK(permuted[q]->value() == base[perm[q]]->value());

        PartStates twins = {prev[0], prev[0]};
        auto tw = st.distributed_step(g, twins, {x[0], x[0]});
        CHECK(tw[0]->value() == tw[1]->value());
    }
    zero(st.coupling());
    Graph g(false);
    Var h = g.constant(random_tensor(4, 1, rng));
    Var x = g.constant(random_tensor(4, 1, rng));
    Var h2 = g.constant(random_tensor(4, 1, rng));
    auto d = st.distributed_step(g, {h, h2}, {x, x});
    CHECK(d[0]->value() == st.part_step(g, 0, &h, x).value());
    CHECK(d[1]->value() == st.part_step(g, 1, &h2, x).value());
}

TEST_CASE("part permutation: hierarchical invariance and distributed equivariance") {
    std::mt19937_64 rng(12);
    for (const char* text : {"hier,pk=4,gk=3,h=4,loc", "dist,pk=4,h=4", "hier,pk=3,gk=5,abs,h=3"}) {
        CAPTURE(text);
        for (int trial = 0; trial < 100; ++trial) {
            Score s = random_score(rng, 3, 5, 55, 12);
            if (s.parts.size() < 2) s.parts.push_back(s.parts[0]);
            Encoding enc = encoding_for({s});
            CoupledModel m(CoupledSpec::parse(text), enc.dims(), trial);
            randomize_params(m.params(), 1000 + trial);
            std::vector<std::size_t> order(s.parts.size());
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            Score ps = permute_parts(s, order);
            auto a = build_contexts(s, enc, true);
            auto b = build_contexts(ps, enc, true);
            const auto& fa = a.events[0].set->frames;
            const auto& fb = b.events[0].set->frames;
            REQUIRE(fa.times == fb.times);
            std::size_t f = rng() % (fa.size() + 1);
            for (std::size_t p = 0; p < s.parts.size(); ++p) {
                EventContext ca = a.events[0], cb = b.events[0];
                ca.frame = cb.frame = f;
                cb.channel = p;
                ca.channel = order[p];
                CHECK(m.duration_logits(cb) == m.duration_logits(ca));
                CHECK(m.pitch_logits(cb, 0).base == m.pitch_logits(ca, 0).base);
                if (m.spec().arch == Architecture::hierarchical) {
                    Graph g(false);
                    auto sa = m.pitch_stream().run(g, ca);
                    auto sb = m.pitch_stream().run(g, cb);
                    REQUIRE(sa.global.has_value() == sb.global.has_value());
                    if (sa.global) CHECK(sa.global->value() == sb.global->value());
                }
            }
        }
    }
}

TEST_CASE("with no coupling weight both coupled models reproduce the independent baseline") {
    std::mt19937_64 rng(21);
    for (const char* mode : {"", ",abs"}) {
        for (int trial = 0; trial < 100; ++trial) {
            Score s = random_score(rng, 3, 6, 50, 16);
            Encoding enc = encoding_for({s});
            CoupledModel indep(CoupledSpec::parse(std::string("indep,pk=4,h=4,loc") + mode), enc.dims(), trial);
            CoupledModel hier(CoupledSpec::parse(std::string("hier,pk=4,gk=4,h=4,loc") + mode), enc.dims(), trial + 7);
            CoupledModel dist(CoupledSpec::parse(std::string("dist,pk=4,h=4,loc") + mode), enc.dims(), trial + 9);
            randomize_params(indep.params(), trial);
            randomize_params(hier.params(), trial + 1);
            randomize_params(dist.params(), trial + 2);
            copy_shared(indep.params(), hier.params());
            copy_shared(indep.params(), dist.params());
            for (const auto* st : {&hier.duration_stream(), &hier.pitch_stream()}) {
                zero(st->global_input());
                zero(st->head_layer().blocks[1]);
            }
            for (const auto* st : {&dist.duration_stream(), &dist.pitch_stream()}) zero(st->coupling());
            auto ctx = build_contexts(s, enc, true);
            auto base = indep.nll(ctx.events);
            auto h = hier.nll(ctx.events);
            auto d = dist.nll(ctx.events);
            for (std::size_t i = 0; i < base.size(); ++i) {
                CHECK(h[i].t == base[i].t);
                CHECK(h[i].n == base[i].n);
                CHECK(d[i].t == base[i].t);
                CHECK(d[i].n == base[i].n);
            }
        }
    }
}

TEST_CASE("independent parts equal the homophonic recurrent model on continuation histories") {
    std::mt19937_64 rng(8);
    for (const auto& [cs, hs] : std::vector<std::pair<std::string, std::string>>{
             {"indep,pk=5,h=4,loc,pc", "rnn,k=5,h=4,loc,pc,rel,cont"},
             {"indep,pk=3,h=3,abs,temb=fixed12,emb=learned3", "rnn,k=3,h=3,temb=fixed12,emb=learned3,cont"}}) {
        for (int trial = 0; trial < 20; ++trial) {
            Score s = random_score(rng, 3, 6, 50, 16);
            Encoding enc = encoding_for({s});
            HomophonicModel hm(ModelSpec::parse(hs), enc.dims(), 1);
            CoupledModel cm(CoupledSpec::parse(cs), enc.dims(), 2);
            randomize_params(hm.params(), trial);
            copy_shared(hm.params(), cm.params());
            REQUIRE(hm.params().scalar_count() == cm.params().scalar_count());
            auto ctx = build_contexts(s, enc, true);
            auto a = hm.nll(ctx.events);
            auto b = cm.nll(ctx.events);
            for (std::size_t i = 0; i < a.size(); ++i) {
                CHECK(a[i].t == b[i].t);
                CHECK(a[i].n == b[i].n);
            }
        }
    }
}

TEST_CASE("coupled models pass an end-to-end gradient check on a two-part toy score") {
    Score s = two_part_toy();
    Encoding enc = encoding_for({s});
    auto ctx = build_contexts(s, enc, true);
    REQUIRE(ctx.events[0].set->frames.size() == 6);
    for (const char* text : {"hier,pk=6,gk=6,h=3,loc,pc", "hier,pk=3,gk=5,h=3,abs,noshare", "dist,pk=6,h=3,pc",
                             "dist,pk=4,h=3,abs,temb=fixed12,emb=learned2", "indep,pk=6,h=3,loc"}) {
        CAPTURE(text);
        CoupledModel m(CoupledSpec::parse(text), enc.dims(), 3);
        randomize_params(m.params(), 4, 0.8);
        ad::GradCheckOptions o;
        o.max_entries_per_param = 30;
        auto r = ad::grad_check([&](Graph& g) { return summed_loss(m, g, ctx.events); }, m.params(), o);
        CHECK(r.pass);
        CHECK(r.max_rel_error <= 1e-4);
    }
}

TEST_CASE("coupled models run through split and merge flows") {
    Score s = kern::parse_kern_file(kData + "/fixtures/split_merge.krn");
    REQUIRE_FALSE(s.flow_free());
    Encoding enc = encoding_for({s});
    auto ctx = build_contexts(s, enc, true);
    for (const char* text : {"hier,pk=4,gk=4,h=3", "dist,pk=4,h=3,abs"}) {
        CAPTURE(text);
        CoupledModel m(CoupledSpec::parse(text), enc.dims(), 5);
        randomize_params(m.params(), 6);
        ad::GradCheckOptions o;
        o.max_entries_per_param = 20;
        auto r = ad::grad_check([&](Graph& g) { return summed_loss(m, g, ctx.events); }, m.params(), o);
        CHECK(r.pass);
    }
}

TEST_CASE("coupled outcome probabilities sum to one") {
    Score s;
    s.parts.resize(2);
    s.parts[0].events = {make_event(RationalTime(1), {60}), make_event(RationalTime(1, 2), {61}),
                         make_event(RationalTime(1, 2), {60, 61})};
    s.parts[1].events = {make_event(RationalTime(1, 2), {61}), make_event(RationalTime(1, 2), {}),
                         make_event(RationalTime(1), {60})};
    Encoding enc = encoding_for({s});
    REQUIRE(enc.range.size() == 2);
    REQUIRE(enc.vocab.size() == 3);
    for (const char* text : {"hier,pk=3,gk=2,h=3,loc,pc", "dist,pk=3,h=3,abs", "indep,pk=2,h=2"}) {
        CoupledModel m(CoupledSpec::parse(text), enc.dims(), 1);
        randomize_params(m.params(), 2, 1.5);
        for (const auto& base : build_contexts(s, enc, true).events) {
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

TEST_CASE("parameter counts are reported per architecture") {
    ModelDims dims{10, 5, 4, 60};
    CoupledModel h(CoupledSpec::parse("hier,pk=4,gk=4,h=8"), dims);
    CoupledModel d(CoupledSpec::parse("dist,pk=4,h=8"), dims);
    CoupledModel i(CoupledSpec::parse("indep,pk=4,h=8"), dims);
    CoupledModel n(CoupledSpec::parse("indep,pk=4,h=8,noshare"), dims);
    CHECK(h.params().scalar_count() > d.params().scalar_count());
    CHECK(d.params().scalar_count() > i.params().scalar_count());
    // Two streams, each with one H x H coupling matrix.
    CHECK(d.params().scalar_count() - i.params().scalar_count() == 2 * 64);
    CHECK(n.params().scalar_count() > i.params().scalar_count());
}
