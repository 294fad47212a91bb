// SPDX-License-Identifier: Apache-2.0
#include "polyscore/coupled.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace polyscore {

using ad::Graph;
using ad::Param;
using ad::SparseCols;
using ad::Tensor;
using ad::Var;

namespace {

std::size_t parse_count(std::string_view text, std::string_view what) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || v == 0)
        throw SpecError("bad " + std::string(what) + " '" + std::string(text) + "'");
    return v;
}

Param& make(ad::ParamSet& ps, const std::string& name, std::size_t r, std::size_t c, std::size_t fan_in, ad::Rng& rng) {
    Param& p = ps.add(name, r, c);
    if (fan_in) init_uniform(p, fan_in, rng);
    return p;
}

Var sum_states(const std::vector<Var>& xs) { return xs.size() == 1 ? xs[0] : ad::sorted_sum(xs); }

}  // namespace

std::string to_string(Architecture arch) {
    switch (arch) {
        case Architecture::hierarchical: return "hier";
        case Architecture::distributed: return "dist";
        case Architecture::independent: return "indep";
    }
    return "?";
}

CoupledSpec CoupledSpec::parse(std::string_view text) {
    std::vector<std::string_view> parts;
    for (std::size_t pos = 0;;) {
        std::size_t next = text.find(',', pos);
        parts.push_back(text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    CoupledSpec s;
    const std::string_view a = parts[0];
    if (a == "hier" || a == "hierarchical") {
        s.arch = Architecture::hierarchical;
    } else if (a == "dist" || a == "distributed") {
        s.arch = Architecture::distributed;
    } else if (a == "indep" || a == "independent") {
        s.arch = Architecture::independent;
    } else {
        throw SpecError("unknown architecture '" + std::string(a) + "'");
    }
    bool saw_gk = false;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        std::string_view opt = parts[i];
        if (opt.substr(0, 3) == "pk=") {
            s.part_k = parse_count(opt.substr(3), "part history");
        } else if (opt.substr(0, 3) == "gk=") {
            s.global_k = parse_count(opt.substr(3), "global history");
            saw_gk = true;
        } else if (opt.substr(0, 2) == "h=") {
            s.hidden = parse_count(opt.substr(2), "hidden width");
        } else if (opt == "abs") {
            s.pitch_mode = PitchMode::absolute;
        } else if (opt == "rel") {
            s.pitch_mode = PitchMode::relative;
        } else if (opt == "loc") {
            s.use_location = true;
        } else if (opt == "pc") {
            s.use_pitch_class = true;
        } else if (opt == "noshare") {
            s.share_part_weights = false;
        } else if (opt == "temb=fixed12") {
            s.duration_embed_fixed = true;
        } else if (opt.substr(0, 11) == "emb=learned") {
            s.pitch_embed_dim = parse_count(opt.substr(11), "embedding width");
        } else {
            throw SpecError("unknown option '" + std::string(opt) + "'");
        }
    }
    if (s.arch != Architecture::hierarchical) {
        if (saw_gk) throw SpecError("gk applies to the hierarchical architecture only");
        s.global_k = 0;
    }
    if (s.use_pitch_class && s.pitch_mode != PitchMode::relative) throw SpecError("pc needs rel");
    return s;
}

std::string CoupledSpec::to_string() const {
    std::ostringstream os;
    os << polyscore::to_string(arch) << ",pk=" << part_k;
    if (arch == Architecture::hierarchical) os << ",gk=" << global_k;
    if (pitch_mode == PitchMode::absolute) os << ",abs";
    if (use_location) os << ",loc";
    if (use_pitch_class) os << ",pc";
    if (duration_embed_fixed) os << ",temb=fixed12";
    if (pitch_embed_dim) os << ",emb=learned" << pitch_embed_dim;
    os << ",h=" << hidden;
    if (!share_part_weights) os << ",noshare";
    return os.str();
}

PartStates apply_flow(Graph& g, const PartStates& states, const FlowMatrix& flow) {
    (void)g;
    if (flow.size() != states.size())
        throw ad::ShapeMismatch("flow matrix of " + std::to_string(flow.size()) + " parts applied to " +
                                std::to_string(states.size()) + " states");
    PartStates out(states.size());
    for (std::size_t d = 0; d < states.size(); ++d) {
        std::vector<Var> src;
        for (std::size_t s = 0; s < states.size(); ++s)
            if (flow.at(d, s) && states[s]) src.push_back(*states[s]);
        if (!src.empty()) out[d] = sum_states(src);
    }
    return out;
}

// Streams -------------------------------------------------------------------------

CoupledStream::CoupledStream(const std::string& prefix, StreamShape shape, ad::ParamSet& ps, ad::Rng& rng)
    : shape_(std::move(shape)) {
    const auto& s = shape_;
    const std::size_t F = s.axis + s.D, H = s.hidden;
    const bool embedded = s.embed != EmbedKind::raw;
    const std::size_t E = s.embed == EmbedKind::fixed12 ? 12 : s.embed_dim;
    if (s.embed == EmbedKind::learned) embedding_ = &make(ps, prefix + "embed", s.axis, E, E, rng);
    if (s.embed == EmbedKind::fixed12 && s.fixed_table.size() != s.axis * 12)
        throw SpecError("fixed embedding table does not match the pitch axis");

    const std::size_t sets = s.share ? 1 : s.tracks;
    for (std::size_t i = 0; i < sets; ++i) {
        const std::string sfx = s.share ? "" : ".p" + std::to_string(i);
        Track t;
        if (!embedded) {
            t.Wx = &make(ps, prefix + "rnn.x" + sfx, F, H, F, rng);
        } else {
            t.Wx = &make(ps, prefix + "rnn.pitch" + sfx, H, E, E, rng);
            t.Wd = &make(ps, prefix + "rnn.dur" + sfx, s.D, H, F, rng);
        }
        t.Wp = &make(ps, prefix + "rnn.h" + sfx, H, H, H, rng);
        t.b = &make(ps, prefix + "rnn.b" + sfx, H, 1, 0, rng);
        tracks_.push_back(t);
    }
    if (s.arch == Architecture::distributed) couple_ = &make(ps, prefix + "rnn.couple", H, H, H, rng);
    if (s.arch == Architecture::hierarchical) {
        glob_h_ = &make(ps, prefix + "glob.h", H, H, H, rng);
        glob_in_ = &make(ps, prefix + "glob.in", H, H, H, rng);
        glob_b_ = &make(ps, prefix + "glob.b", H, 1, 0, rng);
    }
    for (std::size_t i = 0; i < sets; ++i) {
        const std::string sfx = s.share ? "" : ".p" + std::to_string(i);
        Head h;
        h.blocks = {&make(ps, prefix + "out" + sfx, s.outputs, H, H, rng)};
        if (s.arch == Architecture::hierarchical) h.blocks.push_back(&make(ps, prefix + "out.glob" + sfx, s.outputs, H, H, rng));
        if (s.cond) h.cond = &make(ps, prefix + "cond" + sfx, s.cond, s.outputs, s.cond, rng);
        h.bias = &make(ps, prefix + "b" + sfx, s.outputs, 1, 0, rng);
        heads_.push_back(h);
    }
}

ad::Var CoupledStream::part_step(Graph& g, std::size_t track_index, const Var* h_prev, Var x_proj,
                                 const Var* coupling_term) const {
    const Track& t = track(track_index);
    return rnn_step(g, *t.Wp, *t.b, h_prev, x_proj, coupling_term);
}

ad::Var CoupledStream::global_step(Graph& g, const Var* g_prev, const std::vector<Var>& part_states,
                                   std::size_t M) const {
    if (!glob_in_) throw SpecError("global_step needs the hierarchical architecture");
    Var sum = part_states.empty() ? g.constant(Tensor(shape_.hidden, M)) : sum_states(part_states);
    Var z = matmul(g.param(*glob_in_), sum);
    if (g_prev) z = add(matmul(g.param(*glob_h_), *g_prev), z);
    return tanh(add_bias(z, g.param(*glob_b_)));
}

PartStates CoupledStream::distributed_step(Graph& g, const PartStates& prev,
                                           const std::vector<std::optional<Var>>& x) const {
    std::vector<Var> live;
    for (const auto& h : prev)
        if (h) live.push_back(*h);
    std::optional<Var> term;
    if (couple_ && !live.empty()) term = matmul(g.param(*couple_), sum_states(live));
    PartStates out(prev.size());
    for (std::size_t q = 0; q < prev.size(); ++q) {
        if (!x[q]) continue;
        out[q] = part_step(g, q, prev[q] ? &*prev[q] : nullptr, *x[q], term ? &*term : nullptr);
    }
    return out;
}

ad::Var CoupledStream::project(Graph& g, const NetInput& in, std::size_t j, std::size_t track_index,
                               const Var* table) const {
    const Track& t = track(track_index);
    return frame_projection(g, in, j, shape_.axis, table, *t.Wx, t.Wd);
}

CoupledStream::States CoupledStream::run(Graph& g, const EventContext& ctx) const {
    const auto& s = shape_;
    const ScoreFrames& frames = ctx.set->frames;
    const std::size_t P = frames.parts;
    if (!s.share && P > s.tracks)
        throw SpecError("score has " + std::to_string(P) + " parts but the model has weights for " +
                        std::to_string(s.tracks));
    const bool hier = s.arch == Architecture::hierarchical;
    const std::size_t W = std::max(s.part_k, hier ? s.global_k : 0);
    const std::size_t N = s.mode == PitchMode::relative ? (s.axis + 1) / 2 : s.axis;
    const std::size_t M = s.mode == PitchMode::relative ? N : 1;

    std::vector<NetInput> in;
    in.reserve(P);
    for (std::size_t q = 0; q < P; ++q) in.push_back(history_input(ctx, q, W, N, s.D, s.mode));
    std::optional<Var> table;
    if (embedding_) table = g.param(*embedding_);
    else if (s.embed == EmbedKind::fixed12) table = g.constant(Tensor::from(s.axis, 12, s.fixed_table));

    States st;
    st.parts.assign(P, std::nullopt);
    for (std::size_t j = 0; j < W; ++j) {
        if (ctx.frame + j < W) continue;
        const std::size_t t = ctx.frame + j - W;
        if (j + s.part_k >= W) {
            for (std::size_t idx : frames.flows[t]) st.parts = apply_flow(g, st.parts, ctx.set->flows.at(idx).matrix);
            std::vector<std::optional<Var>> x(P);
            for (std::size_t q = 0; q < P; ++q)
                if (in[q].live[j]) x[q] = project(g, in[q], j, q, table ? &*table : nullptr);
            if (s.arch == Architecture::distributed) {
                st.parts = distributed_step(g, st.parts, x);
            } else {
                PartStates next(P);
                for (std::size_t q = 0; q < P; ++q)
                    if (x[q]) next[q] = part_step(g, q, st.parts[q] ? &*st.parts[q] : nullptr, *x[q]);
                st.parts = std::move(next);
            }
        }
        if (hier && j + s.global_k >= W) {
            std::vector<Var> live;
            for (const auto& h : st.parts)
                if (h) live.push_back(*h);
            st.global = global_step(g, st.global ? &*st.global : nullptr, live, M);
        }
    }
    return st;
}

ad::Var CoupledStream::head(Graph& g, const States& st, std::size_t channel, const SparseCols& cond,
                            std::size_t M) const {
    auto state_or_zero = [&](const std::optional<Var>& v) { return v ? *v : g.constant(Tensor(shape_.hidden, M)); };
    std::vector<Var> features = {state_or_zero(st.parts.at(channel))};
    if (shape_.arch == Architecture::hierarchical) features.push_back(state_or_zero(st.global));
    return head_layer(channel).forward(g, features, cond, M);
}

// Model ------------------------------------------------------------------------------

CoupledModel::CoupledModel(CoupledSpec spec, ModelDims dims, std::uint64_t seed) : spec_(std::move(spec)), dims_(dims) {
    if (dims_.pitches == 0 || dims_.durations < 2) throw SpecError("model needs at least one pitch and one duration");
    ad::Rng rng(seed);
    const std::size_t N = dims_.pitches, D = dims_.durations, D1 = D - 1;
    const bool rel = spec_.pitch_mode == PitchMode::relative;

    StreamShape t;
    t.arch = spec_.arch;
    t.part_k = spec_.part_k;
    t.global_k = spec_.global_k;
    t.share = spec_.share_part_weights;
    t.tracks = spec_.max_parts;
    t.axis = N;
    t.D = D;
    t.hidden = spec_.hidden;
    t.outputs = D1;
    t.cond = spec_.use_location ? dims_.locations : 0;
    t.mode = PitchMode::absolute;
    if (spec_.duration_embed_fixed) {
        t.embed = EmbedKind::fixed12;
        t.fixed_table = octave_table(N, dims_.pitch_lo);
    }
    duration_ = CoupledStream("t.", t, params_, rng);

    StreamShape n = t;
    n.axis = rel ? 2 * N - 1 : N;
    n.outputs = rel ? 1 : N;
    n.cond = pitch_cond_width(N, D1, spec_.pitch_mode, spec_.use_pitch_class);
    n.mode = spec_.pitch_mode;
    n.embed = spec_.pitch_embed_dim ? EmbedKind::learned : EmbedKind::raw;
    n.embed_dim = spec_.pitch_embed_dim;
    n.fixed_table.clear();
    pitch_ = CoupledStream("n.", n, params_, rng);
    if (!rel) below_ = &make(params_, "n.below", N, N, N, rng);
}

ad::Var CoupledModel::duration_head(Graph& g, const CoupledStream::States& s, const EventContext& ctx) const {
    SparseCols cond;
    cond.rows = spec_.use_location ? dims_.locations : 0;
    if (spec_.use_location) cond.push(static_cast<std::uint32_t>(ctx.location));
    cond.end_column();
    return duration_.head(g, s, ctx.channel, cond, 1);
}

ad::Var CoupledModel::pitch_head(Graph& g, const CoupledStream::States& s, const EventContext& ctx, std::size_t y_t,
                                 const std::vector<std::uint8_t>& y) const {
    const std::size_t N = dims_.pitches;
    const bool rel = spec_.pitch_mode == PitchMode::relative;
    SparseCols cond = pitch_cond(N, dims_.onset_classes(), spec_.pitch_mode, spec_.use_pitch_class, y_t, &y);
    Var logits = pitch_.head(g, s, ctx.channel, cond, rel ? N : 1);
    if (below_) {
        std::vector<double> col(y.begin(), y.end());
        Var masked = hadamard(g.param(*below_), g.constant(lower_mask(N)));
        logits = add(logits, matmul(masked, g.constant(Tensor::column(std::move(col)))));
    }
    return logits;
}

std::vector<LossVars> CoupledModel::losses(Graph& g, const std::vector<EventContext>& events) const {
    std::vector<LossVars> out;
    out.reserve(events.size());
    const FrameSet* last_set = nullptr;
    std::size_t last_frame = 0;
    CoupledStream::States ts, ns;
    for (const auto& e : events) {
        if (e.targets.pitch_bits.size() != dims_.pitches)
            throw ad::ShapeMismatch("event targets do not match the pitch range");
        // Every event starting at one frame sees the same history.
        if (e.set.get() != last_set || e.frame != last_frame) {
            ts = duration_.run(g, e);
            ns = pitch_.run(g, e);
            last_set = e.set.get();
            last_frame = e.frame;
        }
        Var t = softmax_ce_bits(duration_head(g, ts, e), e.targets.duration_class);
        std::vector<double> bits(e.targets.pitch_bits.begin(), e.targets.pitch_bits.end());
        Var n = sigmoid_bce_bits(pitch_head(g, ns, e, e.targets.duration_class, e.targets.pitch_bits), bits);
        out.push_back({t, n});
    }
    return out;
}

std::vector<double> CoupledModel::duration_logits(const EventContext& ctx) const {
    Graph g(false);
    auto s = duration_.run(g, ctx);
    return duration_head(g, s, ctx).value().data;
}

PitchLogits CoupledModel::pitch_logits(const EventContext& ctx, std::size_t duration_class) const {
    const std::size_t N = dims_.pitches, D1 = dims_.onset_classes();
    Graph g(false);
    auto s = pitch_.run(g, ctx);
    std::vector<std::uint8_t> zeros(N, 0);
    PitchLogits out;
    out.base = pitch_head(g, s, ctx, duration_class, zeros).value().data;
    out.coupling.assign(N * N, 0.0);
    if (below_) {
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t j = 0; j < n; ++j) out.coupling[n * N + j] = below_->value(n, j);
    } else if (const Param* c = pitch_.head_layer(ctx.channel).cond) {
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t j = 0; j < n; ++j) out.coupling[n * N + j] = c->value(D1 + j + N - 1 - n, 0);
    }
    return out;
}

}  // namespace polyscore
