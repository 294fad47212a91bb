// SPDX-License-Identifier: Apache-2.0
#include "polyscore/model.hpp"

#include <algorithm>
#include <charconv>
#include <optional>
#include <sstream>

namespace polyscore {

using ad::Graph;
using ad::Param;
using ad::SparseCols;
using ad::Tensor;
using ad::Var;

// ModelSpec ----------------------------------------------------------------------

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t next = s.find(sep, pos);
        out.push_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

std::size_t parse_count(std::string_view text, std::string_view what) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || v == 0)
        throw SpecError("bad " + std::string(what) + " '" + std::string(text) + "'");
    return v;
}

}  // namespace

std::string to_string(BodyKind body) {
    switch (body) {
        case BodyKind::bias: return "bias";
        case BodyKind::loglinear: return "lin";
        case BodyKind::fc: return "fc";
        case BodyKind::conv: return "conv";
        case BodyKind::rnn: return "rnn";
    }
    return "?";
}

ModelSpec ModelSpec::parse(std::string_view text) {
    auto parts = split(text, ',');
    ModelSpec s;
    std::string_view body = parts.at(0);
    if (body == "bias") {
        s.body = BodyKind::bias;
    } else if (body == "lin" || body == "loglinear") {
        s.body = BodyKind::loglinear;
    } else if (body == "fc") {
        s.body = BodyKind::fc;
    } else if (body == "rnn") {
        s.body = BodyKind::rnn;
    } else if (body == "conv" || body.substr(0, 5) == "conv=") {
        s.body = BodyKind::conv;
        if (body == "conv") {
            s.conv_widths = {5};
        } else {
            for (auto w : split(body.substr(5), ':')) s.conv_widths.push_back(parse_count(w, "conv width"));
        }
    } else {
        throw SpecError("unknown body '" + std::string(body) + "'");
    }

    for (std::size_t i = 1; i < parts.size(); ++i) {
        std::string_view opt = parts[i];
        if (opt.substr(0, 2) == "k=") {
            s.history_k = parse_count(opt.substr(2), "history length");
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
        } else if (opt == "cont") {
            s.continuation = true;
        } else if (opt == "temb=fixed12") {
            s.duration_embed_fixed = true;
        } else if (opt.substr(0, 11) == "emb=learned") {
            s.pitch_embed_dim = parse_count(opt.substr(11), "embedding width");
        } else {
            throw SpecError("unknown option '" + std::string(opt) + "'");
        }
    }
    if (s.use_pitch_class && s.pitch_mode != PitchMode::relative)
        throw SpecError("pc needs rel: an absolute head already has one classifier per pitch");
    if (s.body == BodyKind::bias) {
        // The bias body sees nothing; drop what it cannot use.
        ModelSpec b;
        b.body = BodyKind::bias;
        b.history_k = 1;
        return b;
    }
    return s;
}

std::string ModelSpec::to_string() const {
    std::ostringstream os;
    os << polyscore::to_string(body);
    if (body == BodyKind::conv) {
        os << '=';
        for (std::size_t i = 0; i < conv_widths.size(); ++i) os << (i ? ":" : "") << conv_widths[i];
    }
    if (body == BodyKind::bias) return os.str();
    os << ",k=" << history_k;
    if (pitch_mode == PitchMode::relative) os << ",rel";
    if (use_location) os << ",loc";
    if (use_pitch_class) os << ",pc";
    if (duration_embed_fixed) os << ",temb=fixed12";
    if (pitch_embed_dim) os << ",emb=learned" << pitch_embed_dim;
    if (body != BodyKind::loglinear) os << ",h=" << hidden;
    if (continuation) os << ",cont";
    return os.str();
}

ModelDims Encoding::dims() const {
    ModelDims d;
    d.pitches = range.size();
    d.durations = vocab.size();
    d.locations = static_cast<std::size_t>(resolution.frames_per_beat);
    d.pitch_lo = range.lo;
    return d;
}

// Contexts -------------------------------------------------------------------------

ScoreContexts build_contexts(const Score& score, const Encoding& enc, bool full_frames, EncodeStats* stats,
                             bool strict) {
    ScoreContexts out;
    out.length = score.length();
    const auto schedule = prediction_schedule(score);
    const std::int64_t fpb = enc.resolution.frames_per_beat;

    std::vector<std::shared_ptr<FrameSet>> sets;
    if (full_frames) {
        auto set = std::make_shared<FrameSet>();
        FrameOptions opts;
        opts.strict = strict;
        // Lossy lookups are counted once per event, through its targets.
        set->frames = build_frames(score, enc.vocab, enc.range, opts);
        set->flows = score.flows;
        sets.push_back(std::move(set));
    } else {
        for (std::size_t p = 0; p < score.parts.size(); ++p) {
            auto set = std::make_shared<FrameSet>();
            set->frames = build_part_frames(score, p, enc.vocab, enc.range, strict);
            sets.push_back(std::move(set));
        }
    }

    std::vector<std::size_t> seen(score.parts.size(), 0);
    out.events.reserve(schedule.size());
    for (const auto& ref : schedule) {
        EventContext c;
        c.part = ref.part;
        c.onset = ref.onset;
        if (full_frames) {
            c.set = sets[0];
            c.channel = ref.part;
            c.frame = sets[0]->frames.frame_at(ref.onset);
        } else {
            c.set = sets[ref.part];
            c.channel = 0;
            c.frame = seen[ref.part]++;
        }
        c.location = location_index(ref.onset, fpb, stats);
        c.targets = encode_targets(score.parts[ref.part].events[ref.event], enc.vocab, enc.range, strict, stats);
        out.events.push_back(std::move(c));
    }
    return out;
}

EventContext generation_context(std::shared_ptr<const FrameSet> set, std::size_t channel, std::size_t part,
                                const RationalTime& onset, const Encoding& enc) {
    EventContext c;
    const auto& times = set->frames.times;
    c.frame = static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), onset) - times.begin());
    c.set = std::move(set);
    c.channel = channel;
    c.part = part;
    c.onset = onset;
    c.location = location_index(onset, enc.resolution.frames_per_beat);
    return c;
}

NetInput history_input(const EventContext& ctx, std::size_t channel, std::size_t k, std::size_t N, std::size_t D,
                       PitchMode mode) {
    const bool rel = mode == PitchMode::relative;
    NetInput in;
    in.M = rel ? N : 1;
    const std::size_t axis = rel ? 2 * N - 1 : N;
    const ScoreFrames& frames = ctx.set->frames;
    for (std::size_t j = 0; j < k; ++j) {
        SparseCols pc, dc;
        pc.rows = axis;
        dc.rows = D;
        const FrameCell* cell = nullptr;
        if (ctx.frame + j >= k) {
            const FrameCell& c = frames.cell(ctx.frame + j - k, channel);
            if (c.live) cell = &c;
        }
        for (std::size_t m = 0; m < in.M; ++m) {
            if (cell) {
                for (auto a : cell->pitches) pc.push(static_cast<std::uint32_t>(rel ? a + N - 1 - m : a));
                dc.push(cell->duration_slot);
            }
            pc.end_column();
            dc.end_column();
        }
        in.pitch.push_back(std::move(pc));
        in.dur.push_back(std::move(dc));
        in.live.push_back(cell != nullptr);
    }
    return in;
}

std::vector<double> octave_table(std::size_t axis, int origin) {
    std::vector<double> t(axis * 12, 0.0);
    for (std::size_t a = 0; a < axis; ++a) {
        int cls = ((static_cast<int>(a) + origin) % 12 + 12) % 12;
        t[a * 12 + static_cast<std::size_t>(cls)] = 1.0;
    }
    return t;
}

ad::Tensor lower_mask(std::size_t N) {
    Tensor m(N, N);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t j = 0; j < n; ++j) m(n, j) = 1.0;
    return m;
}

std::size_t pitch_cond_width(std::size_t N, std::size_t D1, PitchMode mode, bool pitch_class) {
    if (mode == PitchMode::absolute) return D1;
    return D1 + (2 * N - 1) + (pitch_class ? N : 0);
}

ad::SparseCols pitch_cond(std::size_t N, std::size_t D1, PitchMode mode, bool pitch_class, std::size_t y_t,
                          const std::vector<std::uint8_t>* y) {
    SparseCols c;
    c.rows = pitch_cond_width(N, D1, mode, pitch_class);
    if (mode == PitchMode::absolute) {
        c.push(static_cast<std::uint32_t>(y_t));
        c.end_column();
        return c;
    }
    for (std::size_t m = 0; m < N; ++m) {
        c.push(static_cast<std::uint32_t>(y_t));
        if (y)
            for (std::size_t j = 0; j < m; ++j)
                if ((*y)[j]) c.push(static_cast<std::uint32_t>(D1 + j + N - 1 - m));
        if (pitch_class) c.push(static_cast<std::uint32_t>(D1 + 2 * N - 1 + m));
        c.end_column();
    }
    return c;
}

// Network pieces ---------------------------------------------------------------------

namespace {

/// Column m of every frame, laid out frame after frame with the given
/// per-frame stride; pitch slots first, then duration slots at `dur_offset`.
SparseCols flatten(const NetInput& in, bool with_pitch, std::size_t stride, std::size_t dur_offset) {
    SparseCols out;
    const std::size_t k = in.dur.size();
    out.rows = k * stride;
    for (std::size_t m = 0; m < in.M; ++m) {
        for (std::size_t j = 0; j < k; ++j) {
            const auto base = static_cast<std::uint32_t>(j * stride);
            if (with_pitch) {
                const auto& p = in.pitch[j];
                for (auto q = p.start[m]; q < p.start[m + 1]; ++q) out.push(base + p.index[q]);
            }
            const auto& d = in.dur[j];
            for (auto q = d.start[m]; q < d.start[m + 1]; ++q)
                out.push(base + static_cast<std::uint32_t>(dur_offset) + d.index[q]);
        }
        out.end_column();
    }
    return out;
}

/// Sparse im2col for a same-padded width-w convolution: column t*M + m holds
/// the features of frames t + s - w/2 at offset s * stride.
SparseCols im2col(const NetInput& in, std::size_t w, bool with_pitch, std::size_t stride, std::size_t dur_offset) {
    SparseCols out;
    const long k = static_cast<long>(in.dur.size());
    const long half = static_cast<long>(w / 2);
    out.rows = w * stride;
    for (long t = 0; t < k; ++t)
        for (std::size_t m = 0; m < in.M; ++m) {
            for (std::size_t s = 0; s < w; ++s) {
                long u = t + static_cast<long>(s) - half;
                if (u < 0 || u >= k) continue;
                const auto base = static_cast<std::uint32_t>(s * stride);
                if (with_pitch) {
                    const auto& p = in.pitch[static_cast<std::size_t>(u)];
                    for (auto q = p.start[m]; q < p.start[m + 1]; ++q) out.push(base + p.index[q]);
                }
                const auto& d = in.dur[static_cast<std::size_t>(u)];
                for (auto q = d.start[m]; q < d.start[m + 1]; ++q)
                    out.push(base + static_cast<std::uint32_t>(dur_offset) + d.index[q]);
            }
            out.end_column();
        }
    return out;
}

/// Pitch slots of every frame as one matrix of k*M columns (frame-major).
SparseCols stack_frames(const std::vector<SparseCols>& frames, std::size_t rows) {
    SparseCols out;
    out.rows = rows;
    for (const auto& f : frames)
        for (std::size_t m = 0; m < f.cols(); ++m) {
            for (auto q = f.start[m]; q < f.start[m + 1]; ++q) out.push(f.index[q], f.weight[q]);
            out.end_column();
        }
    return out;
}

Param& make(ad::ParamSet& ps, const std::string& name, std::size_t r, std::size_t c, std::size_t fan_in, ad::Rng& rng) {
    Param& p = ps.add(name, r, c);
    if (fan_in) init_uniform(p, fan_in, rng);
    return p;
}

}  // namespace

ad::Var Head::forward(Graph& g, const std::vector<Var>& features, const SparseCols& cond_cols, std::size_t M,
                      const Var* pre) const {
    std::optional<Var> out;
    if (pre) out = *pre;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        Var t = matmul(g.param(*blocks[i]), features.at(i));
        out = out ? add(*out, t) : t;
    }
    if (cond) {
        Var c = sparse_project(g.param(*cond), cond_cols);
        out = out ? add(*out, c) : c;
    }
    if (!out) out = g.constant(Tensor(bias->value.rows, M));
    return add_bias(*out, g.param(*bias));
}

ad::Var rnn_step(Graph& g, const Param& W, const Param& b, const Var* h, Var x, const Var* coupling) {
    Var z = h ? add(matmul(g.param(const_cast<Param&>(W)), *h), x) : x;
    if (coupling) z = add(z, *coupling);
    return tanh(add_bias(z, g.param(const_cast<Param&>(b))));
}

Net::Net(const std::string& prefix, NetShape shape, ad::ParamSet& ps, ad::Rng& rng) : shape_(std::move(shape)) {
    const auto& s = shape_;
    const std::size_t F = s.axis + s.D, H = s.hidden, O = s.outputs, k = s.k;
    const bool embedded = s.embed != EmbedKind::raw;
    const std::size_t E = s.embed == EmbedKind::fixed12 ? 12 : s.embed_dim;
    if (s.embed == EmbedKind::learned) embedding_ = &make(ps, prefix + "embed", s.axis, E, E, rng);
    if (s.embed == EmbedKind::fixed12 && s.fixed_table.size() != s.axis * 12)
        throw SpecError("fixed embedding table does not match the pitch axis");

    switch (s.body) {
        case BodyKind::bias:
            break;
        case BodyKind::loglinear:
            if (!embedded) {
                layers_ = {&make(ps, prefix + "lin", k * F, O, k * F, rng)};
            } else {
                layers_ = {&make(ps, prefix + "lin.pitch", O, k * E, k * E, rng),
                           &make(ps, prefix + "lin.dur", k * s.D, O, k * F, rng)};
            }
            break;
        case BodyKind::fc:
            if (!embedded) {
                layers_ = {&make(ps, prefix + "fc", k * F, H, k * F, rng)};
            } else {
                layers_ = {&make(ps, prefix + "fc.pitch", H, k * E, k * E, rng),
                           &make(ps, prefix + "fc.dur", k * s.D, H, k * F, rng)};
            }
            biases_ = {&make(ps, prefix + "fc.b", H, 1, 0, rng)};
            head_.blocks = {&make(ps, prefix + "out", O, H, H, rng)};
            break;
        case BodyKind::rnn:
            if (!embedded) {
                layers_ = {&make(ps, prefix + "rnn.x", F, H, F, rng), nullptr};
            } else {
                layers_ = {&make(ps, prefix + "rnn.pitch", H, E, E, rng), &make(ps, prefix + "rnn.dur", s.D, H, F, rng)};
            }
            layers_.push_back(&make(ps, prefix + "rnn.h", H, H, H, rng));
            biases_ = {&make(ps, prefix + "rnn.b", H, 1, 0, rng)};
            head_.blocks = {&make(ps, prefix + "out", O, H, H, rng)};
            break;
        case BodyKind::conv: {
            if (s.conv_widths.empty()) throw SpecError("conv body needs at least one width");
            const std::size_t w1 = s.conv_widths[0];
            if (!embedded) {
                layers_ = {&make(ps, prefix + "conv0", w1 * F, H, w1 * F, rng), nullptr};
            } else {
                layers_ = {&make(ps, prefix + "conv0.pitch", H, w1 * E, w1 * E, rng),
                           &make(ps, prefix + "conv0.dur", w1 * s.D, H, w1 * F, rng)};
            }
            biases_ = {&make(ps, prefix + "conv0.b", H, 1, 0, rng)};
            for (std::size_t l = 1; l < s.conv_widths.size(); ++l) {
                const std::size_t w = s.conv_widths[l];
                const std::string name = prefix + "conv" + std::to_string(l);
                layers_.push_back(&make(ps, name, H, w * H, w * H, rng));
                biases_.push_back(&make(ps, name + ".b", H, 1, 0, rng));
            }
            head_.blocks = {&make(ps, prefix + "out", O, k * H, k * H, rng)};
            break;
        }
    }
    if (s.cond && s.body != BodyKind::bias) head_.cond = &make(ps, prefix + "cond", s.cond, O, s.cond, rng);
    head_.bias = &make(ps, prefix + "b", O, 1, 0, rng);
}

ad::Var frame_projection(Graph& g, const NetInput& in, std::size_t frame, std::size_t axis, const Var* embedding,
                         Param& Wp, Param* Wd) {
    if (!embedding) {
        SparseCols cols;
        const auto& p = in.pitch[frame];
        const auto& d = in.dur[frame];
        cols.rows = axis + d.rows;
        for (std::size_t m = 0; m < in.M; ++m) {
            for (auto q = p.start[m]; q < p.start[m + 1]; ++q) cols.push(p.index[q]);
            for (auto q = d.start[m]; q < d.start[m + 1]; ++q) cols.push(static_cast<std::uint32_t>(axis) + d.index[q]);
            cols.end_column();
        }
        return sparse_project(g.param(Wp), cols);
    }
    Var z = sparse_project(*embedding, in.pitch[frame]);
    return add(matmul(g.param(Wp), z), sparse_project(g.param(*Wd), in.dur[frame]));
}

ad::Var Net::embedding_table(Graph& g) const {
    return embedding_ ? g.param(*embedding_) : g.constant(Tensor::from(shape_.axis, 12, shape_.fixed_table));
}

ad::Var Net::forward(Graph& g, const NetInput& in) const {
    const auto& s = shape_;
    const std::size_t F = s.axis + s.D, M = in.M, k = s.k;
    if (in.dur.size() != k) throw ad::ShapeMismatch("net expects " + std::to_string(k) + " history frames");
    const bool embedded = s.embed != EmbedKind::raw;
    auto embedded_frames = [&]() {
        return sparse_project(embedding_table(g), stack_frames(in.pitch, s.axis));  // E x (k*M)
    };

    switch (s.body) {
        case BodyKind::bias:
            return head_.forward(g, {}, in.cond, M);
        case BodyKind::loglinear: {
            Var pre = embedded ? add(matmul(g.param(*layers_[0]), fold_time(embedded_frames(), k)),
                                     sparse_project(g.param(*layers_[1]), flatten(in, false, s.D, 0)))
                               : sparse_project(g.param(*layers_[0]), flatten(in, true, F, s.axis));
            return head_.forward(g, {}, in.cond, M, &pre);
        }
        case BodyKind::fc: {
            Var z = embedded ? add(matmul(g.param(*layers_[0]), fold_time(embedded_frames(), k)),
                                   sparse_project(g.param(*layers_[1]), flatten(in, false, s.D, 0)))
                             : sparse_project(g.param(*layers_[0]), flatten(in, true, F, s.axis));
            Var h = tanh(add_bias(z, g.param(*biases_[0])));
            return head_.forward(g, {h}, in.cond, M);
        }
        case BodyKind::rnn: {
            std::optional<Var> h;
            std::optional<Var> table;
            if (embedded) table = embedding_table(g);
            for (std::size_t j = 0; j < k; ++j) {
                if (!in.live[j]) {
                    h.reset();
                    continue;
                }
                Var x = frame_projection(g, in, j, s.axis, table ? &*table : nullptr, *layers_[0], layers_[1]);
                h = rnn_step(g, *layers_[2], *biases_[0], h ? &*h : nullptr, x);
            }
            Var state = h ? *h : g.constant(Tensor(s.hidden, M));
            return head_.forward(g, {state}, in.cond, M);
        }
        case BodyKind::conv: {
            const std::size_t w1 = s.conv_widths[0];
            Var z = embedded ? add(conv1d(embedded_frames(), g.param(*layers_[0]), k),
                                   sparse_project(g.param(*layers_[1]), im2col(in, w1, false, s.D, 0)))
                             : sparse_project(g.param(*layers_[0]), im2col(in, w1, true, F, s.axis));
            Var h = tanh(add_bias(z, g.param(*biases_[0])));
            for (std::size_t l = 1; l < s.conv_widths.size(); ++l)
                h = tanh(add_bias(conv1d(h, g.param(*layers_[l + 1]), k), g.param(*biases_[l])));
            return head_.forward(g, {fold_time(h, k)}, in.cond, M);
        }
    }
    throw SpecError("unreachable body");
}

// Models -------------------------------------------------------------------------------

EventBits ScoreModel::event_nll(const EventContext& ctx) const { return nll({ctx}).at(0); }

std::vector<EventBits> ScoreModel::nll(const std::vector<EventContext>& events) const {
    Graph g(false);
    auto vars = losses(g, events);
    std::vector<EventBits> out;
    out.reserve(vars.size());
    for (const auto& v : vars) out.push_back({v.t.value().data[0], v.n.value().data[0]});
    return out;
}

HomophonicModel::HomophonicModel(ModelSpec spec, ModelDims dims, std::uint64_t seed)
    : spec_(std::move(spec)), dims_(dims) {
    if (dims_.pitches == 0 || dims_.durations < 2) throw SpecError("model needs at least one pitch and one duration");
    ad::Rng rng(seed);
    const std::size_t N = dims_.pitches, D = dims_.durations, D1 = D - 1;
    const bool rel = spec_.pitch_mode == PitchMode::relative;

    NetShape t;
    t.body = spec_.body;
    t.conv_widths = spec_.conv_widths;
    t.k = spec_.history_k;
    t.axis = N;
    t.D = D;
    t.hidden = spec_.hidden;
    t.outputs = D1;
    t.cond = spec_.use_location ? dims_.locations : 0;
    if (spec_.duration_embed_fixed) {
        t.embed = EmbedKind::fixed12;
        t.fixed_table = octave_table(N, dims_.pitch_lo);
    }
    duration_net_ = Net("t.", t, params_, rng);

    NetShape n = t;
    n.axis = rel ? 2 * N - 1 : N;
    n.outputs = rel ? 1 : N;
    n.cond = pitch_cond_width(N, D1, spec_.pitch_mode, spec_.use_pitch_class);
    n.embed = spec_.pitch_embed_dim ? EmbedKind::learned : EmbedKind::raw;
    n.embed_dim = spec_.pitch_embed_dim;
    n.fixed_table.clear();
    pitch_net_ = Net("n.", n, params_, rng);
    if (!rel && spec_.body != BodyKind::bias) below_ = &make(params_, "n.below", N, N, N, rng);
}

ad::Var HomophonicModel::duration_forward(Graph& g, const EventContext& ctx) const {
    NetInput in = history_input(ctx, ctx.channel, spec_.history_k, dims_.pitches, dims_.durations, PitchMode::absolute);
    in.cond.rows = spec_.use_location ? dims_.locations : 0;
    if (spec_.use_location) in.cond.push(static_cast<std::uint32_t>(ctx.location));
    in.cond.end_column();
    return duration_net_.forward(g, in);
}

ad::Var HomophonicModel::pitch_forward(Graph& g, const EventContext& ctx, std::size_t y_t,
                                       const std::vector<std::uint8_t>& y) const {
    const std::size_t N = dims_.pitches;
    NetInput in = history_input(ctx, ctx.channel, spec_.history_k, N, dims_.durations, spec_.pitch_mode);
    in.cond = pitch_cond(N, dims_.onset_classes(), spec_.pitch_mode, spec_.use_pitch_class, y_t, &y);
    Var logits = pitch_net_.forward(g, in);
    if (below_) {
        std::vector<double> col(y.begin(), y.end());
        Var masked = hadamard(g.param(*below_), g.constant(lower_mask(N)));
        logits = add(logits, matmul(masked, g.constant(Tensor::column(std::move(col)))));
    }
    return logits;
}

LossVars HomophonicModel::event_loss(Graph& g, const EventContext& ctx) const {
    const auto& tg = ctx.targets;
    if (tg.pitch_bits.size() != dims_.pitches) throw ad::ShapeMismatch("event targets do not match the pitch range");
    Var t = softmax_ce_bits(duration_forward(g, ctx), tg.duration_class);
    std::vector<double> bits(tg.pitch_bits.begin(), tg.pitch_bits.end());
    Var n = sigmoid_bce_bits(pitch_forward(g, ctx, tg.duration_class, tg.pitch_bits), bits);
    return {t, n};
}

std::vector<LossVars> HomophonicModel::losses(Graph& g, const std::vector<EventContext>& events) const {
    std::vector<LossVars> out;
    out.reserve(events.size());
    for (const auto& e : events) out.push_back(event_loss(g, e));
    return out;
}

std::vector<double> HomophonicModel::duration_logits(const EventContext& ctx) const {
    Graph g(false);
    return duration_forward(g, ctx).value().data;
}

PitchLogits HomophonicModel::pitch_logits(const EventContext& ctx, std::size_t duration_class) const {
    const std::size_t N = dims_.pitches, D1 = dims_.onset_classes();
    Graph g(false);
    std::vector<std::uint8_t> zeros(N, 0);
    PitchLogits out;
    out.base = pitch_forward(g, ctx, duration_class, zeros).value().data;
    out.coupling.assign(N * N, 0.0);
    if (below_) {
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t j = 0; j < n; ++j) out.coupling[n * N + j] = below_->value(n, j);
    } else if (const Param* c = pitch_net_.head().cond; c && spec_.pitch_mode == PitchMode::relative) {
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t j = 0; j < n; ++j) out.coupling[n * N + j] = c->value(D1 + j + N - 1 - n, 0);
    }
    return out;
}

}  // namespace polyscore
