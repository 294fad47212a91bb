// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "polyscore/autodiff.hpp"
#include "polyscore/encode.hpp"
#include "polyscore/score.hpp"

namespace polyscore {

class SpecError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class BodyKind { bias, loglinear, fc, conv, rnn };
enum class PitchMode { absolute, relative };

/// One homophonic architecture. Text form:
///   body[,k=N][,abs|rel][,loc][,pc][,temb=fixed12][,emb=learnedE][,h=N][,cont]
/// with body one of bias, lin, fc, conv=W1:W2:..., rnn.
struct ModelSpec {
    BodyKind body = BodyKind::loglinear;
    std::vector<std::size_t> conv_widths;  // first applied first
    std::size_t history_k = 10;
    PitchMode pitch_mode = PitchMode::absolute;
    bool use_location = false;
    bool use_pitch_class = false;       // relative mode only
    bool duration_embed_fixed = false;  // octave-folded pitches in the duration body
    std::size_t pitch_embed_dim = 0;    // learned pitch embedding in the pitch body; 0 = raw bits
    std::size_t hidden = 32;
    bool continuation = false;          // history on the full-score frame grid

    static ModelSpec parse(std::string_view text);
    [[nodiscard]] std::string to_string() const;
    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

std::string to_string(BodyKind body);

/// Sizes fixed by the corpus encoding.
struct ModelDims {
    std::size_t pitches = 0;    // N
    std::size_t durations = 0;  // D, continuation slot included
    std::size_t locations = 1;  // frames per beat
    int pitch_lo = 21;

    [[nodiscard]] std::size_t onset_classes() const { return durations - 1; }
    friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Vocabulary, pitch range and resolution shared by a corpus and its models.
struct Encoding {
    DurationVocab vocab;
    PitchRange range;
    Resolution resolution;

    [[nodiscard]] ModelDims dims() const;
};

// Prediction contexts ------------------------------------------------------------

/// Frames of one score (or one part of it) plus the flow steps they index.
struct FrameSet {
    ScoreFrames frames;
    std::vector<FlowStep> flows;
};

/// One event to predict. History is frames [frame - k, frame) of `channel`
/// (all channels for coupled models).
struct EventContext {
    std::shared_ptr<const FrameSet> set;
    std::size_t channel = 0;
    std::size_t part = 0;
    std::size_t frame = 0;
    std::size_t location = 0;
    RationalTime onset;
    EventTargets targets;
};

struct ScoreContexts {
    std::vector<EventContext> events;  // prediction order
    RationalTime length;
};

/// full_frames: one frame grid for the score (continuation symbols, all
/// parts visible). Otherwise each part is framed by its own events.
ScoreContexts build_contexts(const Score& score, const Encoding& enc, bool full_frames, EncodeStats* stats = nullptr,
                             bool strict = false);

/// Context for the next event of `part` at `onset` in a score under
/// construction. Its targets are left empty.
EventContext generation_context(std::shared_ptr<const FrameSet> set, std::size_t channel, std::size_t part,
                                const RationalTime& onset, const Encoding& enc);

// Network pieces -------------------------------------------------------------------

/// Sparse binary history for M query columns.
struct NetInput {
    std::size_t M = 1;
    std::vector<ad::SparseCols> pitch;  // per frame, oldest first: pitch-axis slots
    std::vector<ad::SparseCols> dur;    // per frame: duration slots
    std::vector<bool> live;             // per frame
    ad::SparseCols cond;                // head-only features, M columns
};

/// Pitch axis of the history for one channel: absolute (one column) or
/// re-centred on every pitch (N columns, axis 2N - 1).
NetInput history_input(const EventContext& ctx, std::size_t channel, std::size_t k, std::size_t N, std::size_t D,
                       PitchMode mode);

enum class EmbedKind { raw, fixed12, learned };

struct NetShape {
    BodyKind body = BodyKind::loglinear;
    std::vector<std::size_t> conv_widths;
    std::size_t k = 1;
    std::size_t axis = 0;     // pitch-axis slots
    std::size_t D = 0;        // duration slots in the history
    std::size_t hidden = 32;
    std::size_t outputs = 1;
    std::size_t cond = 0;
    EmbedKind embed = EmbedKind::raw;
    std::size_t embed_dim = 0;
    std::vector<double> fixed_table;  // axis x 12 when embed == fixed12
};

/// Octave-folding table for an absolute (lo-based) or relative (centre N - 1) axis.
std::vector<double> octave_table(std::size_t axis, int origin);

/// Final layer: sum of per-block weights times features, a sparse table over
/// the conditioning features, and a bias.
struct Head {
    std::vector<ad::Param*> blocks;  // outputs x in_i
    ad::Param* cond = nullptr;       // cond x outputs, may be null
    ad::Param* bias = nullptr;       // outputs x 1

    /// `pre`, when given, is an outputs x M term added before the blocks.
    ad::Var forward(ad::Graph& g, const std::vector<ad::Var>& features, const ad::SparseCols& cond_cols,
                    std::size_t M, const ad::Var* pre = nullptr) const;
};

/// One recurrence step: tanh(W h + x + [coupling] + b). A missing h means
/// the zero state.
ad::Var rnn_step(ad::Graph& g, const ad::Param& W, const ad::Param& b, const ad::Var* h, ad::Var x,
                 const ad::Var* coupling = nullptr);

/// Input projection of frame j of `in`: raw bits through one sparse table
/// Wp (axis + D rows), or embedded pitches through Wp plus duration bits
/// through the sparse table Wd.
ad::Var frame_projection(ad::Graph& g, const NetInput& in, std::size_t frame, std::size_t axis,
                         const ad::Var* embedding, ad::Param& Wp, ad::Param* Wd);

/// Body plus head for one prediction type.
class Net {
public:
    Net() = default;
    Net(const std::string& prefix, NetShape shape, ad::ParamSet& params, ad::Rng& rng);

    /// outputs x M logits.
    ad::Var forward(ad::Graph& g, const NetInput& in) const;
    [[nodiscard]] const NetShape& shape() const { return shape_; }
    [[nodiscard]] const Head& head() const { return head_; }

private:
    ad::Var embedding_table(ad::Graph& g) const;

    NetShape shape_;
    Head head_;
    std::vector<ad::Param*> layers_;  // body weights, body-specific order
    std::vector<ad::Param*> biases_;
    ad::Param* embedding_ = nullptr;
};

// Models -----------------------------------------------------------------------------

struct LossVars {
    ad::Var t;
    ad::Var n;
};

struct EventBits {
    double t = 0.0;
    double n = 0.0;
};

/// Pitch logits given a duration: logit_n = base[n] + sum over j < n with
/// y_j = 1 of coupling[n * N + j].
struct PitchLogits {
    std::vector<double> base;
    std::vector<double> coupling;
};

/// What evaluation and generation need from any model.
class ScoreModel {
public:
    virtual ~ScoreModel() = default;

    [[nodiscard]] virtual std::string spec_string() const = 0;
    [[nodiscard]] virtual const ModelDims& dims() const = 0;
    virtual ad::ParamSet& params() = 0;
    [[nodiscard]] virtual const ad::ParamSet& params() const = 0;
    [[nodiscard]] virtual bool full_score_frames() const = 0;

    /// Bits of every event, recorded on g. Events sharing a frame set may share work.
    virtual std::vector<LossVars> losses(ad::Graph& g, const std::vector<EventContext>& events) const = 0;
    [[nodiscard]] virtual std::vector<double> duration_logits(const EventContext& ctx) const = 0;
    [[nodiscard]] virtual PitchLogits pitch_logits(const EventContext& ctx, std::size_t duration_class) const = 0;

    [[nodiscard]] EventBits event_nll(const EventContext& ctx) const;
    [[nodiscard]] std::vector<EventBits> nll(const std::vector<EventContext>& events) const;
};

class HomophonicModel final : public ScoreModel {
public:
    HomophonicModel(ModelSpec spec, ModelDims dims, std::uint64_t seed = 1);
    HomophonicModel(const HomophonicModel&) = delete;
    HomophonicModel& operator=(const HomophonicModel&) = delete;

    [[nodiscard]] const ModelSpec& spec() const { return spec_; }
    [[nodiscard]] std::string spec_string() const override { return spec_.to_string(); }
    [[nodiscard]] const ModelDims& dims() const override { return dims_; }
    ad::ParamSet& params() override { return params_; }
    [[nodiscard]] const ad::ParamSet& params() const override { return params_; }
    [[nodiscard]] bool full_score_frames() const override { return spec_.continuation; }

    std::vector<LossVars> losses(ad::Graph& g, const std::vector<EventContext>& events) const override;
    [[nodiscard]] std::vector<double> duration_logits(const EventContext& ctx) const override;
    [[nodiscard]] PitchLogits pitch_logits(const EventContext& ctx, std::size_t duration_class) const override;

    LossVars event_loss(ad::Graph& g, const EventContext& ctx) const;

private:
    ad::Var duration_forward(ad::Graph& g, const EventContext& ctx) const;
    /// Teacher-forced pitch logits with duration class y_t and pitch bits y.
    ad::Var pitch_forward(ad::Graph& g, const EventContext& ctx, std::size_t y_t,
                          const std::vector<std::uint8_t>& y) const;

    ModelSpec spec_;
    ModelDims dims_;
    ad::ParamSet params_;
    Net duration_net_;
    Net pitch_net_;
    ad::Param* below_ = nullptr;  // absolute mode: N x N, only j < n used
};

/// Conditioning columns shared by every pitch head: one-hot y_t, then the
/// lower pitch bits (absolute: none; relative: shifted onto the 2N - 1 axis),
/// then 1_n.
ad::SparseCols pitch_cond(std::size_t N, std::size_t D1, PitchMode mode, bool pitch_class, std::size_t y_t,
                          const std::vector<std::uint8_t>* y);
std::size_t pitch_cond_width(std::size_t N, std::size_t D1, PitchMode mode, bool pitch_class);

/// Strictly-lower-triangular N x N mask.
ad::Tensor lower_mask(std::size_t N);

}  // namespace polyscore
