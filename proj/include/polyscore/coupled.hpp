// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "polyscore/model.hpp"

namespace polyscore {

enum class Architecture { hierarchical, distributed, independent };

/// Text form:
///   hier|dist|indep[,pk=N][,gk=N][,abs|rel][,loc][,pc][,temb=fixed12][,emb=learnedE][,h=N][,noshare]
struct CoupledSpec {
    Architecture arch = Architecture::hierarchical;
    std::size_t part_k = 10;
    std::size_t global_k = 10;  // hierarchical only
    bool share_part_weights = true;
    std::size_t hidden = 32;
    PitchMode pitch_mode = PitchMode::relative;
    bool use_location = false;
    bool use_pitch_class = false;
    bool duration_embed_fixed = false;
    std::size_t pitch_embed_dim = 0;
    std::size_t max_parts = kDefaultMaxParts;  // tracks with their own weights under noshare

    static CoupledSpec parse(std::string_view text);
    [[nodiscard]] std::string to_string() const;
    friend bool operator==(const CoupledSpec&, const CoupledSpec&) = default;
};

std::string to_string(Architecture arch);

/// A state per part track; nullopt is the zero state of a dead or padded track.
using PartStates = std::vector<std::optional<ad::Var>>;

/// Destination d receives the sum of every source s with flow(d, s) = 1.
PartStates apply_flow(ad::Graph& g, const PartStates& states, const FlowMatrix& flow);

struct StreamShape {
    Architecture arch = Architecture::hierarchical;
    std::size_t part_k = 1, global_k = 1;
    bool share = true;
    std::size_t tracks = 1;  // weight sets when not shared
    std::size_t axis = 0, D = 0, hidden = 8, outputs = 1, cond = 0;
    PitchMode mode = PitchMode::absolute;
    EmbedKind embed = EmbedKind::raw;
    std::size_t embed_dim = 0;
    std::vector<double> fixed_table;
};

/// Coupled recurrent network feeding one prediction head.
class CoupledStream {
public:
    struct Track {
        ad::Param* Wx = nullptr;  // input table (raw) or pitch-embedding weights
        ad::Param* Wd = nullptr;  // duration table when embedded
        ad::Param* Wp = nullptr;  // recurrence
        ad::Param* b = nullptr;
    };

    struct States {
        PartStates parts;
        std::optional<ad::Var> global;
    };

    CoupledStream() = default;
    CoupledStream(const std::string& prefix, StreamShape shape, ad::ParamSet& params, ad::Rng& rng);

    /// h = tanh(Wp h_prev + Wx x + [W_hp coupling] + b) with the weights of `track`.
    ad::Var part_step(ad::Graph& g, std::size_t track, const ad::Var* h_prev, ad::Var x_proj,
                      const ad::Var* coupling_sum = nullptr) const;
    /// g = tanh(W_h g_prev + W_hp sum_q h_q + b_g); the sum is order-independent.
    ad::Var global_step(ad::Graph& g, const ad::Var* g_prev, const std::vector<ad::Var>& part_states,
                        std::size_t M) const;
    /// Every live part steps with the sum of all previous part states.
    PartStates distributed_step(ad::Graph& g, const PartStates& prev, const std::vector<std::optional<ad::Var>>& x) const;

    /// States after frames [frame - window, frame) of the context's frame set.
    States run(ad::Graph& g, const EventContext& ctx) const;
    /// outputs x M logits for the part in `channel`.
    ad::Var head(ad::Graph& g, const States& s, std::size_t channel, const ad::SparseCols& cond, std::size_t M) const;

    [[nodiscard]] const StreamShape& shape() const { return shape_; }
    [[nodiscard]] const Head& head_layer(std::size_t i = 0) const { return heads_.at(shape_.share ? 0 : i); }
    [[nodiscard]] const Track& track(std::size_t i) const { return tracks_.at(shape_.share ? 0 : i); }
    [[nodiscard]] ad::Param* coupling() const { return couple_; }
    [[nodiscard]] ad::Param* global_recurrence() const { return glob_h_; }
    [[nodiscard]] ad::Param* global_input() const { return glob_in_; }
    [[nodiscard]] ad::Param* global_bias() const { return glob_b_; }

private:
    ad::Var project(ad::Graph& g, const NetInput& in, std::size_t j, std::size_t track, const ad::Var* table) const;

    StreamShape shape_;
    std::vector<Track> tracks_;
    ad::Param* embedding_ = nullptr;
    ad::Param* couple_ = nullptr;  // distributed W_hp
    ad::Param* glob_h_ = nullptr;  // hierarchical W_h
    ad::Param* glob_in_ = nullptr; // hierarchical W_hp
    ad::Param* glob_b_ = nullptr;
    std::vector<Head> heads_;  // one per track when weights are not shared
};

class CoupledModel final : public ScoreModel {
public:
    CoupledModel(CoupledSpec spec, ModelDims dims, std::uint64_t seed = 1);
    CoupledModel(const CoupledModel&) = delete;
    CoupledModel& operator=(const CoupledModel&) = delete;

    [[nodiscard]] const CoupledSpec& spec() const { return spec_; }
    [[nodiscard]] std::string spec_string() const override { return spec_.to_string(); }
    [[nodiscard]] const ModelDims& dims() const override { return dims_; }
    ad::ParamSet& params() override { return params_; }
    [[nodiscard]] const ad::ParamSet& params() const override { return params_; }
    [[nodiscard]] bool full_score_frames() const override { return true; }

    std::vector<LossVars> losses(ad::Graph& g, const std::vector<EventContext>& events) const override;
    [[nodiscard]] std::vector<double> duration_logits(const EventContext& ctx) const override;
    [[nodiscard]] PitchLogits pitch_logits(const EventContext& ctx, std::size_t duration_class) const override;

    [[nodiscard]] const CoupledStream& duration_stream() const { return duration_; }
    [[nodiscard]] const CoupledStream& pitch_stream() const { return pitch_; }

private:
    ad::Var duration_head(ad::Graph& g, const CoupledStream::States& s, const EventContext& ctx) const;
    ad::Var pitch_head(ad::Graph& g, const CoupledStream::States& s, const EventContext& ctx, std::size_t y_t,
                       const std::vector<std::uint8_t>& y) const;

    CoupledSpec spec_;
    ModelDims dims_;
    ad::ParamSet params_;
    CoupledStream duration_;
    CoupledStream pitch_;
    ad::Param* below_ = nullptr;
};

}  // namespace polyscore
