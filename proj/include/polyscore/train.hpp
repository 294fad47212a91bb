// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "polyscore/evalgen.hpp"
#include "polyscore/model.hpp"

namespace polyscore {

class NumericFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CheckpointCorrupt : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ManifestMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Homophonic spec strings start with a body name, coupled ones with
/// hier, dist or indep.
bool is_coupled_spec(const std::string& spec);
std::unique_ptr<ScoreModel> make_model(const std::string& spec, const ModelDims& dims, std::uint64_t seed = 1);

// Checkpoints -------------------------------------------------------------------

struct Checkpoint {
    std::string spec;
    ModelDims dims;
    std::string manifest_hash;
    std::string info;  // free-form JSON written by the trainer
    std::vector<ad::Param> params;
};

Checkpoint capture_checkpoint(const ScoreModel& model, const std::string& manifest_hash, const std::string& info = "");
/// "PFMCKPT1", length-prefixed header strings, named shape-tagged
/// little-endian float64 blocks, then an FNV-1a trailer over every byte before it.
std::string encode_checkpoint(const Checkpoint& c);
/// Throws CheckpointCorrupt on a bad magic, truncation or trailer mismatch.
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
/// Builds the model and copies every parameter in; names and shapes must match.
std::unique_ptr<ScoreModel> restore_model(const Checkpoint& c);

// Training ----------------------------------------------------------------------------

struct TrainConfig {
    std::string spec = "lin,k=10";
    ad::OptimizerConfig optimizer{ad::OptimizerConfig::Kind::adam, 1e-2, 0.9, 0.999, 1e-8, 5.0};
    std::size_t batch_scores = 4;
    std::size_t max_epochs = 30;
    std::size_t patience = 3;
    double min_improvement = 1e-4;  // bits per beat
    std::uint64_t seed = 1;
    std::string checkpoint_path;
    // Stop once mean training bits per event falls below this (0 = off).
    double target_train_bits_per_event = 0.0;

    /// key=value lines (# comments) or a JSON object with the same keys.
    static TrainConfig parse(const std::string& text, TrainConfig base);
    static TrainConfig parse(const std::string& text);
    /// Sets one key; throws std::invalid_argument for unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    [[nodiscard]] std::string to_json() const;
    [[nodiscard]] static bool is_key(const std::string& key);
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_bits_per_event = 0.0;
    double valid_bits_per_beat = 0.0;
    bool improved = false;
};

struct TrainResult {
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;
    double best_valid_bits_per_beat = 0.0;
    bool stopped_early = false;
    bool reached_target = false;
};

/// Minibatches of whole scores, loss averaged over the batch's events. After
/// each epoch the validation rate (training rate when `valid` is empty) is
/// checked; training stops after `patience` epochs without improvement and
/// the best parameters are restored.
TrainResult train_model(ScoreModel& model, const std::vector<Score>& train, const std::vector<Score>& valid,
                        const Encoding& enc, const TrainConfig& config,
                        const std::function<void(const EpochLog&)>& on_epoch = {});

/// Mean bits per event of a batch, recorded on g.
ad::Var batch_loss(const ScoreModel& model, ad::Graph& g, const std::vector<const ScoreContexts*>& batch,
                   std::size_t* events = nullptr);

// Gradient check -----------------------------------------------------------------------

/// Two parts over six onset frames, with chords and a rest.
Score gradcheck_fixture();

struct ModelGradCheck {
    std::string spec;
    std::size_t params = 0;
    ad::GradCheckReport report;
};

/// Builds `spec` on the fixture's encoding with random parameters and checks
/// the summed bits of every event.
ModelGradCheck check_model_gradients(const std::string& spec, std::uint64_t seed = 1,
                                     const ad::GradCheckOptions& options = {});

}  // namespace polyscore
