#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "rnflow/data_metrics.hpp"
#include "rnflow/model.hpp"
#include "rnflow/optim.hpp"
#include "rnflow/rng.hpp"

namespace rnflow {

enum class TrainMode { kRf, kJoint, kFinetune };

const char* train_mode_name(TrainMode mode);
TrainMode train_mode_from_name(std::string_view name);

struct TrainConfig {
    std::size_t batch_size = 256;
    std::size_t steps = 20000;  // 0 = emit the initialization, run nothing
    double lr = 1e-3;
    std::uint64_t seed = 0;
    NoiseFamily noise_family = NoiseFamily::kGaussian;
    double label_drop_prob = 0.1;  // conditional models only
    std::size_t log_every = 100;
    std::size_t eval_every = 1000;
};

void validate(const TrainConfig& config);

struct TrainLogEntry {
    std::uint64_t step = 0;
    double loss = 0.0;
    std::optional<double> eval_metric;
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;
};

/// Everything a training run owns; checkpointing serializes this whole
/// struct, so a resumed run continues bit-identically.
struct TrainState {
    TrainMode mode = TrainMode::kRf;
    VelocityModel model;
    std::optional<NoiseGenerator> gen;
    AdamState adam;
    Rng rng{0};  // master stream: batch indices + one substream key per step
    std::uint64_t step = 0;
};

/// Which parameters the optimizer touches: rf trains the model, joint trains
/// model + generator, finetune trains the generator only.
std::size_t trainable_count(const TrainState& state);
std::vector<double> pack_trainable(const TrainState& state);
void unpack_trainable(TrainState& state, std::span<const double> flat);

TrainState train_init(TrainMode mode, const ModelConfig& model_config,
                      const TrainConfig& config, std::size_t extra_blocks = 0);

/// Finetune state wrapping a pre-trained model: the model is frozen, a fresh
/// zero-noise generator is attached, and Adam covers the generator only.
TrainState finetune_init(const VelocityModel& pretrained, const TrainConfig& config,
                         std::size_t extra_blocks = 0);

/// One training batch: data rows plus raw labels (empty for unconditional
/// training; label dropping happens inside the step).
struct Batch {
    Tensor x_star;                    // batch x dim
    std::vector<std::size_t> labels;  // empty, or one per row
};

/// Assemble a batch by drawing `batch_size` dataset rows from `rng`, then one
/// substream key for the per-item draws. All three batch steps consume
/// identical per-item (x0, t, label-drop) draws under the same key, which is
/// what makes the degenerate-generator equivalences exact.
Batch draw_batch(const Dataset& data, std::size_t batch_size, bool labeled, Rng& rng);

/// Velocity regression: mean over the batch of |v(x_t,t) - (x_star - x0)|^2,
/// one Adam step. Parameters are untouched if anything is non-finite.
double rf_batch_step(VelocityModel& model, const Batch& batch, Rng& rng, AdamState& adam,
                     double label_drop_prob);

/// Joint training of model and generator through the reparameterized draw
/// z = loc + scale .* u: mean |v + z - v_target|^2, one Adam step over both.
double joint_batch_step(VelocityModel& model, NoiseGenerator& gen, const Batch& batch, Rng& rng,
                        AdamState& adam, double label_drop_prob);

/// Frozen-backbone variant: same objective as joint, but gradients reach the
/// generator only and the model is never written.
double finetune_batch_step(const VelocityModel& frozen, NoiseGenerator& gen, const Batch& batch,
                           Rng& rng, AdamState& adam, double label_drop_prob);

using EvalFn = std::function<double(const TrainState&)>;

/// Drive `state` from its current step to config.steps. Logs every
/// config.log_every steps (plus the final step); attaches the eval metric
/// every config.eval_every steps when an eval function is given. A non-finite
/// step is skipped without updating parameters; three consecutive skips abort
/// the run with a numeric error.
TrainLog train_loop(TrainState& state, const Dataset& data, const TrainConfig& config,
                    const EvalFn& eval_fn = {});

}  // namespace rnflow
