#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "rnflow/mlp.hpp"
#include "rnflow/rng.hpp"
#include "rnflow/tensor.hpp"

namespace rnflow {

/// Sentinel for "no label" in batched label spans.
inline constexpr std::size_t kNoLabel = static_cast<std::size_t>(-1);

/// Sinusoidal embedding of scalar time: pairs (sin(w_j t), cos(w_j t)) with
/// frequencies w_j = base^(j/(half-1)) rising from 1 to `base`.
struct TimeEmbedding {
    std::size_t width = 64;  // even
    double base = 1e4;
};

Tensor time_embed(const TimeEmbedding& embed, double t);
Tensor time_embed_batch(const TimeEmbedding& embed, std::span<const double> ts);

/// Velocity network: trunk MLP over concat(x, time embedding + class
/// embedding) producing a feature vector, then a linear head back to data
/// space. Conditional models reserve embedding row `class_count` as the
/// null-label token for classifier-free guidance.
struct VelocityModel {
    std::size_t data_dim = 2;
    TimeEmbedding time_embed;
    std::size_t class_count = 0;  // 0 = unconditional
    Tensor class_embed;           // (class_count+1) x embed width; empty if unconditional
    MlpParams trunk;              // (data_dim + embed width) -> feature width
    MlpParams head;               // single linear layer, feature width -> data_dim

    bool conditional() const { return class_count > 0; }
    std::size_t null_class_token() const { return class_count; }
    std::size_t feature_width() const { return trunk.output_width(); }
};

struct ModelConfig {
    std::size_t data_dim = 2;
    std::size_t hidden_width = 128;
    std::size_t hidden_layers = 3;
    std::size_t residual_blocks = 2;
    std::size_t time_embed_width = 64;
    double time_embed_base = 1e4;
    std::size_t class_count = 0;
    Activation activation = Activation::kSilu;
};

VelocityModel model_init(const ModelConfig& config, Rng& rng);
void validate(const VelocityModel& model);

/// Forward tape across trunk and head for one batched evaluation.
struct ModelTape {
    MlpTape trunk_tape;
    MlpTape head_tape;
    std::vector<std::size_t> embed_rows;  // class-embed row per sample; kNoLabel if none
    std::size_t batch = 0;
};

/// Parameter-shaped gradients of a VelocityModel.
struct ModelGrads {
    MlpParams trunk;
    MlpParams head;
    Tensor class_embed;
};

/// Trunk features for a batch. `ts` holds one time per row; `labels` is empty
/// for unconditional evaluation or one entry per row (kNoLabel and dropped
/// labels map to the null token on conditional models).
Tensor backbone_features_batch(const VelocityModel& model, const Tensor& x,
                               std::span<const double> ts, std::span<const std::size_t> labels,
                               ModelTape* tape = nullptr);

Tensor velocity_head(const VelocityModel& model, const Tensor& features, ModelTape* tape = nullptr);

Tensor velocity_eval_batch(const VelocityModel& model, const Tensor& x,
                           std::span<const double> ts, std::span<const std::size_t> labels,
                           ModelTape* tape = nullptr);

/// Single-sample conveniences.
Tensor backbone_features(const VelocityModel& model, const Tensor& x, double t,
                         std::optional<std::size_t> label = std::nullopt);
Tensor velocity_eval(const VelocityModel& model, const Tensor& x, double t,
                     std::optional<std::size_t> label = std::nullopt);

/// Reverse-mode pass through head and trunk. `grad_v` is the loss gradient at
/// the head output; `extra_feature_grad` (optional, same shape as features)
/// joins the head's contribution before the trunk pass, for branches that also
/// read the features.
ModelGrads model_backward(const VelocityModel& model, const ModelTape& tape, const Tensor& grad_v,
                          const Tensor* extra_feature_grad = nullptr);

ModelGrads model_zeros_like(const VelocityModel& model);

std::size_t model_param_count(const VelocityModel& model);
void pack_model(const VelocityModel& model, std::vector<double>& out);
void unpack_model(VelocityModel& model, std::span<const double> flat, std::size_t& offset);

// ---------------------------------------------------------------------------
// Noise generator
// ---------------------------------------------------------------------------

enum class NoiseFamily { kGaussian, kGumbel, kUniform };

const char* family_name(NoiseFamily family);
NoiseFamily family_from_name(std::string_view name);

/// Learned noise head over frozen backbone features: optional residual blocks,
/// a zero-initialized location head, a raw-scale head, and a scalar gate.
/// Effective scale = gate * softplus(scale_raw), so a fresh generator emits
/// exactly zero noise and the composite model reproduces the plain velocity.
struct NoiseGenerator {
    NoiseFamily family = NoiseFamily::kGaussian;
    MlpParams extra;           // residual stack on features; empty = identity
    MlpParams loc_head;        // linear, feature width -> data_dim, zero-init
    MlpParams scale_raw_head;  // linear, feature width -> data_dim
    double gate = 0.0;

    std::size_t extra_blocks() const { return extra.layers.size(); }
};

NoiseGenerator noise_init(NoiseFamily family, std::size_t extra_blocks,
                          std::size_t feature_width, std::size_t data_dim, Activation act,
                          Rng& rng);
void validate(const NoiseGenerator& gen);

/// Distribution parameters emitted by the head. For gaussian/gumbel, loc and
/// scale are mu and sigma/beta; for uniform, loc = a and scale = b - a.
struct NoiseParams {
    NoiseFamily family = NoiseFamily::kGaussian;
    Tensor loc;
    Tensor scale;
};

struct NoiseTape {
    MlpTape extra_tape;
    MlpTape loc_tape;
    MlpTape scale_tape;
    Tensor scale_pre;  // raw head output, before gate * softplus
};

struct NoiseGrads {
    MlpParams extra;
    MlpParams loc_head;
    MlpParams scale_raw_head;
    double gate = 0.0;
};

NoiseParams noise_head_eval(const NoiseGenerator& gen, const Tensor& features,
                            NoiseTape* tape = nullptr);

/// Gradients of the generator given loss gradients at loc and effective scale;
/// also returns the gradient flowing back into the features.
std::pair<NoiseGrads, Tensor> noise_backward(const NoiseGenerator& gen, const NoiseTape& tape,
                                             const Tensor& grad_loc, const Tensor& grad_scale);

NoiseGrads noise_zeros_like(const NoiseGenerator& gen);

/// Family base draw u, so that z = loc + scale .* u is the reparameterized
/// sample: gaussian u ~ N(0,1); gumbel u = -log(-log(U)) with U clamped to
/// [1e-12, 1-1e-12]; uniform u ~ U(0,1).
Tensor noise_base_draw(NoiseFamily family, Rng& rng, const std::vector<std::size_t>& shape);

/// z = loc + scale .* base.
Tensor noise_transform(const NoiseParams& params, const Tensor& base);

Tensor noise_sample(const NoiseParams& params, Rng& rng);

/// Plain velocity plus one fresh reparameterized noise draw (single sample).
Tensor delta_rn_velocity(const VelocityModel& model, const NoiseGenerator& gen, const Tensor& x,
                         double t, Rng& rng, std::optional<std::size_t> label = std::nullopt);

std::size_t gen_param_count(const NoiseGenerator& gen);
void pack_gen(const NoiseGenerator& gen, std::vector<double>& out);
void unpack_gen(NoiseGenerator& gen, std::span<const double> flat, std::size_t& offset);

double softplus(double z);

}  // namespace rnflow
