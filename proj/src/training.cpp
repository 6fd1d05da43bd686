#include "rnflow/training.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "rnflow/env.hpp"
#include "rnflow/errors.hpp"
#include "rnflow/interpolant.hpp"

namespace rnflow {

const char* train_mode_name(TrainMode mode) {
    switch (mode) {
        case TrainMode::kRf:
            return "rf";
        case TrainMode::kJoint:
            return "joint";
        case TrainMode::kFinetune:
            return "finetune";
    }
    throw ConfigError("unknown train mode");
}

TrainMode train_mode_from_name(std::string_view name) {
    if (name == "rf") return TrainMode::kRf;
    if (name == "joint") return TrainMode::kJoint;
    if (name == "finetune") return TrainMode::kFinetune;
    throw ConfigError("unknown train mode '" + std::string(name) +
                      "' (expected rf, joint, or finetune)");
}

void validate(const TrainConfig& config) {
    if (config.batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
    // steps == 0 is legal: the loop body never runs, yielding an
    // initialization checkpoint and an empty log.
    if (!(config.lr > 0.0)) throw ConfigError("TrainConfig: lr must be > 0");
    if (!(config.label_drop_prob >= 0.0 && config.label_drop_prob <= 1.0)) {
        throw ConfigError("TrainConfig: label_drop_prob must lie in [0,1]");
    }
    if (config.log_every < 1 || config.eval_every < 1) {
        throw ConfigError("TrainConfig: log_every and eval_every must be >= 1");
    }
}

std::size_t trainable_count(const TrainState& state) {
    switch (state.mode) {
        case TrainMode::kRf:
            return model_param_count(state.model);
        case TrainMode::kJoint:
            return model_param_count(state.model) + gen_param_count(*state.gen);
        case TrainMode::kFinetune:
            return gen_param_count(*state.gen);
    }
    throw ConfigError("unknown train mode");
}

std::vector<double> pack_trainable(const TrainState& state) {
    std::vector<double> flat;
    flat.reserve(trainable_count(state));
    if (state.mode != TrainMode::kFinetune) pack_model(state.model, flat);
    if (state.mode != TrainMode::kRf) pack_gen(*state.gen, flat);
    return flat;
}

void unpack_trainable(TrainState& state, std::span<const double> flat) {
    std::size_t offset = 0;
    if (state.mode != TrainMode::kFinetune) unpack_model(state.model, flat, offset);
    if (state.mode != TrainMode::kRf) unpack_gen(*state.gen, flat, offset);
    if (offset != flat.size()) {
        throw ShapeError("unpack_trainable: flat buffer size mismatch");
    }
}

TrainState train_init(TrainMode mode, const ModelConfig& model_config, const TrainConfig& config,
                      std::size_t extra_blocks) {
    validate(config);
    if (mode == TrainMode::kFinetune) {
        throw ConfigError("train_init: finetune mode needs a pre-trained model; use finetune_init");
    }
    TrainState state;
    state.mode = mode;
    Rng init_rng(mix64(config.seed, 0));
    state.model = model_init(model_config, init_rng);
    if (mode == TrainMode::kJoint) {
        state.gen = noise_init(config.noise_family, extra_blocks, state.model.feature_width(),
                               state.model.data_dim, model_config.activation, init_rng);
    }
    state.adam = AdamState::init(trainable_count(state), {config.lr, 0.9, 0.999, 1e-8});
    state.rng = Rng(mix64(config.seed, 1));
    state.step = 0;
    return state;
}

TrainState finetune_init(const VelocityModel& pretrained, const TrainConfig& config,
                         std::size_t extra_blocks) {
    validate(config);
    TrainState state;
    state.mode = TrainMode::kFinetune;
    state.model = pretrained;
    Rng init_rng(mix64(config.seed, 0));
    state.gen = noise_init(config.noise_family, extra_blocks, state.model.feature_width(),
                           state.model.data_dim, state.model.trunk.activation, init_rng);
    state.adam = AdamState::init(trainable_count(state), {config.lr, 0.9, 0.999, 1e-8});
    state.rng = Rng(mix64(config.seed, 1));
    state.step = 0;
    return state;
}

Batch draw_batch(const Dataset& data, std::size_t batch_size, bool labeled, Rng& rng) {
    if (data.size() == 0) throw ConfigError("draw_batch: empty dataset");
    if (labeled && !data.labeled()) {
        throw ConfigError("draw_batch: conditional training needs a labeled dataset");
    }
    const std::size_t d = data.dim();
    Batch batch;
    batch.x_star = Tensor::zeros({batch_size, d});
    if (labeled) batch.labels.resize(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        const std::size_t idx = rng.uniform_index(data.size());
        std::span<const double> src = data.points.row(idx);
        std::span<double> dst = batch.x_star.row(i);
        for (std::size_t c = 0; c < d; ++c) dst[c] = src[c];
        if (labeled) batch.labels[i] = data.labels[idx];
    }
    return batch;
}

namespace {

// Per-item draws under one substream key. Fixed order per item: x0 normals,
// t, label-drop uniform (conditional only), then family base draws. Private
// substreams keep (x0, t, drop) identical whether or not base draws follow.
struct StepDraws {
    Tensor x0;
    std::vector<double> ts;
    std::vector<std::size_t> labels;
    Tensor base;
};

StepDraws per_item_draws(const Batch& batch, std::uint64_t batch_key, bool conditional,
                         double drop_prob, bool need_base, NoiseFamily family) {
    const std::size_t n = batch.x_star.rows();
    const std::size_t d = batch.x_star.cols();
    if (conditional && batch.labels.size() != n) {
        throw ShapeError("per-item draws: conditional batch without labels");
    }
    StepDraws out;
    out.x0 = Tensor::zeros({n, d});
    out.ts.resize(n);
    if (conditional) out.labels.resize(n);
    if (need_base) out.base = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        Rng item(mix64(batch_key, i));
        std::span<double> x0_row = out.x0.row(i);
        for (std::size_t c = 0; c < d; ++c) x0_row[c] = item.normal();
        out.ts[i] = item.uniform();
        if (conditional) {
            const double u = item.uniform();
            out.labels[i] = (u < drop_prob) ? kNoLabel : batch.labels[i];
        }
        if (need_base) {
            Tensor row = noise_base_draw(family, item, {d});
            std::span<double> dst = out.base.row(i);
            for (std::size_t c = 0; c < d; ++c) dst[c] = row.data[c];
        }
    }
    return out;
}

struct PathBatch {
    Tensor x_t;
    Tensor v_target;
};

PathBatch path_batch(const Batch& batch, const StepDraws& draws) {
    const std::size_t n = batch.x_star.rows();
    const std::size_t d = batch.x_star.cols();
    PathBatch p;
    p.x_t = Tensor::zeros({n, d});
    p.v_target = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const double t = draws.ts[i];
        for (std::size_t c = 0; c < d; ++c) {
            const double xs = batch.x_star.data[i * d + c];
            const double x0 = draws.x0.data[i * d + c];
            p.x_t.data[i * d + c] = t * xs + (1.0 - t) * x0;
            p.v_target.data[i * d + c] = xs - x0;
        }
    }
    require_finite(p.x_t, "path_batch");
    return p;
}

// Mean over rows of the squared residual norm; fixed accumulation order.
double mean_sq_loss(const Tensor& residual) {
    double acc = 0.0;
    for (double r : residual.data) acc += r * r;
    const double loss = acc / static_cast<double>(residual.rows());
    if (!std::isfinite(loss)) throw NumericError("training: non-finite batch loss");
    return loss;
}

void pack_grads(const ModelGrads& grads, std::vector<double>& out) {
    pack(grads.trunk, out);
    pack(grads.head, out);
    out.insert(out.end(), grads.class_embed.data.begin(), grads.class_embed.data.end());
}

void pack_grads(const NoiseGrads& grads, std::vector<double>& out) {
    pack(grads.extra, out);
    pack(grads.loc_head, out);
    pack(grads.scale_raw_head, out);
    out.push_back(grads.gate);
}

}  // namespace

double rf_batch_step(VelocityModel& model, const Batch& batch, Rng& rng, AdamState& adam,
                     double label_drop_prob) {
    const std::uint64_t batch_key = rng.next_u64();
    const StepDraws draws = per_item_draws(batch, batch_key, model.conditional(), label_drop_prob,
                                           /*need_base=*/false, NoiseFamily::kGaussian);
    const PathBatch p = path_batch(batch, draws);

    ModelTape tape;
    Tensor v = velocity_eval_batch(model, p.x_t, draws.ts, draws.labels, &tape);
    Tensor residual = sub(v, p.v_target);
    const double loss = mean_sq_loss(residual);

    Tensor grad_v = scale(residual, 2.0 / static_cast<double>(residual.rows()));
    ModelGrads grads = model_backward(model, tape, grad_v);

    std::vector<double> flat_params;
    pack_model(model, flat_params);
    std::vector<double> flat_grads;
    pack_grads(grads, flat_grads);
    adam_step(flat_params, flat_grads, adam);
    std::size_t offset = 0;
    unpack_model(model, flat_params, offset);
    return loss;
}

double joint_batch_step(VelocityModel& model, NoiseGenerator& gen, const Batch& batch, Rng& rng,
                        AdamState& adam, double label_drop_prob) {
    const std::uint64_t batch_key = rng.next_u64();
    const StepDraws draws = per_item_draws(batch, batch_key, model.conditional(), label_drop_prob,
                                           /*need_base=*/true, gen.family);
    const PathBatch p = path_batch(batch, draws);

    ModelTape tape;
    Tensor features = backbone_features_batch(model, p.x_t, draws.ts, draws.labels, &tape);
    Tensor v = velocity_head(model, features, &tape);

    NoiseTape ntape;
    NoiseParams params = noise_head_eval(gen, features, &ntape);
    Tensor z = noise_transform(params, draws.base);
    Tensor v_hat = add(v, z);
    Tensor residual = sub(v_hat, p.v_target);
    const double loss = mean_sq_loss(residual);

    Tensor grad_out = scale(residual, 2.0 / static_cast<double>(residual.rows()));
    Tensor grad_scale = hadamard(grad_out, draws.base);
    auto [gen_grads, d_features] = noise_backward(gen, ntape, grad_out, grad_scale);
    ModelGrads model_grads = model_backward(model, tape, grad_out, &d_features);

    std::vector<double> flat_params;
    pack_model(model, flat_params);
    pack_gen(gen, flat_params);
    std::vector<double> flat_grads;
    pack_grads(model_grads, flat_grads);
    pack_grads(gen_grads, flat_grads);
    adam_step(flat_params, flat_grads, adam);
    std::size_t offset = 0;
    unpack_model(model, flat_params, offset);
    unpack_gen(gen, flat_params, offset);
    return loss;
}

double finetune_batch_step(const VelocityModel& frozen, NoiseGenerator& gen, const Batch& batch,
                           Rng& rng, AdamState& adam, double label_drop_prob) {
    const std::uint64_t batch_key = rng.next_u64();
    const StepDraws draws = per_item_draws(batch, batch_key, frozen.conditional(), label_drop_prob,
                                           /*need_base=*/true, gen.family);
    const PathBatch p = path_batch(batch, draws);

    Tensor features = backbone_features_batch(frozen, p.x_t, draws.ts, draws.labels, nullptr);
    Tensor v = velocity_head(frozen, features, nullptr);

    NoiseTape ntape;
    NoiseParams params = noise_head_eval(gen, features, &ntape);
    Tensor z = noise_transform(params, draws.base);
    Tensor v_hat = add(v, z);
    Tensor residual = sub(v_hat, p.v_target);
    const double loss = mean_sq_loss(residual);

    Tensor grad_out = scale(residual, 2.0 / static_cast<double>(residual.rows()));
    Tensor grad_scale = hadamard(grad_out, draws.base);
    auto [gen_grads, d_features] = noise_backward(gen, ntape, grad_out, grad_scale);
    (void)d_features;  // the backbone is frozen

    std::vector<double> flat_params;
    pack_gen(gen, flat_params);
    std::vector<double> flat_grads;
    pack_grads(gen_grads, flat_grads);
    adam_step(flat_params, flat_grads, adam);
    std::size_t offset = 0;
    unpack_gen(gen, flat_params, offset);
    return loss;
}

TrainLog train_loop(TrainState& state, const Dataset& data, const TrainConfig& config,
                    const EvalFn& eval_fn) {
    validate(config);
    if (data.size() == 0) throw ConfigError("train_loop: empty dataset");
    if ((state.mode != TrainMode::kRf) && !state.gen.has_value()) {
        throw ContractError("train_loop: mode needs a noise generator but none is attached");
    }

    TrainLog log;
    const auto start = std::chrono::steady_clock::now();
    const bool fixed_clock = deterministic_outputs();
    std::size_t consecutive_aborts = 0;

    while (state.step < config.steps) {
        Batch batch =
            draw_batch(data, config.batch_size, state.model.conditional(), state.rng);
        double loss = 0.0;
        bool ok = true;
        try {
            switch (state.mode) {
                case TrainMode::kRf:
                    loss = rf_batch_step(state.model, batch, state.rng, state.adam,
                                         config.label_drop_prob);
                    break;
                case TrainMode::kJoint:
                    loss = joint_batch_step(state.model, *state.gen, batch, state.rng, state.adam,
                                            config.label_drop_prob);
                    break;
                case TrainMode::kFinetune:
                    loss = finetune_batch_step(state.model, *state.gen, batch, state.rng,
                                               state.adam, config.label_drop_prob);
                    break;
            }
        } catch (const NumericError&) {
            ok = false;
            consecutive_aborts += 1;
            if (consecutive_aborts >= 3) {
                throw NumericError("train_loop: three consecutive non-finite steps, run aborted");
            }
        }
        state.step += 1;
        if (!ok) continue;
        consecutive_aborts = 0;

        const bool last = state.step == config.steps;
        if (state.step % config.log_every == 0 || last) {
            TrainLogEntry entry;
            entry.step = state.step;
            entry.loss = loss;
            if (eval_fn && (state.step % config.eval_every == 0 || last)) {
                entry.eval_metric = eval_fn(state);
            }
            entry.seconds =
                fixed_clock
                    ? 0.0
                    : std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                          .count();
            log.entries.push_back(entry);
        }
    }
    return log;
}

}  // namespace rnflow
