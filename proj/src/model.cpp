#include "rnflow/model.hpp"

#include <cmath>
#include <string>

#include "rnflow/errors.hpp"

namespace rnflow {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void fill_time_row(const TimeEmbedding& embed, double t, std::span<double> row) {
    const std::size_t half = embed.width / 2;
    for (std::size_t j = 0; j < half; ++j) {
        const double exponent =
            (half > 1) ? static_cast<double>(j) / static_cast<double>(half - 1) : 0.0;
        const double omega = std::pow(embed.base, exponent);
        row[2 * j] = std::sin(omega * t);
        row[2 * j + 1] = std::cos(omega * t);
    }
}

// Resolve a raw label to a class-embedding row, or kNoLabel when the model is
// unconditional (raw must then be kNoLabel).
std::size_t resolve_embed_row(const VelocityModel& model, std::size_t raw) {
    if (!model.conditional()) {
        if (raw != kNoLabel) {
            throw ConfigError("label given to an unconditional model");
        }
        return kNoLabel;
    }
    if (raw == kNoLabel) return model.null_class_token();
    if (raw > model.class_count) {
        throw ConfigError("label " + std::to_string(raw) + " out of range for " +
                          std::to_string(model.class_count) + " classes");
    }
    return raw;  // a class index, or class_count = the null token itself
}

}  // namespace

double softplus(double z) {
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

Tensor time_embed(const TimeEmbedding& embed, double t) {
    Tensor e = Tensor::zeros({embed.width});
    fill_time_row(embed, t, std::span<double>(e.data));
    return e;
}

Tensor time_embed_batch(const TimeEmbedding& embed, std::span<const double> ts) {
    Tensor e = Tensor::zeros({ts.size(), embed.width});
    for (std::size_t r = 0; r < ts.size(); ++r) {
        fill_time_row(embed, ts[r], e.row(r));
    }
    return e;
}

VelocityModel model_init(const ModelConfig& config, Rng& rng) {
    if (config.time_embed_width < 2 || config.time_embed_width % 2 != 0) {
        throw ConfigError("model_init: time embedding width must be even and >= 2");
    }
    VelocityModel model;
    model.data_dim = config.data_dim;
    model.time_embed = {config.time_embed_width, config.time_embed_base};
    model.class_count = config.class_count;

    std::vector<std::size_t> dims;
    dims.push_back(config.data_dim + config.time_embed_width);
    for (std::size_t k = 0; k < config.hidden_layers; ++k) dims.push_back(config.hidden_width);
    model.trunk = mlp_init(dims, config.activation, rng);
    MlpParams res =
        residual_stack_init(config.hidden_width, config.residual_blocks, config.activation, rng);
    for (LinearLayer& layer : res.layers) model.trunk.layers.push_back(std::move(layer));
    model.trunk.residual_blocks = config.residual_blocks;
    validate(model.trunk);

    model.head = linear_init(config.hidden_width, config.data_dim, rng);

    if (config.class_count > 0) {
        model.class_embed = Tensor::zeros({config.class_count + 1, config.time_embed_width});
        for (double& v : model.class_embed.data) v = 0.02 * rng.normal();
    }
    validate(model);
    return model;
}

void validate(const VelocityModel& model) {
    validate(model.trunk);
    validate(model.head);
    if (model.trunk.layers.empty()) {
        throw ShapeError("VelocityModel: trunk must have at least one layer");
    }
    if (model.head.layers.size() != 1 || model.head.residual_blocks != 0) {
        throw ShapeError("VelocityModel: head must be a single linear layer");
    }
    if (model.trunk.input_width() != model.data_dim + model.time_embed.width) {
        throw ShapeError("VelocityModel: trunk input width mismatch");
    }
    if (model.head.input_width() != model.feature_width() ||
        model.head.output_width() != model.data_dim) {
        throw ShapeError("VelocityModel: head width mismatch");
    }
    if (model.conditional()) {
        const std::vector<std::size_t> want = {model.class_count + 1, model.time_embed.width};
        if (model.class_embed.shape != want) {
            throw ShapeError("VelocityModel: class embedding shape mismatch");
        }
    } else if (model.class_embed.numel() != 0) {
        throw ShapeError("VelocityModel: unconditional model carries a class embedding");
    }
}

Tensor backbone_features_batch(const VelocityModel& model, const Tensor& x,
                               std::span<const double> ts, std::span<const std::size_t> labels,
                               ModelTape* tape) {
    if (x.rank() != 2 || x.cols() != model.data_dim) {
        throw ShapeError("backbone_features_batch: x must be n x data_dim");
    }
    const std::size_t n = x.rows();
    if (ts.size() != n) {
        throw ShapeError("backbone_features_batch: one time per row required");
    }
    if (!labels.empty() && labels.size() != n) {
        throw ShapeError("backbone_features_batch: label count mismatch");
    }
    for (double t : ts) {
        if (!(t >= 0.0 && t <= 1.0)) {
            throw ConfigError("backbone_features_batch: t must lie in [0,1]");
        }
    }

    const std::size_t d = model.data_dim;
    const std::size_t w = model.time_embed.width;
    Tensor input = Tensor::zeros({n, d + w});
    std::vector<std::size_t> embed_rows(n, kNoLabel);
    for (std::size_t r = 0; r < n; ++r) {
        std::span<double> row = input.row(r);
        std::span<const double> xr = x.row(r);
        for (std::size_t c = 0; c < d; ++c) row[c] = xr[c];
        fill_time_row(model.time_embed, ts[r], row.subspan(d));
        const std::size_t raw = labels.empty() ? kNoLabel : labels[r];
        const std::size_t erow = resolve_embed_row(model, raw);
        embed_rows[r] = erow;
        if (erow != kNoLabel) {
            const double* emb = model.class_embed.data.data() + erow * w;
            for (std::size_t c = 0; c < w; ++c) row[d + c] += emb[c];
        }
    }

    auto [features, trunk_tape] = mlp_forward(model.trunk, input);
    if (tape != nullptr) {
        tape->trunk_tape = std::move(trunk_tape);
        tape->embed_rows = std::move(embed_rows);
        tape->batch = n;
    }
    return features;
}

Tensor velocity_head(const VelocityModel& model, const Tensor& features, ModelTape* tape) {
    auto [v, head_tape] = mlp_forward(model.head, features);
    if (tape != nullptr) {
        tape->head_tape = std::move(head_tape);
    }
    return v;
}

Tensor velocity_eval_batch(const VelocityModel& model, const Tensor& x,
                           std::span<const double> ts, std::span<const std::size_t> labels,
                           ModelTape* tape) {
    Tensor features = backbone_features_batch(model, x, ts, labels, tape);
    return velocity_head(model, features, tape);
}

namespace {

Tensor one_row(const Tensor& x) {
    if (x.rank() != 1) throw ShapeError("expected a rank-1 sample");
    Tensor m = x;
    m.shape = {1, x.shape[0]};
    return m;
}

Tensor squeeze_row(Tensor m) {
    m.shape = {m.cols()};
    return m;
}

std::vector<std::size_t> label_vec(std::optional<std::size_t> label) {
    if (!label.has_value()) return {};
    return {*label};
}

}  // namespace

Tensor backbone_features(const VelocityModel& model, const Tensor& x, double t,
                         std::optional<std::size_t> label) {
    const double ts[1] = {t};
    const std::vector<std::size_t> labels = label_vec(label);
    return squeeze_row(backbone_features_batch(model, one_row(x), ts, labels, nullptr));
}

Tensor velocity_eval(const VelocityModel& model, const Tensor& x, double t,
                     std::optional<std::size_t> label) {
    const double ts[1] = {t};
    const std::vector<std::size_t> labels = label_vec(label);
    return squeeze_row(velocity_eval_batch(model, one_row(x), ts, labels, nullptr));
}

ModelGrads model_backward(const VelocityModel& model, const ModelTape& tape, const Tensor& grad_v,
                          const Tensor* extra_feature_grad) {
    auto [head_grads, d_features] = mlp_backward(model.head, tape.head_tape, grad_v);
    if (extra_feature_grad != nullptr) {
        add_inplace(d_features, *extra_feature_grad);
    }
    auto [trunk_grads, d_input] = mlp_backward(model.trunk, tape.trunk_tape, d_features);

    ModelGrads grads;
    grads.trunk = std::move(trunk_grads);
    grads.head = std::move(head_grads);
    grads.class_embed = Tensor::zeros(model.class_embed.shape);
    if (model.conditional()) {
        const std::size_t d = model.data_dim;
        const std::size_t w = model.time_embed.width;
        for (std::size_t r = 0; r < tape.batch; ++r) {
            const std::size_t erow = tape.embed_rows[r];
            if (erow == kNoLabel) continue;
            double* dst = grads.class_embed.data.data() + erow * w;
            const double* src = d_input.data.data() + r * (d + w) + d;
            for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
        }
    }
    return grads;
}

ModelGrads model_zeros_like(const VelocityModel& model) {
    ModelGrads grads;
    grads.trunk = zeros_like(model.trunk);
    grads.head = zeros_like(model.head);
    grads.class_embed = Tensor::zeros(model.class_embed.shape);
    return grads;
}

std::size_t model_param_count(const VelocityModel& model) {
    return param_count(model.trunk) + param_count(model.head) + model.class_embed.numel();
}

void pack_model(const VelocityModel& model, std::vector<double>& out) {
    pack(model.trunk, out);
    pack(model.head, out);
    out.insert(out.end(), model.class_embed.data.begin(), model.class_embed.data.end());
}

void unpack_model(VelocityModel& model, std::span<const double> flat, std::size_t& offset) {
    unpack(model.trunk, flat, offset);
    unpack(model.head, flat, offset);
    for (double& v : model.class_embed.data) {
        if (offset >= flat.size()) throw ShapeError("unpack_model: flat buffer too short");
        v = flat[offset++];
    }
}

// ---------------------------------------------------------------------------
// Noise generator
// ---------------------------------------------------------------------------

const char* family_name(NoiseFamily family) {
    switch (family) {
        case NoiseFamily::kGaussian:
            return "gaussian";
        case NoiseFamily::kGumbel:
            return "gumbel";
        case NoiseFamily::kUniform:
            return "uniform";
    }
    throw ConfigError("unknown noise family");
}

NoiseFamily family_from_name(std::string_view name) {
    if (name == "gaussian") return NoiseFamily::kGaussian;
    if (name == "gumbel") return NoiseFamily::kGumbel;
    if (name == "uniform") return NoiseFamily::kUniform;
    throw ConfigError("unknown noise family '" + std::string(name) +
                      "' (expected gaussian, gumbel, or uniform)");
}

NoiseGenerator noise_init(NoiseFamily family, std::size_t extra_blocks,
                          std::size_t feature_width, std::size_t data_dim, Activation act,
                          Rng& rng) {
    NoiseGenerator gen;
    gen.family = family;
    gen.extra = residual_stack_init(feature_width, extra_blocks, act, rng);
    gen.loc_head = linear_zeros(feature_width, data_dim);
    gen.scale_raw_head = linear_init(feature_width, data_dim, rng);
    gen.gate = 0.0;
    return gen;
}

void validate(const NoiseGenerator& gen) {
    validate(gen.extra);
    validate(gen.loc_head);
    validate(gen.scale_raw_head);
    if (!gen.extra.layers.empty() &&
        (gen.extra.residual_blocks != gen.extra.layers.size())) {
        throw ShapeError("NoiseGenerator: extra stack must be all-residual");
    }
    if (gen.loc_head.layers.size() != 1 || gen.scale_raw_head.layers.size() != 1) {
        throw ShapeError("NoiseGenerator: heads must be single linear layers");
    }
    if (gen.loc_head.input_width() != gen.scale_raw_head.input_width() ||
        gen.loc_head.output_width() != gen.scale_raw_head.output_width()) {
        throw ShapeError("NoiseGenerator: head widths disagree");
    }
    if (!gen.extra.layers.empty() &&
        gen.extra.output_width() != gen.loc_head.input_width()) {
        throw ShapeError("NoiseGenerator: extra stack width does not feed the heads");
    }
}

NoiseParams noise_head_eval(const NoiseGenerator& gen, const Tensor& features, NoiseTape* tape) {
    auto [g, extra_tape] = mlp_forward(gen.extra, features);
    auto [loc, loc_tape] = mlp_forward(gen.loc_head, g);
    auto [pre, scale_tape] = mlp_forward(gen.scale_raw_head, g);

    Tensor scale = pre;
    for (double& v : scale.data) v = gen.gate * softplus(v);
    require_finite(scale, "noise_head_eval");

    if (tape != nullptr) {
        tape->extra_tape = std::move(extra_tape);
        tape->loc_tape = std::move(loc_tape);
        tape->scale_tape = std::move(scale_tape);
        tape->scale_pre = std::move(pre);
    }
    return {gen.family, std::move(loc), std::move(scale)};
}

std::pair<NoiseGrads, Tensor> noise_backward(const NoiseGenerator& gen, const NoiseTape& tape,
                                             const Tensor& grad_loc, const Tensor& grad_scale) {
    require_same_shape(grad_loc, grad_scale, "noise_backward");
    require_same_shape(grad_scale, tape.scale_pre, "noise_backward");

    NoiseGrads grads = noise_zeros_like(gen);

    // scale = gate * softplus(pre)
    Tensor d_pre = grad_scale;
    for (std::size_t i = 0; i < d_pre.data.size(); ++i) {
        const double pre = tape.scale_pre.data[i];
        grads.gate += grad_scale.data[i] * softplus(pre);
        d_pre.data[i] = grad_scale.data[i] * gen.gate * sigmoid(pre);
    }

    auto [loc_grads, d_g_loc] = mlp_backward(gen.loc_head, tape.loc_tape, grad_loc);
    auto [scale_grads, d_g_scale] = mlp_backward(gen.scale_raw_head, tape.scale_tape, d_pre);
    grads.loc_head = std::move(loc_grads);
    grads.scale_raw_head = std::move(scale_grads);

    add_inplace(d_g_loc, d_g_scale);
    auto [extra_grads, d_features] = mlp_backward(gen.extra, tape.extra_tape, d_g_loc);
    grads.extra = std::move(extra_grads);
    return {std::move(grads), std::move(d_features)};
}

NoiseGrads noise_zeros_like(const NoiseGenerator& gen) {
    NoiseGrads grads;
    grads.extra = zeros_like(gen.extra);
    grads.loc_head = zeros_like(gen.loc_head);
    grads.scale_raw_head = zeros_like(gen.scale_raw_head);
    grads.gate = 0.0;
    return grads;
}

Tensor noise_base_draw(NoiseFamily family, Rng& rng, const std::vector<std::size_t>& shape) {
    switch (family) {
        case NoiseFamily::kGaussian:
            return rng.sample_normal(shape);
        case NoiseFamily::kGumbel: {
            Tensor u = rng.sample_uniform(shape);
            for (double& v : u.data) {
                const double c = std::min(std::max(v, 1e-12), 1.0 - 1e-12);
                v = -std::log(-std::log(c));
            }
            return u;
        }
        case NoiseFamily::kUniform:
            return rng.sample_uniform(shape);
    }
    throw ConfigError("unknown noise family");
}

Tensor noise_transform(const NoiseParams& params, const Tensor& base) {
    require_same_shape(params.loc, base, "noise_transform");
    require_same_shape(params.loc, params.scale, "noise_transform");
    Tensor z = params.loc;
    for (std::size_t i = 0; i < z.data.size(); ++i) {
        z.data[i] += params.scale.data[i] * base.data[i];
    }
    require_finite(z, "noise_transform");
    return z;
}

Tensor noise_sample(const NoiseParams& params, Rng& rng) {
    return noise_transform(params, noise_base_draw(params.family, rng, params.loc.shape));
}

Tensor delta_rn_velocity(const VelocityModel& model, const NoiseGenerator& gen, const Tensor& x,
                         double t, Rng& rng, std::optional<std::size_t> label) {
    Tensor features = backbone_features(model, x, t, label);
    Tensor v = velocity_head(model, features, nullptr);
    NoiseParams params = noise_head_eval(gen, features);
    Tensor z = noise_sample(params, rng);
    return add(v, z);
}

std::size_t gen_param_count(const NoiseGenerator& gen) {
    return param_count(gen.extra) + param_count(gen.loc_head) + param_count(gen.scale_raw_head) +
           1;  // gate
}

void pack_gen(const NoiseGenerator& gen, std::vector<double>& out) {
    pack(gen.extra, out);
    pack(gen.loc_head, out);
    pack(gen.scale_raw_head, out);
    out.push_back(gen.gate);
}

void unpack_gen(NoiseGenerator& gen, std::span<const double> flat, std::size_t& offset) {
    unpack(gen.extra, flat, offset);
    unpack(gen.loc_head, flat, offset);
    unpack(gen.scale_raw_head, flat, offset);
    if (offset >= flat.size()) throw ShapeError("unpack_gen: flat buffer too short");
    gen.gate = flat[offset++];
}

}  // namespace rnflow
