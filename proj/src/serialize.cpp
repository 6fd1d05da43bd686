#include "rnflow/serialize.hpp"

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "rnflow/env.hpp"
#include "rnflow/errors.hpp"

namespace rnflow {

using ordered_json = nlohmann::ordered_json;

std::string double_to_hex(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double double_from_hex(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') {
        throw ConfigError("not a hexfloat value: '" + s + "'");
    }
    return v;
}

const char* activation_name(Activation act) {
    switch (act) {
        case Activation::kTanh:
            return "tanh";
        case Activation::kSilu:
            return "silu";
    }
    throw ConfigError("unknown activation");
}

Activation activation_from_name(std::string_view name) {
    if (name == "tanh") return Activation::kTanh;
    if (name == "silu") return Activation::kSilu;
    throw ConfigError("unknown activation '" + std::string(name) + "' (expected tanh or silu)");
}

std::string make_run_id(const std::string& canonical_config) {
    // FNV-1a over the canonical rendering, folded to 16 hex digits.
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : canonical_config) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string provenance_timestamp() {
    std::time_t t = 0;
    if (auto pinned = source_date_epoch(); pinned.has_value()) {
        t = static_cast<std::time_t>(*pinned);
    } else {
        t = std::time(nullptr);
    }
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

namespace {

ordered_json hex_array(const std::vector<double>& values) {
    ordered_json arr = ordered_json::array();
    for (double v : values) arr.push_back(double_to_hex(v));
    return arr;
}

std::vector<double> from_hex_array(const ordered_json& arr, std::size_t expect) {
    if (!arr.is_array() || arr.size() != expect) {
        throw ConfigError("checkpoint: array length mismatch");
    }
    std::vector<double> out;
    out.reserve(expect);
    for (const auto& v : arr) out.push_back(double_from_hex(v.get<std::string>()));
    return out;
}

ordered_json mlp_to_json(const MlpParams& params) {
    ordered_json j;
    j["activation"] = activation_name(params.activation);
    j["residual_blocks"] = params.residual_blocks;
    ordered_json layers = ordered_json::array();
    for (const LinearLayer& layer : params.layers) {
        ordered_json lj;
        lj["out"] = layer.out();
        lj["in"] = layer.in();
        lj["weight"] = hex_array(layer.weight.data);
        lj["bias"] = hex_array(layer.bias.data);
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    return j;
}

MlpParams mlp_from_json(const ordered_json& j) {
    MlpParams params;
    params.activation = activation_from_name(j.at("activation").get<std::string>());
    params.residual_blocks = j.at("residual_blocks").get<std::size_t>();
    for (const auto& lj : j.at("layers")) {
        const std::size_t out = lj.at("out").get<std::size_t>();
        const std::size_t in = lj.at("in").get<std::size_t>();
        LinearLayer layer;
        layer.weight = Tensor::zeros({out, in});
        layer.weight.data = from_hex_array(lj.at("weight"), out * in);
        layer.bias = Tensor::zeros({out});
        layer.bias.data = from_hex_array(lj.at("bias"), out);
        params.layers.push_back(std::move(layer));
    }
    validate(params);
    return params;
}

ordered_json model_to_json(const VelocityModel& model) {
    ordered_json j;
    j["data_dim"] = model.data_dim;
    j["time_embed"] = {{"width", model.time_embed.width},
                       {"base", double_to_hex(model.time_embed.base)}};
    j["class_count"] = model.class_count;
    j["class_embed"] = hex_array(model.class_embed.data);
    j["trunk"] = mlp_to_json(model.trunk);
    j["head"] = mlp_to_json(model.head);
    return j;
}

VelocityModel model_from_json(const ordered_json& j) {
    VelocityModel model;
    model.data_dim = j.at("data_dim").get<std::size_t>();
    model.time_embed.width = j.at("time_embed").at("width").get<std::size_t>();
    model.time_embed.base = double_from_hex(j.at("time_embed").at("base").get<std::string>());
    model.class_count = j.at("class_count").get<std::size_t>();
    if (model.class_count > 0) {
        model.class_embed = Tensor::zeros({model.class_count + 1, model.time_embed.width});
        model.class_embed.data =
            from_hex_array(j.at("class_embed"), model.class_embed.numel());
    } else if (!j.at("class_embed").empty()) {
        throw ConfigError("checkpoint: unconditional model with class embedding data");
    }
    model.trunk = mlp_from_json(j.at("trunk"));
    model.head = mlp_from_json(j.at("head"));
    validate(model);
    return model;
}

ordered_json gen_to_json(const NoiseGenerator& gen) {
    ordered_json j;
    j["family"] = family_name(gen.family);
    j["extra"] = mlp_to_json(gen.extra);
    j["loc_head"] = mlp_to_json(gen.loc_head);
    j["scale_raw_head"] = mlp_to_json(gen.scale_raw_head);
    j["gate"] = double_to_hex(gen.gate);
    return j;
}

NoiseGenerator gen_from_json(const ordered_json& j) {
    NoiseGenerator gen;
    gen.family = family_from_name(j.at("family").get<std::string>());
    gen.extra = mlp_from_json(j.at("extra"));
    gen.loc_head = mlp_from_json(j.at("loc_head"));
    gen.scale_raw_head = mlp_from_json(j.at("scale_raw_head"));
    gen.gate = double_from_hex(j.at("gate").get<std::string>());
    validate(gen);
    return gen;
}

ordered_json adam_to_json(const AdamState& adam) {
    ordered_json j;
    j["lr"] = double_to_hex(adam.config.lr);
    j["beta1"] = double_to_hex(adam.config.beta1);
    j["beta2"] = double_to_hex(adam.config.beta2);
    j["eps"] = double_to_hex(adam.config.eps);
    j["step_count"] = adam.step_count;
    j["first_moment"] = hex_array(adam.first_moment);
    j["second_moment"] = hex_array(adam.second_moment);
    return j;
}

AdamState adam_from_json(const ordered_json& j) {
    AdamState adam;
    adam.config.lr = double_from_hex(j.at("lr").get<std::string>());
    adam.config.beta1 = double_from_hex(j.at("beta1").get<std::string>());
    adam.config.beta2 = double_from_hex(j.at("beta2").get<std::string>());
    adam.config.eps = double_from_hex(j.at("eps").get<std::string>());
    adam.step_count = j.at("step_count").get<std::uint64_t>();
    const auto& fm = j.at("first_moment");
    adam.first_moment = from_hex_array(fm, fm.size());
    adam.second_moment = from_hex_array(j.at("second_moment"), adam.first_moment.size());
    return adam;
}

ordered_json rng_to_json(const Rng& rng) {
    ordered_json j;
    j["state"] = rng.state();
    j["has_spare"] = rng.has_spare();
    j["spare"] = double_to_hex(rng.spare());
    return j;
}

Rng rng_from_json(const ordered_json& j) {
    Rng rng(0);
    rng.restore(j.at("state").get<std::uint64_t>(), j.at("has_spare").get<bool>(),
                double_from_hex(j.at("spare").get<std::string>()));
    return rng;
}

ordered_json train_config_to_json(const TrainConfig& config) {
    ordered_json j;
    j["batch_size"] = config.batch_size;
    j["steps"] = config.steps;
    j["lr"] = double_to_hex(config.lr);
    j["seed"] = config.seed;
    j["noise_family"] = family_name(config.noise_family);
    j["label_drop_prob"] = double_to_hex(config.label_drop_prob);
    j["log_every"] = config.log_every;
    j["eval_every"] = config.eval_every;
    return j;
}

TrainConfig train_config_from_json(const ordered_json& j) {
    TrainConfig config;
    config.batch_size = j.at("batch_size").get<std::size_t>();
    config.steps = j.at("steps").get<std::size_t>();
    config.lr = double_from_hex(j.at("lr").get<std::string>());
    config.seed = j.at("seed").get<std::uint64_t>();
    config.noise_family = family_from_name(j.at("noise_family").get<std::string>());
    config.label_drop_prob = double_from_hex(j.at("label_drop_prob").get<std::string>());
    config.log_every = j.at("log_every").get<std::size_t>();
    config.eval_every = j.at("eval_every").get<std::size_t>();
    return config;
}

constexpr int kFormatVersion = 1;

}  // namespace

Checkpoint make_checkpoint(TrainState state, const TrainConfig& config) {
    Checkpoint checkpoint;
    checkpoint.config = config;
    checkpoint.created = provenance_timestamp();
    checkpoint.run_id = make_run_id(std::string(train_mode_name(state.mode)) + ":" +
                                    train_config_to_json(config).dump());
    checkpoint.state = std::move(state);
    return checkpoint;
}

ordered_json checkpoint_to_json(const Checkpoint& checkpoint) {
    const TrainState& state = checkpoint.state;
    ordered_json j;
    j["format_version"] = kFormatVersion;
    j["mode"] = train_mode_name(state.mode);
    j["provenance"] = {{"created", checkpoint.created}, {"run_id", checkpoint.run_id}};
    j["config_echo"] = train_config_to_json(checkpoint.config);
    j["step"] = state.step;
    j["model"] = model_to_json(state.model);
    j["noise_generator"] = state.gen.has_value() ? gen_to_json(*state.gen) : ordered_json(nullptr);
    j["adam"] = adam_to_json(state.adam);
    j["rng"] = rng_to_json(state.rng);
    return j;
}

Checkpoint checkpoint_from_json(const ordered_json& j) {
    const int version = j.at("format_version").get<int>();
    if (version > kFormatVersion) {
        throw ContractError("checkpoint format_version " + std::to_string(version) +
                            " is newer than the supported version " +
                            std::to_string(kFormatVersion));
    }
    Checkpoint checkpoint;
    TrainState& state = checkpoint.state;
    state.mode = train_mode_from_name(j.at("mode").get<std::string>());
    checkpoint.created = j.at("provenance").at("created").get<std::string>();
    checkpoint.run_id = j.at("provenance").at("run_id").get<std::string>();
    checkpoint.config = train_config_from_json(j.at("config_echo"));
    state.step = j.at("step").get<std::uint64_t>();
    state.model = model_from_json(j.at("model"));
    if (!j.at("noise_generator").is_null()) {
        state.gen = gen_from_json(j.at("noise_generator"));
    }
    state.adam = adam_from_json(j.at("adam"));
    state.rng = rng_from_json(j.at("rng"));
    if (state.adam.first_moment.size() != trainable_count(state)) {
        throw ContractError("checkpoint: optimizer state does not match trainable parameters");
    }
    return checkpoint;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot open checkpoint for writing: " + path.string());
    out << checkpoint_to_json(checkpoint).dump(2) << "\n";
    if (!out) throw MissingArtifactError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("checkpoint not found: " + path.string());
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw MissingArtifactError("corrupt checkpoint " + path.string() + ": " + e.what());
    }
    try {
        return checkpoint_from_json(j);
    } catch (const ordered_json::exception& e) {
        throw MissingArtifactError("corrupt checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace rnflow
