#include "rnflow/cli.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rnflow/csvio.hpp"
#include "rnflow/data_metrics.hpp"
#include "rnflow/errors.hpp"
#include "rnflow/infodiag.hpp"
#include "rnflow/sampling.hpp"
#include "rnflow/serialize.hpp"
#include "rnflow/svgplot.hpp"
#include "rnflow/training.hpp"

namespace rnflow {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Run configuration (one JSON document; flags override; unknown keys rejected)
// ---------------------------------------------------------------------------

struct DatasetSpec {
    DatasetKind kind = DatasetKind::kGaussianRing;
    std::size_t n = 5000;
    std::uint64_t seed = 1;
    DatasetParams params;
};

struct RunConfig {
    std::string output_dir = "runs";
    DatasetSpec dataset = {DatasetKind::kGaussianRing, 65536, 7, {}};
    ModelConfig model;
    TrainMode mode = TrainMode::kRf;
    std::size_t extra_blocks = 0;
    TrainConfig train;
    SamplerConfig sampler;
    std::size_t sample_n = 5000;
};

void check_keys(const ordered_json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError("unknown key \"" + item.key() + "\" in " + where);
    }
}

template <typename T>
void fetch(const ordered_json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_dataset_section(const ordered_json& j, DatasetSpec& spec) {
    check_keys(j, {"kind", "n", "seed", "components", "radius", "noise_std", "extent"},
               "dataset section");
    if (j.contains("kind")) spec.kind = dataset_kind_from_name(j.at("kind").get<std::string>());
    fetch(j, "n", spec.n);
    fetch(j, "seed", spec.seed);
    fetch(j, "components", spec.params.components);
    fetch(j, "radius", spec.params.radius);
    fetch(j, "noise_std", spec.params.noise_std);
    fetch(j, "extent", spec.params.extent);
}

void parse_model_section(const ordered_json& j, ModelConfig& model) {
    check_keys(j,
               {"data_dim", "hidden_width", "hidden_layers", "residual_blocks",
                "time_embed_width", "time_embed_base", "class_count", "activation"},
               "model section");
    fetch(j, "data_dim", model.data_dim);
    fetch(j, "hidden_width", model.hidden_width);
    fetch(j, "hidden_layers", model.hidden_layers);
    fetch(j, "residual_blocks", model.residual_blocks);
    fetch(j, "time_embed_width", model.time_embed_width);
    fetch(j, "time_embed_base", model.time_embed_base);
    fetch(j, "class_count", model.class_count);
    if (j.contains("activation")) {
        model.activation = activation_from_name(j.at("activation").get<std::string>());
    }
}

void parse_train_section(const ordered_json& j, RunConfig& config) {
    check_keys(j,
               {"mode", "batch_size", "steps", "lr", "seed", "noise_family", "label_drop_prob",
                "log_every", "eval_every", "extra_blocks"},
               "train section");
    if (j.contains("mode")) config.mode = train_mode_from_name(j.at("mode").get<std::string>());
    fetch(j, "batch_size", config.train.batch_size);
    fetch(j, "steps", config.train.steps);
    fetch(j, "lr", config.train.lr);
    fetch(j, "seed", config.train.seed);
    if (j.contains("noise_family")) {
        config.train.noise_family = family_from_name(j.at("noise_family").get<std::string>());
    }
    fetch(j, "label_drop_prob", config.train.label_drop_prob);
    fetch(j, "log_every", config.train.log_every);
    fetch(j, "eval_every", config.train.eval_every);
    fetch(j, "extra_blocks", config.extra_blocks);
}

void parse_sampler_section(const ordered_json& j, RunConfig& config) {
    check_keys(j,
               {"kind", "steps", "t_min", "t_max", "w_schedule", "w_scale", "cfg_scale", "seed",
                "n"},
               "sampler section");
    SamplerConfig& s = config.sampler;
    if (j.contains("kind")) s.kind = sampler_kind_from_name(j.at("kind").get<std::string>());
    fetch(j, "steps", s.steps);
    fetch(j, "t_min", s.window.t_min);
    fetch(j, "t_max", s.window.t_max);
    if (j.contains("w_schedule")) {
        s.w.kind = w_schedule_from_name(j.at("w_schedule").get<std::string>());
    }
    fetch(j, "w_scale", s.w.c);
    if (j.contains("cfg_scale") && !j.at("cfg_scale").is_null()) {
        s.cfg_scale = j.at("cfg_scale").get<double>();
    }
    fetch(j, "seed", s.seed);
    fetch(j, "n", config.sample_n);
}

RunConfig parse_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("config file not found: " + path.string());
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    RunConfig config;
    try {
        check_keys(j, {"output_dir", "dataset", "model", "train", "sampler"}, "config root");
        fetch(j, "output_dir", config.output_dir);
        if (j.contains("dataset")) parse_dataset_section(j.at("dataset"), config.dataset);
        if (j.contains("model")) parse_model_section(j.at("model"), config.model);
        if (j.contains("train")) parse_train_section(j.at("train"), config);
        if (j.contains("sampler")) parse_sampler_section(j.at("sampler"), config);
    } catch (const ordered_json::exception& e) {
        throw ConfigError("config field error in " + path.string() + ": " + e.what());
    }
    validate(config.train);
    validate(config.sampler);
    return config;
}

// Dataset argument: either a CSV path or a spec "kind:key=val,..." with keys
// n, seed, components, radius, noise_std, extent.
bool looks_like_spec(const std::string& text) {
    const std::string kind = text.substr(0, text.find(':'));
    try {
        dataset_kind_from_name(kind);
        return true;
    } catch (const ConfigError&) {
        return false;
    }
}

DatasetSpec parse_dataset_spec(const std::string& text) {
    DatasetSpec spec;
    const auto colon = text.find(':');
    spec.kind = dataset_kind_from_name(text.substr(0, colon));
    if (colon == std::string::npos) return spec;
    std::string rest = text.substr(colon + 1);
    std::size_t pos = 0;
    while (pos < rest.size()) {
        auto comma = rest.find(',', pos);
        if (comma == std::string::npos) comma = rest.size();
        const std::string pair = rest.substr(pos, comma - pos);
        const auto eq = pair.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("dataset spec: expected key=value, got \"" + pair + "\"");
        }
        const std::string key = pair.substr(0, eq);
        const std::string value = pair.substr(eq + 1);
        try {
            std::size_t used = 0;
            if (key == "n") {
                spec.n = std::stoull(value, &used);
            } else if (key == "seed") {
                spec.seed = std::stoull(value, &used);
            } else if (key == "components") {
                spec.params.components = std::stoull(value, &used);
            } else if (key == "radius") {
                spec.params.radius = std::stod(value, &used);
            } else if (key == "noise_std") {
                spec.params.noise_std = std::stod(value, &used);
            } else if (key == "extent") {
                spec.params.extent = std::stod(value, &used);
            } else {
                throw ConfigError("dataset spec: unknown key \"" + key + "\"");
            }
            if (used != value.size()) throw std::invalid_argument("trailing characters");
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("dataset spec: bad value for \"" + key + "\": \"" + value + "\"");
        }
        pos = comma + 1;
    }
    return spec;
}

Dataset make_from_spec(const DatasetSpec& spec) {
    return make_dataset(spec.kind, spec.n, spec.seed, spec.params);
}

// Reference points for eval/entropy: a samples CSV path, or a dataset spec.
Tensor load_reference(const std::string& arg) {
    if (looks_like_spec(arg)) return make_from_spec(parse_dataset_spec(arg)).points;
    if (!fs::exists(arg)) {
        throw MissingArtifactError("reference not found (neither a file nor a dataset spec): " +
                                   arg);
    }
    return read_samples_csv(arg).points;
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw MissingArtifactError("failed writing: " + path.string());
}

// Cyclic labels 0..class_count-1 for conditional sampling without a target.
std::vector<std::size_t> cyclic_labels(std::size_t n, std::size_t class_count) {
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = i % class_count;
    return labels;
}

// Indicative fidelity metric logged during training: a small ODE generation
// against a held-out slice, cheap enough to run every eval_every steps. Runs
// with the generator attached when one exists, so a zero-initialized
// generator's step-0 eval matches the plain model's eval exactly.
constexpr std::uint64_t kEvalSeed = 0x45564131;

EvalFn make_eval_fn(const DatasetSpec& data_spec, const ModelConfig& model_config) {
    DatasetSpec holdout_spec = data_spec;
    holdout_spec.n = 512;
    holdout_spec.seed = data_spec.seed + 1000003;
    Dataset holdout = make_from_spec(holdout_spec);
    const std::size_t class_count = model_config.class_count;
    return [holdout = std::move(holdout), class_count](const TrainState& state) {
        SamplerConfig sampler;
        sampler.kind = state.gen.has_value() ? SamplerKind::kDeltaRnOde : SamplerKind::kOde;
        sampler.steps = 32;
        sampler.seed = kEvalSeed;
        std::vector<std::size_t> labels;
        if (class_count > 0) labels = cyclic_labels(256, class_count);
        GenerateResult result = generate(state.model, state.gen.has_value() ? &*state.gen : nullptr,
                                         sampler, 256, labels);
        return sliced_w2(result.samples, holdout.points, 32, kEvalSeed).value;
    };
}

Dataset training_dataset(const RunConfig& config) {
    Dataset data = make_from_spec(config.dataset);
    if (config.model.class_count > 0) {
        if (!data.labeled()) {
            throw ConfigError("conditional model (class_count > 0) requires a labeled dataset");
        }
        if (data.label_count() != config.model.class_count) {
            throw ConfigError("model class_count does not match the dataset's label count");
        }
    }
    return data;
}

struct RunPaths {
    fs::path dir;
    fs::path checkpoint;
    fs::path log;
};

RunPaths prepare_run_dir(const std::string& output_dir, const std::string& run_id) {
    RunPaths paths;
    paths.dir = fs::path(output_dir) / run_id;
    fs::create_directories(paths.dir);
    paths.checkpoint = paths.dir / "checkpoint.json";
    paths.log = paths.dir / "train_log.csv";
    return paths;
}

void report_run(const RunPaths& paths, const Checkpoint& checkpoint, const TrainLog& log) {
    std::cout << "run_id " << checkpoint.run_id << "\n";
    std::cout << "checkpoint " << paths.checkpoint.string() << "\n";
    std::cout << "log " << paths.log.string() << "\n";
    if (!log.entries.empty()) {
        std::cout << "final_loss " << format_double(log.entries.back().loss) << "\n";
        if (log.entries.back().eval_metric.has_value()) {
            std::cout << "final_eval " << format_double(*log.entries.back().eval_metric) << "\n";
        }
    }
}

// ---------------------------------------------------------------------------
// Subcommand options and implementations
// ---------------------------------------------------------------------------

struct TrainOpts {
    std::string config_path;
    std::string resume_path;
    std::string mode;
    std::string out_dir;
    std::optional<std::size_t> steps;
    std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainOpts& opts) {
    RunConfig config = parse_run_config(opts.config_path);
    if (!opts.mode.empty()) config.mode = train_mode_from_name(opts.mode);
    if (!opts.out_dir.empty()) config.output_dir = opts.out_dir;
    if (config.mode == TrainMode::kFinetune) {
        throw ConfigError("mode finetune is driven by the finetune subcommand");
    }

    TrainState state;
    if (!opts.resume_path.empty()) {
        Checkpoint prior = load_checkpoint(opts.resume_path);
        if (prior.state.mode != config.mode) {
            throw ContractError("resume checkpoint mode " +
                                std::string(train_mode_name(prior.state.mode)) +
                                " does not match requested mode " + train_mode_name(config.mode));
        }
        state = std::move(prior.state);
        config.train = prior.config;
    }
    if (opts.steps.has_value()) config.train.steps = *opts.steps;
    if (opts.seed.has_value()) config.train.seed = *opts.seed;
    validate(config.train);

    Dataset data = training_dataset(config);
    if (opts.resume_path.empty()) {
        state = train_init(config.mode, config.model, config.train, config.extra_blocks);
    }

    EvalFn eval_fn = make_eval_fn(config.dataset, config.model);
    TrainLog log = train_loop(state, data, config.train, eval_fn);

    Checkpoint checkpoint = make_checkpoint(std::move(state), config.train);
    RunPaths paths = prepare_run_dir(config.output_dir, checkpoint.run_id);
    save_checkpoint(paths.checkpoint, checkpoint);
    write_train_log_csv(paths.log, log);
    report_run(paths, checkpoint, log);
    return 0;
}

struct FinetuneOpts {
    std::string config_path;
    std::string from_path;
    std::string family;
    std::string out_dir;
    std::optional<std::size_t> extra_blocks;
    std::optional<std::size_t> steps;
    std::optional<std::uint64_t> seed;
};

int cmd_finetune(const FinetuneOpts& opts) {
    RunConfig config = parse_run_config(opts.config_path);
    if (!opts.out_dir.empty()) config.output_dir = opts.out_dir;
    if (opts.steps.has_value()) config.train.steps = *opts.steps;
    if (opts.seed.has_value()) config.train.seed = *opts.seed;
    if (!opts.family.empty()) config.train.noise_family = family_from_name(opts.family);
    if (opts.extra_blocks.has_value()) config.extra_blocks = *opts.extra_blocks;
    validate(config.train);

    Checkpoint prior = load_checkpoint(opts.from_path);
    if (prior.state.mode != TrainMode::kRf) {
        throw ContractError("finetune expects an rf checkpoint; got mode " +
                            std::string(train_mode_name(prior.state.mode)));
    }

    Dataset data = training_dataset(config);
    TrainState state = finetune_init(prior.state.model, config.train, config.extra_blocks);

    const std::size_t backbone = model_param_count(state.model);
    const std::size_t added = gen_param_count(*state.gen);
    char comment[256];
    std::snprintf(comment, sizeof(comment),
                  "family=%s extra_blocks=%zu backbone_params=%zu added_params=%zu "
                  "added_param_ratio=%s",
                  family_name(state.gen->family), config.extra_blocks, backbone, added,
                  format_double(static_cast<double>(added) / static_cast<double>(backbone))
                      .c_str());

    EvalFn eval_fn = make_eval_fn(config.dataset, config.model);
    TrainLog log = train_loop(state, data, config.train, eval_fn);

    Checkpoint checkpoint = make_checkpoint(std::move(state), config.train);
    RunPaths paths = prepare_run_dir(config.output_dir, checkpoint.run_id);
    save_checkpoint(paths.checkpoint, checkpoint);
    write_train_log_csv(paths.log, log, comment);
    std::cout << comment << "\n";
    report_run(paths, checkpoint, log);
    return 0;
}

struct SampleOpts {
    std::string from_path;
    std::string config_path;
    std::string kind;
    std::string w_schedule;
    std::string out_dir = ".";
    std::optional<std::size_t> n;
    std::optional<std::size_t> steps;
    std::optional<std::uint64_t> seed;
    std::optional<double> w_scale;
    std::optional<double> t_min;
    std::optional<double> t_max;
    std::optional<double> cfg;
    std::optional<std::size_t> label;
    bool trajectories = false;
    bool ledger = false;
};

std::string sample_stem(const SamplerConfig& sampler, const std::optional<std::size_t>& label) {
    std::string stem = std::string(sampler_kind_name(sampler.kind)) + "_s" +
                       std::to_string(sampler.seed);
    if (label.has_value()) stem += "_l" + std::to_string(*label);
    if (sampler.cfg_scale.has_value()) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%g", *sampler.cfg_scale);
        stem += std::string("_cfg") + buf;
    }
    return stem;
}

int cmd_sample(const SampleOpts& opts) {
    SamplerConfig sampler;
    std::size_t n = 5000;
    if (!opts.config_path.empty()) {
        RunConfig config = parse_run_config(opts.config_path);
        sampler = config.sampler;
        n = config.sample_n;
    }
    if (!opts.kind.empty()) sampler.kind = sampler_kind_from_name(opts.kind);
    if (!opts.w_schedule.empty()) sampler.w.kind = w_schedule_from_name(opts.w_schedule);
    if (opts.steps.has_value()) sampler.steps = *opts.steps;
    if (opts.seed.has_value()) sampler.seed = *opts.seed;
    if (opts.w_scale.has_value()) sampler.w.c = *opts.w_scale;
    if (opts.t_min.has_value()) sampler.window.t_min = *opts.t_min;
    if (opts.t_max.has_value()) sampler.window.t_max = *opts.t_max;
    if (opts.cfg.has_value()) sampler.cfg_scale = *opts.cfg;
    if (opts.n.has_value()) n = *opts.n;
    validate(sampler);

    Checkpoint checkpoint = load_checkpoint(opts.from_path);
    const VelocityModel& model = checkpoint.state.model;

    if (is_delta_rn(sampler.kind) && !checkpoint.state.gen.has_value()) {
        throw ContractError(std::string(sampler_kind_name(sampler.kind)) +
                            " sampling needs a noise generator; this checkpoint has none "
                            "(train with mode joint, or finetune first)");
    }
    if (opts.label.has_value() && !model.conditional()) {
        throw ContractError("--label given, but the checkpoint's model is unconditional");
    }
    if (sampler.cfg_scale.has_value() && !model.conditional()) {
        throw ContractError("--cfg given, but the checkpoint's model is unconditional");
    }
    if (opts.label.has_value() && *opts.label >= model.class_count) {
        throw ContractError("--label out of range: model has " +
                            std::to_string(model.class_count) + " classes");
    }
    if (opts.ledger && !is_delta_rn(sampler.kind)) {
        throw ContractError("--ledger records injected noise; use a delta_rn sampler kind");
    }

    std::vector<std::size_t> labels;
    if (model.conditional()) {
        labels = opts.label.has_value() ? std::vector<std::size_t>(n, *opts.label)
                                        : cyclic_labels(n, model.class_count);
    }

    const NoiseGenerator* gen =
        is_delta_rn(sampler.kind) ? &*checkpoint.state.gen : nullptr;
    const bool record = opts.trajectories || opts.ledger;
    GenerateResult result = generate(model, gen, sampler, n, labels, record);

    fs::create_directories(opts.out_dir);
    const std::string stem = sample_stem(sampler, opts.label);
    const fs::path samples_path = fs::path(opts.out_dir) / ("samples_" + stem + ".csv");
    write_samples_csv(samples_path, result.samples, labels.empty() ? nullptr : &labels);
    std::cout << "samples " << samples_path.string() << "\n";

    if (opts.trajectories) {
        const fs::path traj_path = fs::path(opts.out_dir) / ("trajectories_" + stem + ".csv");
        write_trajectories_csv(traj_path, result.trajectories);
        std::cout << "trajectories " << traj_path.string() << "\n";
    }
    if (opts.ledger) {
        const fs::path ledger_path = fs::path(opts.out_dir) / ("ledger_" + stem + ".csv");
        write_ledger_csv(ledger_path, result.trajectories);
        std::cout << "ledger " << ledger_path.string() << "\n";
    }
    return 0;
}

struct EvalOpts {
    std::string gen_path;
    std::string ref_arg;
    std::string from_path;
    std::string out_path = "metrics.csv";
    std::size_t n_proj = 128;
    std::uint64_t seed = 0;
    bool compare = false;
    std::optional<std::size_t> n;
    std::optional<std::size_t> steps;
};

int cmd_eval(const EvalOpts& opts) {
    if (opts.ref_arg.empty()) throw ConfigError("eval requires --ref");
    Tensor ref = load_reference(opts.ref_arg);
    std::vector<MetricResult> results;

    if (!opts.compare) {
        if (opts.gen_path.empty()) throw ConfigError("eval requires --gen (or --compare)");
        Tensor gen_points = read_samples_csv(opts.gen_path).points;
        if (gen_points.numel() > 0 && ref.numel() > 0 && gen_points.cols() != ref.cols()) {
            throw ContractError("dimension mismatch: generated d=" +
                                std::to_string(gen_points.cols()) + ", reference d=" +
                                std::to_string(ref.cols()));
        }
        results.push_back(sliced_w2(gen_points, ref, opts.n_proj, opts.seed));
        results.push_back(energy_distance(gen_points, ref));
    } else {
        if (opts.from_path.empty()) throw ConfigError("eval --compare requires --from");
        Checkpoint checkpoint = load_checkpoint(opts.from_path);
        const VelocityModel& model = checkpoint.state.model;
        if (!checkpoint.state.gen.has_value()) {
            throw ContractError(
                "eval --compare needs a checkpoint with a noise generator for the "
                "delta_rn_sde column");
        }
        const std::size_t n = opts.n.value_or(5000);
        std::vector<std::size_t> labels;
        if (model.conditional()) labels = cyclic_labels(n, model.class_count);
        for (SamplerKind kind :
             {SamplerKind::kOde, SamplerKind::kSde, SamplerKind::kDeltaRnSde}) {
            SamplerConfig sampler;
            sampler.kind = kind;
            sampler.steps = opts.steps.value_or(100);
            sampler.seed = opts.seed;
            const NoiseGenerator* gen =
                is_delta_rn(kind) ? &*checkpoint.state.gen : nullptr;
            GenerateResult result = generate(model, gen, sampler, n, labels);
            MetricResult w2 = sliced_w2(result.samples, ref, opts.n_proj, opts.seed);
            w2.name = std::string(sampler_kind_name(kind)) + "_" + w2.name;
            MetricResult ed = energy_distance(result.samples, ref);
            ed.name = std::string(sampler_kind_name(kind)) + "_" + ed.name;
            results.push_back(std::move(w2));
            results.push_back(std::move(ed));
        }
    }

    const bool append = fs::exists(opts.out_path);
    write_metrics_csv(opts.out_path, results, append);
    for (const MetricResult& r : results) {
        std::cout << r.name << " " << format_double(r.value) << "\n";
    }
    return 0;
}

struct EntropyOpts {
    std::string from_path;
    std::string data_spec = "gaussian_ring:n=5000,seed=1";
    std::size_t n = 4096;
    std::size_t m = 16;
    std::uint64_t seed = 0;
    bool per_dim = false;
};

int cmd_entropy(const EntropyOpts& opts) {
    Checkpoint checkpoint = load_checkpoint(opts.from_path);
    const VelocityModel& model = checkpoint.state.model;
    Dataset data;
    if (looks_like_spec(opts.data_spec)) {
        data = make_from_spec(parse_dataset_spec(opts.data_spec));
    } else {
        if (!fs::exists(opts.data_spec)) {
            throw MissingArtifactError(
                "data not found (neither a file nor a dataset spec): " + opts.data_spec);
        }
        SamplesCsv csv = read_samples_csv(opts.data_spec);
        data.points = std::move(csv.points);
        data.labels = std::move(csv.labels);
    }
    if (data.dim() != model.data_dim) {
        throw ContractError("dataset dimension " + std::to_string(data.dim()) +
                            " does not match model data_dim " +
                            std::to_string(model.data_dim));
    }

    // A checkpoint without a generator gets a degenerate stand-in (zero
    // location, zero gate), under which conditional and task entropies agree
    // draw for draw and the gain is exactly zero.
    NoiseGenerator gen;
    if (checkpoint.state.gen.has_value()) {
        gen = *checkpoint.state.gen;
    } else {
        Rng init(0);
        gen = noise_init(checkpoint.config.noise_family, 0, model.feature_width(),
                         model.data_dim, model.trunk.activation, init);
    }

    Rng rng(opts.seed);
    EntropyReport report = mi_gain(model, gen, data, opts.n, opts.m, rng, opts.per_dim);

    ordered_json j;
    j["task_entropy"] = report.task_entropy;
    j["conditional_entropy"] = report.conditional_entropy;
    j["mi_gain"] = report.mi_gain;
    j["sample_count"] = report.sample_count;
    j["std_error"] = report.std_error;
    std::cout << j.dump(2) << "\n";
    return 0;
}

struct PlotOpts {
    std::string samples_path;
    std::string ref_path;
    std::string ledger_path;
    std::string out_dir = ".";
};

int cmd_plot(const PlotOpts& opts) {
    fs::create_directories(opts.out_dir);

    // Line charts first: they stay valid even when the scatter below rejects
    // a non-2-D sample file.
    if (!opts.ledger_path.empty()) {
        LedgerCsv ledger = read_ledger_csv(opts.ledger_path);
        std::size_t n_steps = 0;
        for (std::size_t s : ledger.steps) n_steps = std::max(n_steps, s + 1);
        std::vector<double> per_step(n_steps, 0.0);
        std::vector<double> cumulative(n_steps, 0.0);
        std::vector<std::size_t> counts(n_steps, 0);
        for (std::size_t row = 0; row < ledger.steps.size(); ++row) {
            const std::size_t s = ledger.steps[row];
            double z2 = 0.0;
            double c2 = 0.0;
            for (std::size_t k = 0; k < ledger.dim; ++k) {
                z2 += ledger.per_step[row][k] * ledger.per_step[row][k];
                c2 += ledger.cumulative[row][k] * ledger.cumulative[row][k];
            }
            per_step[s] += std::sqrt(z2);
            cumulative[s] += std::sqrt(c2);
            counts[s] += 1;
        }
        for (std::size_t s = 0; s < n_steps; ++s) {
            if (counts[s] > 0) {
                per_step[s] /= static_cast<double>(counts[s]);
                cumulative[s] /= static_cast<double>(counts[s]);
            }
        }
        const fs::path out = fs::path(opts.out_dir) / "ledger.svg";
        write_text_file(out, ledger_chart_svg(per_step, cumulative));
        std::cout << "ledger_svg " << out.string() << "\n";
    }

    SamplesCsv samples = read_samples_csv(opts.samples_path);
    if (samples.points.numel() > 0 && samples.points.cols() != 2) {
        throw ContractError("scatter plots need 2-D samples; file has d=" +
                            std::to_string(samples.points.cols()));
    }
    std::optional<SamplesCsv> ref;
    if (!opts.ref_path.empty()) {
        ref = read_samples_csv(opts.ref_path);
        if (ref->points.numel() > 0 && ref->points.cols() != 2) {
            throw ContractError("scatter plots need 2-D reference points; file has d=" +
                                std::to_string(ref->points.cols()));
        }
    }
    const fs::path out = fs::path(opts.out_dir) / "scatter.svg";
    write_text_file(out, scatter_svg(samples.points, ref ? &ref->points : nullptr));
    std::cout << "scatter_svg " << out.string() << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"rnflow: rectified-flow training, learned-noise finetuning, sampling, and "
                 "diagnostics on 2-D toy distributions"};
    app.require_subcommand(1);

    TrainOpts train_opts;
    auto* train = app.add_subcommand("train", "Train a velocity model (mode rf or joint)");
    train->add_option("--config", train_opts.config_path, "Run config JSON")->required();
    train->add_option("--resume", train_opts.resume_path,
                      "Continue training from this checkpoint");
    train->add_option("--mode", train_opts.mode, "Override train.mode (rf|joint)");
    train->add_option("--out", train_opts.out_dir, "Override output_dir");
    train->add_option("--steps", train_opts.steps, "Override train.steps");
    train->add_option("--seed", train_opts.seed, "Override train.seed");

    FinetuneOpts finetune_opts;
    auto* finetune = app.add_subcommand(
        "finetune", "Train a noise generator on a frozen pre-trained rf backbone");
    finetune->add_option("--config", finetune_opts.config_path, "Run config JSON")->required();
    finetune->add_option("--from", finetune_opts.from_path, "Pre-trained rf checkpoint")
        ->required();
    finetune->add_option("--family", finetune_opts.family,
                         "Noise family (gaussian|gumbel|uniform)");
    finetune->add_option("--extra-blocks", finetune_opts.extra_blocks,
                         "Residual blocks in the generator trunk");
    finetune->add_option("--out", finetune_opts.out_dir, "Override output_dir");
    finetune->add_option("--steps", finetune_opts.steps, "Override train.steps");
    finetune->add_option("--seed", finetune_opts.seed, "Override train.seed");

    SampleOpts sample_opts;
    auto* sample = app.add_subcommand("sample", "Draw samples from a checkpoint");
    sample->add_option("--from", sample_opts.from_path, "Checkpoint JSON")->required();
    sample->add_option("--config", sample_opts.config_path,
                       "Run config JSON providing sampler defaults");
    sample->add_option("--kind", sample_opts.kind,
                       "Sampler kind (ode|sde|delta_rn_ode|delta_rn_sde)");
    sample->add_option("-n,--n", sample_opts.n, "Sample count");
    sample->add_option("--steps", sample_opts.steps, "Integration steps");
    sample->add_option("--seed", sample_opts.seed, "Sampler seed");
    sample->add_option("--w-schedule", sample_opts.w_schedule,
                       "Diffusion schedule (constant|one_minus_t|t_one_minus_t)");
    sample->add_option("--w-scale", sample_opts.w_scale, "Diffusion scale c");
    sample->add_option("--t-min", sample_opts.t_min, "Integration start time");
    sample->add_option("--t-max", sample_opts.t_max, "Integration end time");
    sample->add_option("--cfg", sample_opts.cfg, "Classifier-free guidance scale");
    sample->add_option("--label", sample_opts.label, "Condition every sample on this class");
    sample->add_option("--out-dir", sample_opts.out_dir, "Output directory");
    sample->add_flag("--trajectories", sample_opts.trajectories, "Also write trajectory CSV");
    sample->add_flag("--ledger", sample_opts.ledger,
                     "Also write the injected-noise ledger CSV (delta_rn kinds)");

    EvalOpts eval_opts;
    auto* eval = app.add_subcommand("eval", "Two-sample metrics against a reference");
    eval->add_option("--gen", eval_opts.gen_path, "Generated samples CSV");
    eval->add_option("--ref", eval_opts.ref_arg, "Reference: samples CSV or dataset spec")
        ->required();
    eval->add_option("--from", eval_opts.from_path, "Checkpoint for --compare");
    eval->add_option("--out", eval_opts.out_path, "Metrics CSV (appends when it exists)");
    eval->add_option("--n-proj", eval_opts.n_proj, "Sliced-W2 projection count");
    eval->add_option("--seed", eval_opts.seed, "Metric / sampling seed");
    eval->add_flag("--compare", eval_opts.compare,
                   "Generate and score ode vs sde vs delta_rn_sde from --from");
    eval->add_option("-n,--n", eval_opts.n, "Samples per kind in --compare mode");
    eval->add_option("--steps", eval_opts.steps, "Integration steps in --compare mode");

    EntropyOpts entropy_opts;
    auto* entropy = app.add_subcommand("entropy", "Information diagnostics as JSON on stdout");
    entropy->add_option("--from", entropy_opts.from_path, "Checkpoint JSON")->required();
    entropy->add_option("--data", entropy_opts.data_spec, "Dataset spec or CSV for tuples");
    entropy->add_option("-n,--n", entropy_opts.n, "Monte-Carlo tuple count");
    entropy->add_option("-m,--m", entropy_opts.m, "Noise draws per tuple");
    entropy->add_option("--seed", entropy_opts.seed, "Estimator seed");
    entropy->add_flag("--per-dim", entropy_opts.per_dim, "Average the loss over dimensions");

    PlotOpts plot_opts;
    auto* plot = app.add_subcommand("plot", "Static SVG plots from CSV artifacts");
    plot->add_option("--samples", plot_opts.samples_path, "Samples CSV for the scatter")
        ->required();
    plot->add_option("--ref", plot_opts.ref_path, "Reference samples CSV overlay");
    plot->add_option("--ledger", plot_opts.ledger_path, "Noise ledger CSV for line charts");
    plot->add_option("--out-dir", plot_opts.out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (train->parsed()) return cmd_train(train_opts);
        if (finetune->parsed()) return cmd_finetune(finetune_opts);
        if (sample->parsed()) return cmd_sample(sample_opts);
        if (eval->parsed()) return cmd_eval(eval_opts);
        if (entropy->parsed()) return cmd_entropy(entropy_opts);
        if (plot->parsed()) return cmd_plot(plot_opts);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const MissingArtifactError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const TapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace rnflow
