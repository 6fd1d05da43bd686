#pragma once

#include <filesystem>
#include <string>
#include <utility>

#include "json.hpp"
#include "rnflow/training.hpp"

namespace rnflow {

/// Exact 64-bit float <-> text via C hexfloat rendering ("%a"); round-trips
/// are bit-identical on every platform.
std::string double_to_hex(double v);
double double_from_hex(const std::string& s);

const char* activation_name(Activation act);
Activation activation_from_name(std::string_view name);

/// Deterministic run identifier: a 16-hex-digit hash of the canonical config
/// rendering. Independent of wall time.
std::string make_run_id(const std::string& canonical_config);

/// ISO-8601 UTC creation stamp; SOURCE_DATE_EPOCH pins it when set.
std::string provenance_timestamp();

/// A complete serialized training run. Provenance travels with the file, so
/// save -> load -> save is byte-identical.
struct Checkpoint {
    TrainState state;
    TrainConfig config;
    std::string created;
    std::string run_id;
};

/// Stamp a fresh checkpoint: created from provenance_timestamp(), run_id from
/// the canonical (mode, config) rendering.
Checkpoint make_checkpoint(TrainState state, const TrainConfig& config);

nlohmann::ordered_json checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::ordered_json& j);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rnflow
