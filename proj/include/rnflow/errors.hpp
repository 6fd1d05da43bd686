#pragma once

#include <stdexcept>
#include <string>

namespace rnflow {

// Error taxonomy mirrored by the CLI exit codes (see tools/main.cpp):
// config/parse -> 2, numeric abort -> 3, missing artifact -> 4,
// contract violation -> 5.

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TapeError : std::runtime_error {
    explicit TapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SingularityError : NumericError {
    explicit SingularityError(const std::string& msg) : NumericError(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct MissingArtifactError : std::runtime_error {
    explicit MissingArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

// Label errors, sampler-kind/checkpoint mismatches, CFG on unconditional
// models and similar interface misuse.
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rnflow
