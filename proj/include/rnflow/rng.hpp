#pragma once

#include <cstdint>
#include <vector>

#include "rnflow/tensor.hpp"

namespace rnflow {

uint64_t mix64(uint64_t a, uint64_t b);
uint64_t mix64(uint64_t a, uint64_t b, uint64_t c);

/// Deterministic 64-bit random source.
///
/// Core generator: SplitMix64 (Steele, Lea & Flood 2014; the java.util
/// SplitMix64 sequence). State is a single 64-bit word advanced by the
/// golden-ratio increment and scrambled by the standard two-xor-shift
/// finalizer, so streams are identical on every platform.
///
/// Uniform doubles use the top 53 bits: u = (x >> 11) * 2^-53, in [0, 1).
/// Normal draws use the Marsaglia polar method; the spare value is cached
/// and is part of the serializable state.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64();
    double uniform();                    // [0, 1)
    double normal();                     // standard normal
    std::size_t uniform_index(std::size_t n);  // {0, ..., n-1}

    /// Independent child stream keyed by `key`. Forking does not advance
    /// this stream, so fork(k) is a pure function of (state, k).
    Rng fork(uint64_t key) const;

    Tensor sample_normal(std::vector<std::size_t> shape);
    Tensor sample_uniform(std::vector<std::size_t> shape);

    // Serializable state.
    uint64_t state() const { return state_; }
    bool has_spare() const { return has_spare_; }
    double spare() const { return spare_; }
    void restore(uint64_t state, bool has_spare, double spare);

    bool operator==(const Rng& other) const = default;

private:
    uint64_t state_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

Tensor sample_normal(Rng& rng, std::vector<std::size_t> shape);
Tensor sample_uniform(Rng& rng, std::vector<std::size_t> shape);

}  // namespace rnflow
