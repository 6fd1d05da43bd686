#include "rnflow/rng.hpp"

#include <cmath>

namespace rnflow {

namespace {

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;

uint64_t scramble(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

uint64_t mix64(uint64_t a, uint64_t b) { return scramble(a + kGolden * (b + 1)); }

uint64_t mix64(uint64_t a, uint64_t b, uint64_t c) { return mix64(mix64(a, b), c); }

uint64_t Rng::next_u64() {
    state_ += kGolden;
    return scramble(state_);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
}

std::size_t Rng::uniform_index(std::size_t n) {
    // Multiply-shift mapping of a full 64-bit draw onto {0,...,n-1}.
    // Bias is O(n / 2^64), negligible at the sizes used here.
    return static_cast<std::size_t>(
        (static_cast<__uint128_t>(next_u64()) * static_cast<__uint128_t>(n)) >> 64);
}

Rng Rng::fork(uint64_t key) const { return Rng(mix64(state_, key)); }

void Rng::restore(uint64_t state, bool has_spare, double spare) {
    state_ = state;
    has_spare_ = has_spare;
    spare_ = spare;
}

Tensor Rng::sample_normal(std::vector<std::size_t> shape) {
    Tensor out = Tensor::zeros(std::move(shape));
    for (double& x : out.data) x = normal();
    return out;
}

Tensor Rng::sample_uniform(std::vector<std::size_t> shape) {
    Tensor out = Tensor::zeros(std::move(shape));
    for (double& x : out.data) x = uniform();
    return out;
}

Tensor sample_normal(Rng& rng, std::vector<std::size_t> shape) {
    return rng.sample_normal(std::move(shape));
}

Tensor sample_uniform(Rng& rng, std::vector<std::size_t> shape) {
    return rng.sample_uniform(std::move(shape));
}

}  // namespace rnflow
