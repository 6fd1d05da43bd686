#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "rnflow/rng.hpp"
#include "rnflow/tensor.hpp"

namespace rnflow {

enum class Activation { kTanh, kSilu };

double activate(Activation act, double z);
double activate_grad(Activation act, double z);

struct LinearLayer {
    Tensor weight;  // out x in
    Tensor bias;    // out
    std::size_t in() const { return weight.cols(); }
    std::size_t out() const { return weight.rows(); }
};

/// Multilayer perceptron: a chain of plain layers followed by
/// `residual_blocks` trailing residual layers.
///
/// Plain layer k:     x <- W_k x + b_k, activated unless it is the final
///                    layer of the whole stack.
/// Residual layer k:  x <- x + act(W_k x + b_k), requires out == in.
///
/// An empty layer list is the identity map (used for a 0-block noise
/// generator, where heads read backbone features directly).
struct MlpParams {
    std::vector<LinearLayer> layers;
    Activation activation = Activation::kSilu;
    std::size_t residual_blocks = 0;

    std::size_t input_width() const;
    std::size_t output_width() const;
};

void validate(const MlpParams& params);

/// Per-call gradient tape: layer inputs and pre-activations of one forward
/// pass, plus a fingerprint of the parameter dimensions for mismatch checks.
struct MlpTape {
    std::vector<Tensor> inputs;
    std::vector<Tensor> preacts;
    std::vector<std::size_t> dims_fingerprint;
    std::vector<std::size_t> output_shape;
    std::size_t identity_width = 0;  // set for the 0-layer identity map
};

std::pair<Tensor, MlpTape> mlp_forward(const MlpParams& params, const Tensor& input);

/// Forward pass without recording a tape.
Tensor mlp_eval(const MlpParams& params, const Tensor& input);

/// Exact reverse-mode gradients of (grad_output . output) with respect to
/// every parameter and the input. The tape must come from a forward pass of
/// the same parameter object (same dimensions).
std::pair<MlpParams, Tensor> mlp_backward(const MlpParams& params, const MlpTape& tape,
                                          const Tensor& grad_output);

MlpParams zeros_like(const MlpParams& params);
void accumulate(MlpParams& into, const MlpParams& grads);

/// Xavier-normal initialization (std = sqrt(2 / (in + out))), zero biases.
/// `dims` lists layer widths including input, e.g. {66, 128, 128, 2}.
MlpParams mlp_init(const std::vector<std::size_t>& dims, Activation act, Rng& rng);

/// Stack of `count` residual layers of the given width.
MlpParams residual_stack_init(std::size_t width, std::size_t count, Activation act, Rng& rng);

/// Single linear layer as a one-layer MLP (no activation).
MlpParams linear_init(std::size_t in, std::size_t out, Rng& rng);
MlpParams linear_zeros(std::size_t in, std::size_t out);

// Flat parameter packing (layer order; per layer weight row-major then bias).
std::size_t param_count(const MlpParams& params);
void pack(const MlpParams& params, std::vector<double>& out);
void unpack(MlpParams& params, std::span<const double> flat, std::size_t& offset);

}  // namespace rnflow
