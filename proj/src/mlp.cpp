#include "rnflow/mlp.hpp"

#include <cmath>
#include <cstdio>
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

Tensor as_matrix(const Tensor& t) {
    if (t.rank() == 1) {
        Tensor m = t;
        m.shape = {1, t.shape[0]};
        return m;
    }
    if (t.rank() == 2) return t;
    throw ShapeError("mlp: input must be rank 1 or 2, got rank " + std::to_string(t.rank()));
}

// y = x W^T + b, x: N x in, W: out x in, y: N x out
Tensor affine(const Tensor& x, const LinearLayer& layer) {
    Tensor y = matmul_nt(x, layer.weight);
    const std::size_t n = y.rows(), out = y.cols();
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < out; ++c) {
            y.data[r * out + c] += layer.bias.data[c];
        }
    }
    return y;
}

Tensor apply_activation(Activation act, const Tensor& z) {
    Tensor y = z;
    for (double& v : y.data) v = activate(act, v);
    return y;
}

// dZ = dY .* act'(Z)
Tensor chain_activation(Activation act, const Tensor& z, const Tensor& dy) {
    Tensor dz = dy;
    for (std::size_t i = 0; i < dz.data.size(); ++i) {
        dz.data[i] *= activate_grad(act, z.data[i]);
    }
    return dz;
}

Tensor column_sums(const Tensor& m) {
    Tensor s = Tensor::zeros({m.cols()});
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            s.data[c] += m.data[r * m.cols() + c];
        }
    }
    return s;
}

std::vector<std::size_t> dims_of(const MlpParams& params) {
    std::vector<std::size_t> dims;
    dims.reserve(params.layers.size() * 2 + 1);
    dims.push_back(params.residual_blocks);
    for (const LinearLayer& layer : params.layers) {
        dims.push_back(layer.in());
        dims.push_back(layer.out());
    }
    return dims;
}

}  // namespace

double activate(Activation act, double z) {
    switch (act) {
        case Activation::kTanh:
            return std::tanh(z);
        case Activation::kSilu:
            return z * sigmoid(z);
    }
    throw ConfigError("unknown activation");
}

double activate_grad(Activation act, double z) {
    switch (act) {
        case Activation::kTanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::kSilu: {
            const double s = sigmoid(z);
            return s * (1.0 + z * (1.0 - s));
        }
    }
    throw ConfigError("unknown activation");
}

std::size_t MlpParams::input_width() const {
    if (layers.empty()) return 0;  // identity map, any width
    return layers.front().in();
}

std::size_t MlpParams::output_width() const {
    if (layers.empty()) return 0;
    return layers.back().out();
}

void validate(const MlpParams& params) {
    const std::size_t n = params.layers.size();
    if (params.residual_blocks > n) {
        throw ShapeError("mlp: residual_blocks exceeds layer count");
    }
    for (std::size_t k = 0; k < n; ++k) {
        const LinearLayer& layer = params.layers[k];
        if (layer.weight.rank() != 2 || layer.bias.rank() != 1) {
            throw ShapeError("mlp: layer " + std::to_string(k) + " has malformed tensors");
        }
        if (layer.bias.shape[0] != layer.out()) {
            throw ShapeError("mlp: layer " + std::to_string(k) + " bias width mismatch");
        }
        if (k > 0 && layer.in() != params.layers[k - 1].out()) {
            throw ShapeError("mlp: layer " + std::to_string(k) + " input width mismatch");
        }
        if (k >= n - params.residual_blocks && layer.in() != layer.out()) {
            throw ShapeError("mlp: residual layer " + std::to_string(k) + " must be square");
        }
    }
}

std::pair<Tensor, MlpTape> mlp_forward(const MlpParams& params, const Tensor& input) {
    const Tensor x0 = as_matrix(input);
    const std::size_t n = params.layers.size();
    const std::size_t n_plain = n - params.residual_blocks;

    MlpTape tape;
    tape.dims_fingerprint = dims_of(params);
    tape.inputs.reserve(n);
    tape.preacts.reserve(n);

    if (n == 0) {
        tape.identity_width = x0.cols();
        tape.output_shape = input.shape;
        Tensor out = input;
        require_finite(out, "mlp_forward");
        return {std::move(out), std::move(tape)};
    }

    if (x0.cols() != params.layers.front().in()) {
        throw ShapeError("mlp_forward: input width " + std::to_string(x0.cols()) +
                         " does not match first layer width " +
                         std::to_string(params.layers.front().in()));
    }

    Tensor x = x0;
    for (std::size_t k = 0; k < n; ++k) {
        tape.inputs.push_back(x);
        Tensor z = affine(x, params.layers[k]);
        tape.preacts.push_back(z);
        if (k < n_plain) {
            x = (k == n - 1) ? std::move(z) : apply_activation(params.activation, z);
        } else {
            Tensor h = apply_activation(params.activation, z);
            x = add(x, h);
        }
    }

    if (input.rank() == 1) x.shape = {x.cols()};
    tape.output_shape = x.shape;
    require_finite(x, "mlp_forward");
    return {std::move(x), std::move(tape)};
}

Tensor mlp_eval(const MlpParams& params, const Tensor& input) {
    return mlp_forward(params, input).first;
}

std::pair<MlpParams, Tensor> mlp_backward(const MlpParams& params, const MlpTape& tape,
                                          const Tensor& grad_output) {
    if (tape.dims_fingerprint != dims_of(params)) {
        throw TapeError("mlp_backward: tape does not match these parameters");
    }
    if (grad_output.shape != tape.output_shape) {
        throw TapeError("mlp_backward: grad_output shape does not match taped output");
    }

    const std::size_t n = params.layers.size();
    const std::size_t n_plain = n - params.residual_blocks;
    MlpParams grads = zeros_like(params);

    Tensor dx = as_matrix(grad_output);
    if (n == 0) {
        if (dx.cols() != tape.identity_width) {
            throw TapeError("mlp_backward: identity tape width mismatch");
        }
        Tensor gi = grad_output;
        return {std::move(grads), std::move(gi)};
    }

    for (std::size_t k = n; k-- > 0;) {
        const LinearLayer& layer = params.layers[k];
        const Tensor& z = tape.preacts[k];
        const Tensor& x_in = tape.inputs[k];
        if (k >= n_plain) {
            Tensor dz = chain_activation(params.activation, z, dx);
            grads.layers[k].weight = matmul_tn(dz, x_in);
            grads.layers[k].bias = column_sums(dz);
            // skip connection: dx flows through unchanged plus the branch
            add_inplace(dx, matmul(dz, layer.weight));
        } else {
            Tensor dz = (k == n - 1) ? std::move(dx) : chain_activation(params.activation, z, dx);
            grads.layers[k].weight = matmul_tn(dz, x_in);
            grads.layers[k].bias = column_sums(dz);
            dx = matmul(dz, layer.weight);
        }
    }

    if (grad_output.rank() == 1) dx.shape = {dx.cols()};
    require_finite(dx, "mlp_backward");
    return {std::move(grads), std::move(dx)};
}

MlpParams zeros_like(const MlpParams& params) {
    MlpParams z;
    z.activation = params.activation;
    z.residual_blocks = params.residual_blocks;
    z.layers.reserve(params.layers.size());
    for (const LinearLayer& layer : params.layers) {
        z.layers.push_back({Tensor::zeros(layer.weight.shape), Tensor::zeros(layer.bias.shape)});
    }
    return z;
}

void accumulate(MlpParams& into, const MlpParams& grads) {
    if (into.layers.size() != grads.layers.size()) {
        throw ShapeError("accumulate: layer count mismatch");
    }
    for (std::size_t k = 0; k < into.layers.size(); ++k) {
        add_inplace(into.layers[k].weight, grads.layers[k].weight);
        add_inplace(into.layers[k].bias, grads.layers[k].bias);
    }
}

namespace {

LinearLayer xavier_layer(std::size_t in, std::size_t out, Rng& rng) {
    LinearLayer layer;
    layer.weight = Tensor::zeros({out, in});
    const double std_dev = std::sqrt(2.0 / static_cast<double>(in + out));
    for (double& w : layer.weight.data) w = std_dev * rng.normal();
    layer.bias = Tensor::zeros({out});
    return layer;
}

}  // namespace

MlpParams mlp_init(const std::vector<std::size_t>& dims, Activation act, Rng& rng) {
    if (dims.size() < 2) {
        throw ConfigError("mlp_init: need at least input and output widths");
    }
    MlpParams params;
    params.activation = act;
    params.residual_blocks = 0;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        params.layers.push_back(xavier_layer(dims[k], dims[k + 1], rng));
    }
    validate(params);
    return params;
}

MlpParams residual_stack_init(std::size_t width, std::size_t count, Activation act, Rng& rng) {
    MlpParams params;
    params.activation = act;
    params.residual_blocks = count;
    for (std::size_t k = 0; k < count; ++k) {
        params.layers.push_back(xavier_layer(width, width, rng));
    }
    validate(params);
    return params;
}

MlpParams linear_init(std::size_t in, std::size_t out, Rng& rng) {
    MlpParams params;
    params.layers.push_back(xavier_layer(in, out, rng));
    validate(params);
    return params;
}

MlpParams linear_zeros(std::size_t in, std::size_t out) {
    MlpParams params;
    params.layers.push_back({Tensor::zeros({out, in}), Tensor::zeros({out})});
    validate(params);
    return params;
}

std::size_t param_count(const MlpParams& params) {
    std::size_t n = 0;
    for (const LinearLayer& layer : params.layers) {
        n += layer.weight.numel() + layer.bias.numel();
    }
    return n;
}

void pack(const MlpParams& params, std::vector<double>& out) {
    for (const LinearLayer& layer : params.layers) {
        out.insert(out.end(), layer.weight.data.begin(), layer.weight.data.end());
        out.insert(out.end(), layer.bias.data.begin(), layer.bias.data.end());
    }
}

void unpack(MlpParams& params, std::span<const double> flat, std::size_t& offset) {
    for (LinearLayer& layer : params.layers) {
        for (double& w : layer.weight.data) {
            if (offset >= flat.size()) throw ShapeError("unpack: flat buffer too short");
            w = flat[offset++];
        }
        for (double& b : layer.bias.data) {
            if (offset >= flat.size()) throw ShapeError("unpack: flat buffer too short");
            b = flat[offset++];
        }
    }
}

}  // namespace rnflow
