#include "rnflow/tensor.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "rnflow/errors.hpp"

namespace rnflow {

namespace {

using MatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutMatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

MatMap as_matrix(const Tensor& t) {
    return MatMap(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

}  // namespace

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t extent : shape) n *= extent;
    return shape.empty() ? 0 : n;
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("tensor: shape product " + std::to_string(shape_numel(shape)) +
                         " != data length " + std::to_string(data.size()));
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::vec(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::vec(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

std::size_t Tensor::rows() const { return rank() <= 1 ? 1 : shape[0]; }

std::size_t Tensor::cols() const {
    if (shape.empty()) return 0;
    return shape[rank() - 1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

std::span<double> Tensor::row(std::size_t r) {
    return std::span<double>(data.data() + r * cols(), cols());
}

std::span<const double> Tensor::row(std::size_t r) const {
    return std::span<const double>(data.data() + r * cols(), cols());
}

bool all_finite(std::span<const double> xs) {
    for (double x : xs) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void require_finite(std::span<const double> xs, const char* where) {
    if (!all_finite(xs)) {
        throw NumericError(std::string(where) + ": non-finite value");
    }
}

void require_finite(const Tensor& t, const char* where) {
    require_finite(std::span<const double>(t.data), where);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(where) + ": shape mismatch");
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    require_finite(out, "add");
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    require_finite(out, "sub");
    return out;
}

Tensor scale(const Tensor& a, double k) {
    Tensor out = a;
    for (double& x : out.data) x *= k;
    require_finite(out, "scale");
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    require_finite(out, "hadamard");
    return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add_inplace");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
    require_finite(a, "add_inplace");
}

void axpy_inplace(Tensor& a, double k, const Tensor& b) {
    require_same_shape(a, b, "axpy_inplace");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += k * b.data[i];
    require_finite(a, "axpy_inplace");
}

double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

double squared_norm(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x * x;
    return s;
}

double squared_norm(const Tensor& a) { return squared_norm(std::span<const double>(a.data)); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    Tensor out = Tensor::zeros({a.rows(), b.cols()});
    MutMatMap(out.data.data(), static_cast<Eigen::Index>(a.rows()),
              static_cast<Eigen::Index>(b.cols())) = as_matrix(a) * as_matrix(b);
    require_finite(out, "matmul");
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
    Tensor out = Tensor::zeros({a.rows(), b.rows()});
    MutMatMap(out.data.data(), static_cast<Eigen::Index>(a.rows()),
              static_cast<Eigen::Index>(b.rows())) = as_matrix(a) * as_matrix(b).transpose();
    require_finite(out, "matmul_nt");
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) throw ShapeError("matmul_tn: inner dimensions differ");
    Tensor out = Tensor::zeros({a.cols(), b.cols()});
    MutMatMap(out.data.data(), static_cast<Eigen::Index>(a.cols()),
              static_cast<Eigen::Index>(b.cols())) = as_matrix(a).transpose() * as_matrix(b);
    require_finite(out, "matmul_tn");
    return out;
}

}  // namespace rnflow
