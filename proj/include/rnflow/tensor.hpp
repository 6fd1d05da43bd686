#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace rnflow {

/// Dense row-major tensor of 64-bit floats. Rank 1 and 2 cover every
/// quantity in this toolkit (vectors x, eps, v and batches thereof).
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor vec(std::initializer_list<double> values);
    static Tensor vec(std::vector<double> values);

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    // Rank-2 accessors; rank-1 tensors behave as a single row.
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;
    std::span<double> row(std::size_t r);
    std::span<const double> row(std::size_t r) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

/// Throws NumericError if any entry is NaN or infinite.
void require_finite(const Tensor& t, const char* where);
void require_finite(std::span<const double> xs, const char* where);
bool all_finite(std::span<const double> xs);

void require_same_shape(const Tensor& a, const Tensor& b, const char* where);

// Elementwise arithmetic. All check shapes and output finiteness.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double k);
Tensor hadamard(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& a, const Tensor& b);
void axpy_inplace(Tensor& a, double k, const Tensor& b);  // a += k * b

double dot(const Tensor& a, const Tensor& b);
double squared_norm(const Tensor& a);
double squared_norm(std::span<const double> xs);

// Dense products, Eigen-backed. A is n x k, B is k x m (matmul_nt takes
// B as m x k and multiplies by its transpose; matmul_tn takes A as k x n).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);

}  // namespace rnflow
