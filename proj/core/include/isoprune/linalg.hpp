#pragma once

#include <vector>

#include "isoprune/tensor.hpp"

namespace isoprune {

struct QrResult {
    Tensor q;  // m x n, orthonormal columns
    Tensor r;  // n x n, upper triangular (exact zeros below the diagonal)
};

// Standard matrix product of two rank-2 tensors. Throws on inner-dimension
// mismatch, naming both shapes.
Tensor matmul(const Tensor& a, const Tensor& b);

// Thin QR of an m x n matrix with m >= n, via Householder reflections.
// Postconditions: q*r reconstructs a within 1e-10*max|a|, q'q = I within
// 1e-10. No sign convention is imposed on the columns.
QrResult qr_decompose(const Tensor& a);

// Singular values of an m x n matrix, descending, length min(m,n).
// One-sided Jacobi; throws if the off-diagonal mass has not fallen below the
// relative threshold after the sweep cap, reporting the residual.
std::vector<double> svd_values(const Tensor& a);

namespace detail {

// C(m x n) = A(m x k) * B(k x n) on raw row-major buffers. Each output
// element is accumulated by exactly one thread, so results are bit-identical
// at any thread count.
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
// C(m x n) = A(m x k) * B(n x k)'
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
// C(m x n) = A(k x m)' * B(k x n)
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);

}  // namespace detail

}  // namespace isoprune
