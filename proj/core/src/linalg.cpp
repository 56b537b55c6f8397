#include "isoprune/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace isoprune {

namespace detail {

// Work below this size is not worth a parallel region.
constexpr std::size_t kParallelGrain = 1u << 18;

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
    const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelGrain)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        double* ci = c + static_cast<std::size_t>(i) * n;
        std::fill(ci, ci + n, 0.0);
        const double* ai = a + static_cast<std::size_t>(i) * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += aip * bp[j];
            }
        }
    }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
    const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelGrain)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const double* ai = a + static_cast<std::size_t>(i) * k;
        double* ci = c + static_cast<std::size_t>(i) * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += ai[p] * bj[p];
            }
            ci[j] = acc;
        }
    }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
    const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelGrain)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        double* ci = c + static_cast<std::size_t>(i) * n;
        std::fill(ci, ci + n, 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double api = a[p * m + static_cast<std::size_t>(i)];
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += api * bp[j];
            }
        }
    }
}

}  // namespace detail

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw std::invalid_argument("matmul: expected matrices, got " +
                                    shape_to_string(a.shape()) + " and " +
                                    shape_to_string(b.shape()));
    }
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions disagree: " +
                                    shape_to_string(a.shape()) + " times " +
                                    shape_to_string(b.shape()));
    }
    Tensor c({a.rows(), b.cols()});
    detail::gemm_nn(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
    c.ensure_finite("matmul");
    return c;
}

QrResult qr_decompose(const Tensor& a) {
    if (a.rank() != 2) {
        throw std::invalid_argument("qr_decompose: expected a matrix, got shape " +
                                    shape_to_string(a.shape()));
    }
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (m < n) {
        throw std::invalid_argument("qr_decompose: matrix is " + shape_to_string(a.shape()) +
                                    " with more columns than rows; transpose the input first");
    }
    a.ensure_finite("qr_decompose input");

    // Householder triangularization, keeping the reflectors to accumulate Q.
    Tensor work = a;
    std::vector<std::vector<double>> reflectors(n);
    std::vector<double> betas(n, 0.0);

    for (std::size_t k = 0; k < n; ++k) {
        double norm_sq = 0.0;
        for (std::size_t i = k; i < m; ++i) {
            const double v = work(i, k);
            norm_sq += v * v;
        }
        const double norm = std::sqrt(norm_sq);
        if (norm == 0.0) continue;  // column already zero below and at the diagonal

        const double x0 = work(k, k);
        const double alpha = x0 >= 0.0 ? -norm : norm;
        std::vector<double> u(m - k);
        u[0] = x0 - alpha;
        for (std::size_t i = k + 1; i < m; ++i) u[i - k] = work(i, k);
        double u_sq = 0.0;
        for (double v : u) u_sq += v * v;
        const double beta = 2.0 / u_sq;

        // Apply the reflector to the trailing columns (including column k).
        for (std::size_t j = k; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t i = k; i < m; ++i) dot += u[i - k] * work(i, j);
            const double scale = beta * dot;
            for (std::size_t i = k; i < m; ++i) work(i, j) -= scale * u[i - k];
        }
        work(k, k) = alpha;  // exact, the reflector maps the column onto alpha*e1
        for (std::size_t i = k + 1; i < m; ++i) work(i, k) = 0.0;

        reflectors[k] = std::move(u);
        betas[k] = beta;
    }

    QrResult out;
    out.r = Tensor({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            out.r(i, j) = work(i, j);
        }
    }

    // Q = H_0 * ... * H_{n-1} applied to the first n columns of I.
    out.q = Tensor({m, n});
    for (std::size_t j = 0; j < n; ++j) out.q(j, j) = 1.0;
    for (std::size_t k = n; k-- > 0;) {
        if (betas[k] == 0.0) continue;
        const std::vector<double>& u = reflectors[k];
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t i = k; i < m; ++i) dot += u[i - k] * out.q(i, j);
            const double scale = betas[k] * dot;
            for (std::size_t i = k; i < m; ++i) out.q(i, j) -= scale * u[i - k];
        }
    }

    out.q.ensure_finite("qr_decompose q");
    out.r.ensure_finite("qr_decompose r");
    return out;
}

std::vector<double> svd_values(const Tensor& a) {
    if (a.rank() != 2) {
        throw std::invalid_argument("svd_values: expected a matrix, got shape " +
                                    shape_to_string(a.shape()));
    }
    a.ensure_finite("svd_values input");

    // One-sided Jacobi orthogonalizes the columns of the tall orientation;
    // singular values are invariant under transposition.
    Tensor work = a.rows() >= a.cols() ? a : a.transposed();
    const std::size_t m = work.rows();
    const std::size_t n = work.cols();

    constexpr double kTol = 1e-12;
    const std::size_t max_sweeps = 100 * n;

    double last_residual = 0.0;
    bool converged = false;
    for (std::size_t sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        double residual = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t r = 0; r < m; ++r) {
                    const double vi = work(r, i);
                    const double vj = work(r, j);
                    alpha += vi * vi;
                    beta += vj * vj;
                    gamma += vi * vj;
                }
                const double denom = std::sqrt(alpha * beta);
                if (denom == 0.0) continue;  // a zero column is orthogonal to everything
                const double rel = std::abs(gamma) / denom;
                residual = std::max(residual, rel);
                if (rel <= kTol) continue;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t =
                    (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t r = 0; r < m; ++r) {
                    const double vi = work(r, i);
                    const double vj = work(r, j);
                    work(r, i) = c * vi - s * vj;
                    work(r, j) = s * vi + c * vj;
                }
            }
        }
        last_residual = residual;
        converged = residual <= kTol;
    }
    if (!converged) {
        throw std::runtime_error(
            "svd_values: no convergence after " + std::to_string(max_sweeps) +
            " sweeps; max relative off-diagonal residual = " + std::to_string(last_residual));
    }

    std::vector<double> values(n);
    for (std::size_t j = 0; j < n; ++j) {
        double norm_sq = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            const double v = work(r, j);
            norm_sq += v * v;
        }
        values[j] = std::sqrt(norm_sq);
    }
    std::sort(values.begin(), values.end(), std::greater<double>());
    return values;
}

}  // namespace isoprune
