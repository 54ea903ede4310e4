// Dense brute-force oracles: cyclic Jacobi eigendecomposition and Gaussian
// elimination with partial pivoting. Independent of every matrix-free path;
// used for ground truth at test scale (d <= 512) and for instance certificates.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "agmas/core.hpp"

namespace agmas {

inline constexpr std::size_t kDenseCap = 512;

// Row-major symmetric-friendly dense matrix.
struct DenseMatrix {
    std::size_t n = 0;
    std::vector<double> a;  // n*n row-major

    DenseMatrix() = default;
    explicit DenseMatrix(std::size_t n_) : n(n_), a(n_ * n_, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * n + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * n + j]; }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static DenseMatrix diagonal(const Vec& d) {
        DenseMatrix m(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

    Vec multiply(const Vec& x) const {
        if (x.size() != n) throw ContractError("DenseMatrix::multiply: dimension mismatch");
        Vec y(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = a.data() + i * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += row[j] * x[j];
            y[i] = s;
        }
        return y;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (double v : a) s += v * v;
        return std::sqrt(s);
    }

    double max_asymmetry() const {
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                worst = std::max(worst, std::abs((*this)(i, j) - (*this)(j, i)));
        return worst;
    }

    bool is_symmetric(double tol_rel = 1e-10) const {
        const double scale = std::max(1.0, frobenius_norm());
        return max_asymmetry() <= tol_rel * scale;
    }
};

// Materialize an implicit operator column-by-column (test scale only).
inline DenseMatrix materialize(const std::function<void(const Vec&, Vec&)>& op, std::size_t n) {
    DenseMatrix m(n);
    Vec e(n, 0.0), col(n);
    for (std::size_t j = 0; j < n; ++j) {
        e[j] = 1.0;
        op(e, col);
        for (std::size_t i = 0; i < n; ++i) m(i, j) = col[i];
        e[j] = 0.0;
    }
    return m;
}

struct EigenDecomposition {
    Vec eigenvalues;       // sorted descending
    DenseMatrix vectors;   // column k is the eigenvector of eigenvalues[k]

    Vec vector(std::size_t k) const {
        Vec v(vectors.n);
        for (std::size_t i = 0; i < vectors.n; ++i) v[i] = vectors(i, k);
        return v;
    }
    double lambda_max() const { return eigenvalues.front(); }
    double lambda_min() const { return eigenvalues.back(); }
};

// Cyclic Jacobi rotations with threshold sweeps. A = V diag(lambda) V'.
inline EigenDecomposition dense_eigendecomposition(const DenseMatrix& input, double tol = 1e-14,
                                                   int max_sweeps = 64) {
    const std::size_t n = input.n;
    if (n == 0) throw ContractError("dense_eigendecomposition: empty matrix");
    if (n > kDenseCap) throw ContractError("dense_eigendecomposition: d exceeds dense test cap");
    if (!input.is_symmetric(1e-8))
        throw ContractError("dense_eigendecomposition: matrix is not symmetric");

    DenseMatrix m = input;
    // symmetrize away roundoff
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double avg = 0.5 * (m(i, j) + m(j, i));
            m(i, j) = avg;
            m(j, i) = avg;
        }
    DenseMatrix v = DenseMatrix::identity(n);
    const double fnorm = std::max(m.frobenius_norm(), 1e-300);

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += 2.0 * m(i, j) * m(i, j);
        if (std::sqrt(off) <= tol * fnorm) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                const double app = m(p, p), aqq = m(q, q);
                const double theta = 0.5 * (aqq - app) / apq;
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m(k, p), mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m(p, k), mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Vec diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = m(i, i);
    std::sort(order.begin(), order.end(),
              [&diag](std::size_t a, std::size_t b) { return diag[a] > diag[b]; });

    EigenDecomposition out;
    out.eigenvalues.resize(n);
    out.vectors = DenseMatrix(n);
    for (std::size_t k = 0; k < n; ++k) {
        out.eigenvalues[k] = diag[order[k]];
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
    }
    return out;
}

// Solve A x = -b for symmetric PD A, i.e. return the minimizer of
// (1/2) x'Ax + b'x, by Gaussian elimination with partial pivoting.
inline Vec direct_solve(const DenseMatrix& a_in, const Vec& b) {
    const std::size_t n = a_in.n;
    if (b.size() != n) throw ContractError("direct_solve: dimension mismatch");
    if (n > kDenseCap) throw ContractError("direct_solve: d exceeds dense test cap");

    DenseMatrix a = a_in;
    Vec rhs(n);
    for (std::size_t i = 0; i < n; ++i) rhs[i] = -b[i];

    const double scale = std::max(a.frobenius_norm(), 1e-300);
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        double best = std::abs(a(col, col));
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a(r, col)) > best) {
                best = std::abs(a(r, col));
                piv = r;
            }
        }
        if (best <= 1e-13 * scale) throw SolverError("direct_solve: singular or indefinite matrix");
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(col, j), a(piv, j));
            std::swap(rhs[col], rhs[piv]);
        }
        const double d = a(col, col);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a(r, col) / d;
            if (f == 0.0) continue;
            for (std::size_t j = col; j < n; ++j) a(r, j) -= f * a(col, j);
            rhs[r] -= f * rhs[col];
        }
    }
    Vec x(n, 0.0);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = rhs[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= a(ii, j) * x[j];
        x[ii] = s / a(ii, ii);
    }
    return x;
}

// Convenience wrappers over std::vector<double> row-major payloads (as stored
// in QuadraticProblem::dense_A).
inline DenseMatrix dense_from_rowmajor(const std::vector<double>& a, std::size_t n) {
    DenseMatrix m(n);
    m.a = a;
    return m;
}

inline DenseMatrix dense_of(const QuadraticProblem& p) {
    if (!p.dense_A) throw ContractError("dense_of: problem has no dense copy");
    return dense_from_rowmajor(*p.dense_A, p.dim);
}

// ||A x + b|| residual of a candidate minimizer.
inline double quadratic_residual(const DenseMatrix& a, const Vec& b, const Vec& x) {
    Vec r = a.multiply(x);
    axpy(1.0, b, r);
    return nrm2(r);
}

inline double dense_quadratic_value(const DenseMatrix& a, const Vec& b, const Vec& x) {
    const Vec ax = a.multiply(x);
    return 0.5 * dot(x, ax) + dot(b, x);
}

// A - A1 as a dense matrix (for dense verification of extraction output).
inline DenseMatrix dense_deflated(const DenseMatrix& a, const LowRankDeflation& defl) {
    DenseMatrix m = a;
    for (std::size_t t = 0; t < defl.coeffs.size(); ++t) {
        const double c = LowRankDeflation::scale * defl.coeffs[t];
        const Vec& v = defl.vecs[t];
        for (std::size_t i = 0; i < m.n; ++i)
            for (std::size_t j = 0; j < m.n; ++j) m(i, j) -= c * v[i] * v[j];
    }
    return m;
}

// Spectral norm helper via Jacobi (test scale).
inline double dense_spectral_norm(const DenseMatrix& a) {
    const auto eig = dense_eigendecomposition(a);
    return std::max(std::abs(eig.lambda_max()), std::abs(eig.lambda_min()));
}

}  // namespace agmas
