#include "fe/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fe {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), v_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), v_(std::move(values)) {
    if (v_.size() != rows_ * cols_) {
        throw LinalgError("Matrix: value count " + std::to_string(v_.size()) +
                          " does not match " + std::to_string(rows_) + "x" +
                          std::to_string(cols_));
    }
    check_finite("Matrix construction");
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

Matrix Matrix::operator*(const Matrix& other) const {
    if (cols_ != other.rows_) throw LinalgError("Matrix multiply: dimension mismatch");
    Matrix out(rows_, other.cols_);
    for (std::size_t i = 0; i < rows_; ++i) {
        for (std::size_t k = 0; k < cols_; ++k) {
            const double aik = (*this)(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < other.cols_; ++j)
                out(i, j) += aik * other(k, j);
        }
    }
    return out;
}

double Matrix::max_abs() const {
    double m = 0.0;
    for (double x : v_) m = std::max(m, std::abs(x));
    return m;
}

void Matrix::check_finite(const std::string& context) const {
    for (double x : v_) {
        if (!std::isfinite(x)) throw LinalgError(context + ": non-finite entry");
    }
}

void check_symmetric(const Matrix& a, double tol, const std::string& context) {
    if (a.rows() != a.cols()) throw LinalgError(context + ": matrix not square");
    const double scale = std::max(1.0, a.max_abs());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = i + 1; j < a.cols(); ++j) {
            if (std::abs(a(i, j) - a(j, i)) > tol * scale) {
                throw LinalgError(context + ": matrix not symmetric");
            }
        }
    }
}

Matrix cholesky(const Matrix& a) {
    check_symmetric(a, 1e-10, "cholesky");
    const std::size_t n = a.rows();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (diag <= 0.0 || !std::isfinite(diag)) {
            throw LinalgError("cholesky: non-positive pivot at row " + std::to_string(j) +
                              " (matrix not positive-definite)");
        }
        l(j, j) = std::sqrt(diag);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

Matrix cholesky_solve(const Matrix& l, const Matrix& b) {
    const std::size_t n = l.rows();
    if (b.rows() != n) throw LinalgError("cholesky_solve: right-hand side row mismatch");
    Matrix x = b;
    // Forward substitution: L z = b.
    for (std::size_t c = 0; c < x.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = x(i, c);
            for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
            x(i, c) = s / l(i, i);
        }
        // Back substitution: L^T x = z.
        for (std::size_t ii = n; ii-- > 0;) {
            double s = x(ii, c);
            for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x(k, c);
            x(ii, c) = s / l(ii, ii);
        }
    }
    return x;
}

Matrix spd_solve(const Matrix& a, const Matrix& b) {
    if (a.rows() != a.cols()) throw LinalgError("spd_solve: matrix not square");
    if (b.rows() != a.rows()) throw LinalgError("spd_solve: dimension mismatch");
    return cholesky_solve(cholesky(a), b);
}

namespace {

// One cyclic Jacobi sweep over all off-diagonal pairs; returns the
// off-diagonal Frobenius norm before the sweep.
double jacobi_sweep(Matrix& a, Matrix& u) {
    const std::size_t n = a.rows();
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * a(p, q) * a(p, q);
    off = std::sqrt(off);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = p + 1; q < n; ++q) {
            const double apq = a(p, q);
            if (apq == 0.0) continue;
            const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
            const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                             (std::abs(theta) + std::sqrt(theta * theta + 1.0));
            const double c = 1.0 / std::sqrt(t * t + 1.0);
            const double s = t * c;
            for (std::size_t k = 0; k < n; ++k) {
                const double akp = a(k, p);
                const double akq = a(k, q);
                a(k, p) = c * akp - s * akq;
                a(k, q) = s * akp + c * akq;
            }
            for (std::size_t k = 0; k < n; ++k) {
                const double apk = a(p, k);
                const double aqk = a(q, k);
                a(p, k) = c * apk - s * aqk;
                a(q, k) = s * apk + c * aqk;
            }
            for (std::size_t k = 0; k < n; ++k) {
                const double ukp = u(k, p);
                const double ukq = u(k, q);
                u(k, p) = c * ukp - s * ukq;
                u(k, q) = s * ukp + c * ukq;
            }
        }
    }
    return off;
}

}  // namespace

EigenDecomposition sym_eig(const Matrix& input) {
    check_symmetric(input, 1e-10, "sym_eig");
    const std::size_t n = input.rows();
    Matrix a = input;
    Matrix u = Matrix::identity(n);
    const double scale = std::max(1.0, input.max_abs());
    constexpr int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        const double off = jacobi_sweep(a, u);
        if (off <= 1e-12 * scale) break;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    EigenDecomposition dec;
    dec.eigenvalues.resize(n);
    dec.eigenvectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        dec.eigenvalues[j] = a(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) dec.eigenvectors(i, j) = u(i, order[j]);
    }
    return dec;
}

}  // namespace fe
