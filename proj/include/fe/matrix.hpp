#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fe {

/// Dense row-major matrix of 64-bit floats. All entries must be finite.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Matrix identity(std::size_t n);
    static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return v_[i * cols_ + j]; }

    std::vector<double>& values() { return v_; }
    const std::vector<double>& values() const { return v_; }

    std::span<double> row(std::size_t i) { return {v_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {v_.data() + i * cols_, cols_}; }

    Matrix transposed() const;
    Matrix operator*(const Matrix& other) const;

    double max_abs() const;
    void check_finite(const std::string& context) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> v_;
};

/// Eigendecomposition of a symmetric matrix. Eigenvalues are sorted
/// non-increasing; column i of eigenvectors pairs with eigenvalue i.
struct EigenDecomposition {
    std::vector<double> eigenvalues;
    Matrix eigenvectors;
};

struct LinalgError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Solves A X = B for symmetric positive-definite A via Cholesky.
Matrix spd_solve(const Matrix& a, const Matrix& b);

/// Cholesky factor L (lower triangular) with A = L L^T. Throws LinalgError
/// on a non-positive pivot.
Matrix cholesky(const Matrix& a);

/// Solves with a precomputed Cholesky factor.
Matrix cholesky_solve(const Matrix& l, const Matrix& b);

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
EigenDecomposition sym_eig(const Matrix& a);

void check_symmetric(const Matrix& a, double tol, const std::string& context);

}  // namespace fe
