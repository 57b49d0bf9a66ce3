#pragma once

#include <memory>
#include <span>
#include <vector>

#include "fe/feature_map.hpp"
#include "fe/matrix.hpp"

namespace fe {

struct EncoderError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One function's sample set. Inputs are model inputs (for dynamics tasks the
/// per-sample time step lives in dts); targets are output vectors in R^d.
/// eval_indices are used for coefficient estimation, query_indices for loss.
struct TaskDataset {
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> targets;
    std::vector<double> dts;  // empty for static tasks; else one per sample
    std::vector<std::size_t> eval_indices;
    std::vector<std::size_t> query_indices;

    std::size_t size() const { return inputs.size(); }
    double dt(std::size_t i) const { return dts.empty() ? 0.0 : dts[i]; }
    void validate() const;
};

using CoefficientVector = std::vector<double>;

/// A basis set plus regularization: the trained function-encoder model.
struct FunctionEncoder {
    std::shared_ptr<const FeatureMap> basis;
    double lambda = 1e-3;

    FunctionEncoder() = default;
    FunctionEncoder(std::shared_ptr<const FeatureMap> b, double lam);
};

/// Solves the regularized normal equations on the eval subset:
/// ((1/m) sum phi^T phi + lambda I) c = (1/m) sum phi^T y.
CoefficientVector solve_coefficients(const FunctionEncoder& enc, const TaskDataset& data);

/// phi(x) c, in R^d.
std::vector<double> predict(const FunctionEncoder& enc, const CoefficientVector& c,
                            std::span<const double> x, double dt = 0.0);

/// Scalar induced kernel k(x, x') = sum_j psi_j(x) psi_j(x'); requires d = 1.
double kernel(const FunctionEncoder& enc, std::span<const double> x,
              std::span<const double> x_prime);

/// Operator-valued kernel: sum_j psi_j(x) psi_j(x')^T, a d-by-d matrix.
Matrix operator_kernel(const FunctionEncoder& enc, std::span<const double> x,
                       std::span<const double> x_prime);

/// Gram matrix over the given inputs: m-by-m for d = 1, md-by-md blockwise
/// otherwise.
Matrix gram(const FunctionEncoder& enc, const std::vector<std::vector<double>>& inputs);

/// Dual coefficients: (K + lambda m I) alpha = Y over the eval subset (d=1).
std::vector<double> solve_dual(const FunctionEncoder& enc, const TaskDataset& data);

/// sum_i alpha_i k(x, x_i).
double predict_dual(const FunctionEncoder& enc, const std::vector<double>& alpha,
                    const std::vector<std::vector<double>>& eval_inputs,
                    std::span<const double> x);

}  // namespace fe
