#include "fe/encoder.hpp"

#include <cmath>

namespace fe {

void TaskDataset::validate() const {
    if (inputs.empty()) throw EncoderError("TaskDataset: empty");
    if (inputs.size() != targets.size()) {
        throw EncoderError("TaskDataset: inputs/targets length mismatch");
    }
    if (!dts.empty() && dts.size() != inputs.size()) {
        throw EncoderError("TaskDataset: dts length mismatch");
    }
    const std::size_t d = targets.front().size();
    for (const auto& y : targets) {
        if (y.size() != d) throw EncoderError("TaskDataset: inconsistent target dimension");
    }
    for (std::size_t i : eval_indices) {
        if (i >= inputs.size()) throw EncoderError("TaskDataset: eval index out of range");
    }
    for (std::size_t i : query_indices) {
        if (i >= inputs.size()) throw EncoderError("TaskDataset: query index out of range");
    }
}

FunctionEncoder::FunctionEncoder(std::shared_ptr<const FeatureMap> b, double lam)
    : basis(std::move(b)), lambda(lam) {
    if (lambda <= 0.0) throw EncoderError("FunctionEncoder: lambda must be > 0");
}

CoefficientVector solve_coefficients(const FunctionEncoder& enc, const TaskDataset& data) {
    if (data.eval_indices.empty()) throw EncoderError("solve_coefficients: empty eval subset");
    const FeatureMap& fm = *enc.basis;
    const std::size_t n = fm.n_basis();
    const std::size_t d = fm.output_dim();
    const double m = static_cast<double>(data.eval_indices.size());

    Matrix g(n, n);
    Matrix rhs(n, 1);
    for (std::size_t idx : data.eval_indices) {
        const auto& x = data.inputs[idx];
        const auto& y = data.targets[idx];
        if (y.size() != d) throw EncoderError("solve_coefficients: target dimension mismatch");
        const Matrix phi = fm.features(x, data.dt(idx));
        phi.check_finite("solve_coefficients: features");
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = j; k < n; ++k) {
                double s = 0.0;
                for (std::size_t r = 0; r < d; ++r) s += phi(r, j) * phi(r, k);
                g(j, k) += s;
            }
            double ry = 0.0;
            for (std::size_t r = 0; r < d; ++r) ry += phi(r, j) * y[r];
            rhs(j, 0) += ry;
        }
    }
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = j; k < n; ++k) {
            g(j, k) /= m;
            g(k, j) = g(j, k);
        }
        g(j, j) += enc.lambda;
        rhs(j, 0) /= m;
    }
    Matrix c = spd_solve(g, rhs);
    return c.values();
}

std::vector<double> predict(const FunctionEncoder& enc, const CoefficientVector& c,
                            std::span<const double> x, double dt) {
    const FeatureMap& fm = *enc.basis;
    if (c.size() != fm.n_basis()) throw EncoderError("predict: coefficient length mismatch");
    const Matrix phi = fm.features(x, dt);
    std::vector<double> out(fm.output_dim(), 0.0);
    for (std::size_t k = 0; k < out.size(); ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < c.size(); ++j) s += phi(k, j) * c[j];
        out[k] = s;
    }
    return out;
}

double kernel(const FunctionEncoder& enc, std::span<const double> x,
              std::span<const double> x_prime) {
    if (enc.basis->output_dim() != 1) {
        throw EncoderError("kernel: scalar kernel requires d = 1 (use operator_kernel)");
    }
    const Matrix a = enc.basis->features(x, 0.0);
    const Matrix b = enc.basis->features(x_prime, 0.0);
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(0, j) * b(0, j);
    return s;
}

Matrix operator_kernel(const FunctionEncoder& enc, std::span<const double> x,
                       std::span<const double> x_prime) {
    const Matrix a = enc.basis->features(x, 0.0);
    const Matrix b = enc.basis->features(x_prime, 0.0);
    const std::size_t d = a.rows();
    Matrix k(d, d);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t s = 0; s < d; ++s) {
            double v = 0.0;
            for (std::size_t j = 0; j < a.cols(); ++j) v += a(r, j) * b(s, j);
            k(r, s) = v;
        }
    return k;
}

Matrix gram(const FunctionEncoder& enc, const std::vector<std::vector<double>>& inputs) {
    if (inputs.empty()) throw EncoderError("gram: empty input sequence");
    const std::size_t m = inputs.size();
    const std::size_t d = enc.basis->output_dim();
    const std::size_t n = enc.basis->n_basis();
    std::vector<Matrix> feats;
    feats.reserve(m);
    for (const auto& x : inputs) feats.push_back(enc.basis->features(x, 0.0));
    Matrix k(m * d, m * d);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t jj = i; jj < m; ++jj) {
            for (std::size_t r = 0; r < d; ++r) {
                for (std::size_t s = 0; s < d; ++s) {
                    double v = 0.0;
                    for (std::size_t j = 0; j < n; ++j) v += feats[i](r, j) * feats[jj](s, j);
                    k(i * d + r, jj * d + s) = v;
                    k(jj * d + s, i * d + r) = v;
                }
            }
        }
    }
    return k;
}

std::vector<double> solve_dual(const FunctionEncoder& enc, const TaskDataset& data) {
    if (enc.basis->output_dim() != 1) throw EncoderError("solve_dual: requires d = 1");
    if (data.eval_indices.empty()) throw EncoderError("solve_dual: empty eval subset");
    const std::size_t m = data.eval_indices.size();
    std::vector<std::vector<double>> xs;
    xs.reserve(m);
    Matrix y(m, 1);
    for (std::size_t i = 0; i < m; ++i) {
        xs.push_back(data.inputs[data.eval_indices[i]]);
        y(i, 0) = data.targets[data.eval_indices[i]][0];
    }
    Matrix k = gram(enc, xs);
    const double lm = enc.lambda * static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) k(i, i) += lm;
    return spd_solve(k, y).values();
}

double predict_dual(const FunctionEncoder& enc, const std::vector<double>& alpha,
                    const std::vector<std::vector<double>>& eval_inputs,
                    std::span<const double> x) {
    if (alpha.size() != eval_inputs.size()) {
        throw EncoderError("predict_dual: alpha/eval length mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) s += alpha[i] * kernel(enc, x, eval_inputs[i]);
    return s;
}

}  // namespace fe
