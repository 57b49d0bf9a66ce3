#include "fe/bounds.hpp"

#include <algorithm>
#include <cmath>

namespace fe {

void BoundInputs::validate() const {
    if (n < 1 || m < 1) throw BoundsError("BoundInputs: n and m must be >= 1");
    if (lambda <= 0.0) throw BoundsError("BoundInputs: lambda must be > 0");
    if (R <= 0.0) throw BoundsError("BoundInputs: R must be > 0");
    if (Y <= 0.0) throw BoundsError("BoundInputs: Y must be > 0");
    if (delta <= 0.0 || delta > 1.0) throw BoundsError("BoundInputs: delta must be in (0, 1]");
    if (empirical_risk < 0.0) throw BoundsError("BoundInputs: empirical_risk must be >= 0");
}

double rademacher_complexity(const BoundInputs& b) {
    b.validate();
    const double n = static_cast<double>(b.n);
    const double m = static_cast<double>(b.m);
    return b.Y * b.R * std::sqrt(n / (m * b.lambda));
}

double rademacher_bound(const BoundInputs& b) {
    b.validate();
    const double n = static_cast<double>(b.n);
    const double m = static_cast<double>(b.m);
    const double conf = 2.0 + std::sqrt(std::log(1.0 / b.delta) / 2.0);
    return b.empirical_risk + 2.0 * b.Y * b.Y * b.R * std::sqrt(n / (m * b.lambda)) *
                                  (b.R * std::sqrt(n / b.lambda) + 1.0) * conf;
}

double pac_bayes_bound(const BoundInputs& b) {
    b.validate();
    const double n = static_cast<double>(b.n);
    const double m = static_cast<double>(b.m);
    const double cap = b.Y * b.Y * std::max(n * b.R * b.R / b.lambda, 1.0);
    return b.empirical_risk +
           cap / std::sqrt(m) * (4.5 * std::sqrt(2.0 * n) + std::sqrt(std::log(1.0 / b.delta) / 2.0));
}

BoundInputs estimate_inputs(const FunctionEncoder& enc,
                            const std::vector<std::vector<double>>& probe_inputs,
                            const std::vector<TaskDataset>& tasks, double probe_dt) {
    if (probe_inputs.empty()) throw BoundsError("estimate_inputs: empty probe set");
    double r_hat = 0.0;
    for (const auto& x : probe_inputs) {
        const Matrix phi = enc.basis->features(x, probe_dt);
        r_hat = std::max(r_hat, phi.max_abs());
    }
    double y_hat = 0.0;
    std::size_t m = 0;
    for (const TaskDataset& ds : tasks) {
        m = std::max(m, ds.eval_indices.size());
        for (const auto& y : ds.targets) {
            double norm2 = 0.0;
            for (double v : y) norm2 += v * v;
            y_hat = std::max(y_hat, std::sqrt(norm2));
        }
    }
    BoundInputs b;
    b.n = enc.basis->n_basis();
    b.m = std::max<std::size_t>(m, 1);
    b.lambda = enc.lambda;
    b.R = r_hat;
    b.Y = y_hat;
    b.validate();  // a zero feature map or zero targets is a degenerate model
    return b;
}

BoundReport bound_report(const FunctionEncoder& enc,
                         const std::vector<std::vector<double>>& probe_inputs,
                         const std::vector<TaskDataset>& tasks, double delta,
                         double empirical_risk, double probe_dt) {
    BoundReport rep;
    rep.inputs = estimate_inputs(enc, probe_inputs, tasks, probe_dt);
    rep.inputs.delta = delta;
    rep.inputs.empirical_risk = empirical_risk;
    rep.r_estimated = true;
    rep.y_estimated = true;
    rep.rademacher_complexity = rademacher_complexity(rep.inputs);
    rep.rademacher_bound = rademacher_bound(rep.inputs);
    rep.pac_bayes_bound = pac_bayes_bound(rep.inputs);

    // Injectivity heuristic for the PAC-Bayes hypothesis: the eval-feature
    // Gram (1/m) sum phi^T phi over the probe set must be nonsingular.
    const std::size_t n = enc.basis->n_basis();
    Matrix g(n, n);
    for (const auto& x : probe_inputs) {
        const Matrix phi = enc.basis->features(x, probe_dt);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = j; k < n; ++k) {
                double s = 0.0;
                for (std::size_t r = 0; r < phi.rows(); ++r) s += phi(r, j) * phi(r, k);
                g(j, k) += s;
                if (k != j) g(k, j) = g(j, k);
            }
    }
    const double m = static_cast<double>(probe_inputs.size());
    for (double& v : g.values()) v /= m;
    const EigenDecomposition dec = sym_eig(g);
    rep.injectivity_ok = dec.eigenvalues.back() > 1e-10;
    return rep;
}

std::pair<double, double> coefficient_norm_certificate(const FunctionEncoder& enc,
                                                       const TaskDataset& data) {
    const CoefficientVector c = solve_coefficients(enc, data);
    double norm2 = 0.0;
    for (double v : c) norm2 += v * v;
    const double norm = std::sqrt(norm2);
    double y_hat = 0.0;
    for (std::size_t i : data.eval_indices) {
        double t = 0.0;
        for (double v : data.targets[i]) t += v * v;
        y_hat = std::max(y_hat, std::sqrt(t));
    }
    const double cap = y_hat / std::sqrt(enc.lambda);
    if (norm > cap * (1.0 + 1e-12) + 1e-15) {
        throw BoundsError("coefficient_norm_certificate: cap violated (solver bug)");
    }
    return {norm, cap};
}

}  // namespace fe
