#pragma once

#include <vector>

#include "fe/encoder.hpp"

namespace fe {

struct BoundsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Inputs to the generalization-bound certificates.
struct BoundInputs {
    std::size_t n = 1;          // basis count
    std::size_t m = 1;          // sample count
    double lambda = 1e-3;       // regularization
    double R = 1.0;             // uniform basis bound sup |psi_j(x)|
    double Y = 1.0;             // uniform target bound
    double delta = 0.05;        // confidence parameter in (0, 1)
    double empirical_risk = 0;  // mean squared error on the sample

    void validate() const;
};

struct BoundReport {
    BoundInputs inputs;
    double rademacher_complexity = 0.0;
    double rademacher_bound = 0.0;
    double pac_bayes_bound = 0.0;
    bool r_estimated = false;
    bool y_estimated = false;
    bool injectivity_ok = true;  // feature-Gram min eigenvalue check
};

/// empirical_risk + 2 Y^2 R sqrt(n/(m lambda)) (R sqrt(n/lambda) + 1)
/// (2 + sqrt(log(1/delta)/2)). delta = 1 is accepted for the log-free case.
double rademacher_bound(const BoundInputs& b);

/// The complexity term Y R sqrt(n/(m lambda)).
double rademacher_complexity(const BoundInputs& b);

/// empirical_risk + A/sqrt(m) (4.5 sqrt(2n) + sqrt(log(1/delta)/2)) with
/// A = Y^2 max(n R^2 / lambda, 1).
double pac_bayes_bound(const BoundInputs& b);

/// Estimates R as the max |psi_j(x)| over probe inputs and Y as the max
/// target norm over tasks; both are sampled maxima, flagged as estimates.
BoundInputs estimate_inputs(const FunctionEncoder& enc,
                            const std::vector<std::vector<double>>& probe_inputs,
                            const std::vector<TaskDataset>& tasks, double probe_dt = 0.0);

/// Full certificate for a model and dataset: estimated inputs, both bounds,
/// and the injectivity heuristic (eval-feature Gram min eigenvalue > 1e-10).
BoundReport bound_report(const FunctionEncoder& enc,
                         const std::vector<std::vector<double>>& probe_inputs,
                         const std::vector<TaskDataset>& tasks, double delta,
                         double empirical_risk, double probe_dt = 0.0);

/// Returns (||c||_2, Y/sqrt(lambda)) and throws if the cap is violated.
std::pair<double, double> coefficient_norm_certificate(const FunctionEncoder& enc,
                                                       const TaskDataset& data);

}  // namespace fe
