#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "fe/encoder.hpp"
#include "fe/mlp.hpp"

namespace fe {

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class StopRule {
    newest_evr,  // stop when the newest component's EVR drops below 1 - tau
    cev,         // stop when the leading b-1 components already reach tau
};

struct TrainConfig {
    std::size_t epochs = 1000;
    double learning_rate = 1e-3;
    std::size_t tasks_per_batch = 0;  // 0 = all tasks in one step
    std::size_t query_batch = 0;      // query points sampled per task per step; 0 = all
    double lambda = 1e-3;
    double tau = 0.99;
    std::uint64_t seed = 0;
    double fine_tune_fraction = 0.1;
    std::size_t max_bases = 10;
    std::size_t initial_bases = 20;
    StopRule stop_rule = StopRule::newest_evr;
    // Progressive training only: how many times a stage's fresh basis is
    // re-initialized and retrained when its newest spectral component falls
    // under the stop threshold. A fresh basis can land in a local minimum
    // that merely duplicates the frozen ones; a restart usually escapes it.
    // Off by default: in low-data regimes where genuine stops sit near the
    // threshold, restarts can let noise through and overgrow the basis.
    std::size_t probe_retries = 0;
    // Ridge used for the coefficient solve inside rank detection (stop rule
    // and prune-rank estimation); 0 means reuse lambda. Training-strength
    // shrinkage suppresses near-collinear directions in the coefficient
    // spectrum, so a smaller detection ridge separates genuine small
    // components from noise more reliably.
    double detect_lambda = 0.0;

    void validate() const;
};

/// Eigen-analysis of the coefficient covariance.
struct SpectrumReport {
    Matrix covariance;
    std::vector<double> eigenvalues;  // descending
    Matrix eigenvectors;
    std::vector<double> evr;  // explained variance ratios
    std::vector<double> cev;  // cumulative explained variance
    std::size_t effective_rank = 0;
};

struct TrainReport {
    std::vector<double> loss_curve;           // per-epoch query MSE
    std::vector<std::size_t> bases_history;   // per-stage basis counts
    SpectrumReport spectrum;                  // final spectrum
    std::vector<std::size_t> selected_indices;
    std::vector<double> stage_wall_seconds;
};

/// Eq-style batch loss: mean over tasks of query MSE plus lambda * ||c||^2.
double fe_loss(const FunctionEncoder& enc, const std::vector<TaskDataset>& tasks,
               const std::vector<CoefficientVector>& coeffs);

Matrix coefficient_covariance(const std::vector<CoefficientVector>& coeffs);

/// Covariance scaled to unit diagonals. Basis amplitudes are arbitrary
/// (halving a basis doubles its coefficients), so raw covariance eigenvalues
/// mostly reflect amplitude choices; the correlation spectrum is
/// scale-invariant and counts the directions the task family actually uses.
Matrix coefficient_correlation(const std::vector<CoefficientVector>& coeffs);

SpectrumReport spectrum(const Matrix& sigma, double tau);

/// Per-basis importance s_p = sum_{i<r} lambda_i U_{pi}^2.
std::vector<double> basis_scores(const SpectrumReport& report);

/// Joint training of all bases; returns the trained encoder and loss curve.
std::pair<FunctionEncoder, TrainReport> joint_train(const FeatureMap& init_basis,
                                                    const std::vector<TaskDataset>& tasks,
                                                    const TrainConfig& cfg);
std::pair<FunctionEncoder, TrainReport> joint_train(const MlpSpec& spec,
                                                    const std::vector<TaskDataset>& tasks,
                                                    const TrainConfig& cfg);

/// Builds a feature map with the given basis count from a fresh seed; used by
/// progressive training to grow the basis set one function at a time.
using BasisFactory =
    std::function<std::unique_ptr<FeatureMap>(std::size_t n_basis, std::uint64_t seed)>;

std::pair<FunctionEncoder, TrainReport> progressive_train(const BasisFactory& factory,
                                                          const std::vector<TaskDataset>& tasks,
                                                          const TrainConfig& cfg);
std::pair<FunctionEncoder, TrainReport> progressive_train(const MlpSpec& spec_template,
                                                          const std::vector<TaskDataset>& tasks,
                                                          const TrainConfig& cfg);

std::pair<FunctionEncoder, TrainReport> train_then_prune(const FeatureMap& init_basis,
                                                         const std::vector<TaskDataset>& tasks,
                                                         const TrainConfig& cfg);
std::pair<FunctionEncoder, TrainReport> train_then_prune(const MlpSpec& spec_template,
                                                         const std::vector<TaskDataset>& tasks,
                                                         const TrainConfig& cfg);

/// Per-task coefficients over the eval subsets, in task order.
std::vector<CoefficientVector> solve_all_coefficients(const FunctionEncoder& enc,
                                                      const std::vector<TaskDataset>& tasks);

/// Adam optimizer state (single writer).
class Adam {
public:
    Adam(std::size_t dim, double lr) : lr_(lr), m_(dim, 0.0), v_(dim, 0.0) {}
    void step(std::span<double> params, std::span<const double> grad);

private:
    double lr_;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::size_t t_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

}  // namespace fe
