#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fe/encoder.hpp"
#include "fe/mlp.hpp"
#include "fe/training.hpp"

namespace fe {

enum class KernelKind { rbf_ard, linear };

/// Deep kernel: a feature network feeding an RBF-ARD or linear base kernel,
/// trained per task by backpropagating through the kernel ridge solve.
class DeepKernelModel {
public:
    /// embed_dim is the feature-net output dimension d (and the number of ARD
    /// lengthscales for rbf_ard).
    DeepKernelModel(MlpSpec feature_spec, KernelKind kind, double lambda, std::uint64_t seed);

    KernelKind kind() const { return kind_; }
    double lambda() const { return lambda_; }
    const BasisSet& feature_net() const { return net_; }
    std::size_t embed_dim() const { return net_.output_dim(); }

    std::vector<double> embed(std::span<const double> x) const;
    double kernel_value(std::span<const double> za, std::span<const double> zb) const;

    /// Lengthscales are stored as log-values; exposed here as ell_j.
    std::vector<double> lengthscales() const;
    double output_scale() const;  // sigma^2

    /// Flat trainable parameters: [net | log ell | log sigma^2].
    std::vector<double> flat_parameters() const;
    void set_flat_parameters(std::span<const double> p);
    std::size_t flat_parameter_count() const;

    Matrix kernel_matrix(const std::vector<std::vector<double>>& a,
                         const std::vector<std::vector<double>>& b) const;

    friend struct DklTrainer;

private:
    BasisSet net_;
    KernelKind kind_;
    double lambda_;
    std::vector<double> log_ell_;
    double log_sigma2_ = 0.0;
};

/// Fits KRR on the eval subset ((K_EE + lambda I) alpha = y_E) and predicts
/// K_QE alpha at the query inputs. Scalar targets.
std::vector<double> krr_fit_predict(const DeepKernelModel& model, const TaskDataset& eval_data,
                                    const std::vector<std::vector<double>>& query_inputs);

struct DklReport {
    std::vector<double> loss_curve;
    std::vector<double> step_wall_seconds;
};

/// Gradient of the mean query MSE with respect to the flat parameters,
/// backpropagated through the ridge solve; exposed for finite-difference
/// checks. Also returns the loss value.
std::pair<double, std::vector<double>> dkl_loss_gradient(const DeepKernelModel& model,
                                                         const std::vector<TaskDataset>& tasks);

std::pair<DeepKernelModel, DklReport> dkl_train(DeepKernelModel model,
                                                const std::vector<TaskDataset>& tasks,
                                                const TrainConfig& cfg);

struct GramSimilarity {
    double correlation = 0.0;
    std::vector<double> spectrum1;
    std::vector<double> spectrum2;
};

/// Pearson correlation of upper-triangle entries after scaling each matrix to
/// unit Frobenius norm, plus the two spectra.
GramSimilarity gram_compare(const Matrix& k1, const Matrix& k2);

}  // namespace fe
