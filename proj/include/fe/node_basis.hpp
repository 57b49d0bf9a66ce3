#pragma once

#include <memory>

#include "fe/encoder.hpp"
#include "fe/mlp.hpp"

namespace fe {

/// Basis functions defined by learned vector fields: basis j maps a model
/// input (state plus static extras such as system parameters) and a time step
/// to the RK4 flow of its field over dt, minus the starting state. The delta
/// prediction sum_j c_j psi_j(x, dt) is linear in c, so the closed-form
/// coefficient solve applies unchanged.
class NodeBasisSet final : public FeatureMap {
public:
    /// fields: independent-architecture basis whose sub-network j is the
    /// vector field g_j (full model input -> state derivative).
    /// state_offset: index of the state slice within the model input.
    NodeBasisSet(BasisSet fields, std::size_t state_offset, std::size_t integrator_steps = 1);

    const BasisSet& fields() const { return fields_; }
    std::size_t state_dim() const { return fields_.output_dim(); }
    std::size_t state_offset() const { return state_offset_; }
    std::size_t integrator_steps() const { return integrator_steps_; }

    std::size_t n_basis() const override { return fields_.n_basis(); }
    std::size_t input_dim() const override { return fields_.input_dim(); }
    std::size_t output_dim() const override { return fields_.output_dim(); }

    Matrix features(std::span<const double> x, double dt) const override;
    Matrix features_tail(std::span<const double> x, double dt,
                         std::size_t first_col) const override;
    void accumulate_gradient(std::span<const double> x, double dt, const Matrix& seed,
                             std::span<double> grad) const override;

    std::vector<double>& parameters() override { return fields_.parameters(); }
    const std::vector<double>& parameters() const override { return fields_.parameters(); }
    const std::vector<bool>& frozen_mask() const override { return fields_.frozen_mask(); }
    void set_frozen(std::size_t basis, bool frozen) override { fields_.set_frozen(basis, frozen); }
    void scale_basis(std::size_t basis, double s) override { fields_.scale_basis(basis, s); }
    void apply_freeze(std::span<double> grad) const override { fields_.apply_freeze(grad); }

    std::unique_ptr<FeatureMap> pruned(const std::vector<std::size_t>& keep) const override;
    std::unique_ptr<FeatureMap> clone() const override;

private:
    BasisSet fields_;
    std::size_t state_offset_ = 0;
    std::size_t integrator_steps_ = 1;
};

/// Iterates x_{t+1} = x_t + sum_j c_j psi_j(x_t, dt); returns the predicted
/// state sequence (steps+1 entries including the initial state). x0 is the
/// full model input; extras stay fixed along the rollout.
std::vector<std::vector<double>> rollout(const FunctionEncoder& enc, const CoefficientVector& c,
                                         std::span<const double> x0, double dt,
                                         std::size_t steps);

}  // namespace fe
