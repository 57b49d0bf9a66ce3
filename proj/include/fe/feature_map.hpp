#pragma once

#include <memory>
#include <span>
#include <vector>

#include "fe/matrix.hpp"

namespace fe {

/// Common interface for basis feature maps: a set of n basis functions whose
/// stacked evaluation at x is a d-by-n matrix (column j is basis j). The dt
/// argument carries a per-sample time step for flow-based maps and is ignored
/// by static ones.
class FeatureMap {
public:
    virtual ~FeatureMap() = default;

    virtual std::size_t n_basis() const = 0;
    virtual std::size_t input_dim() const = 0;
    virtual std::size_t output_dim() const = 0;

    virtual Matrix features(std::span<const double> x, double dt) const = 0;

    /// Columns first_col..n-1 of features(x, dt). Maps with per-basis
    /// structure override this to skip the earlier columns.
    virtual Matrix features_tail(std::span<const double> x, double dt,
                                 std::size_t first_col) const {
        const Matrix full = features(x, dt);
        Matrix out(full.rows(), full.cols() - first_col);
        for (std::size_t k = 0; k < out.rows(); ++k)
            for (std::size_t j = 0; j < out.cols(); ++j) out(k, j) = full(k, first_col + j);
        return out;
    }

    /// Accumulates d(loss)/d(parameters) into grad, given the chain-rule seed
    /// d(loss)/d(features) for one input (same shape as features: d-by-n).
    virtual void accumulate_gradient(std::span<const double> x, double dt,
                                     const Matrix& seed,
                                     std::span<double> grad) const = 0;

    virtual std::vector<double>& parameters() = 0;
    virtual const std::vector<double>& parameters() const = 0;

    virtual const std::vector<bool>& frozen_mask() const = 0;
    virtual void set_frozen(std::size_t basis, bool frozen) = 0;

    /// Zeroes all gradient entries owned by frozen bases.
    virtual void apply_freeze(std::span<double> grad) const = 0;

    /// Multiplies basis j's output by s without changing its shape. Flow-based
    /// maps scale the underlying vector field, which scales the produced delta
    /// exactly in the small-step limit.
    virtual void scale_basis(std::size_t basis, double s) = 0;

    /// Returns a map keeping only the listed bases; kept columns reproduce the
    /// original features exactly.
    virtual std::unique_ptr<FeatureMap> pruned(const std::vector<std::size_t>& keep) const = 0;

    virtual std::unique_ptr<FeatureMap> clone() const = 0;
};

}  // namespace fe
