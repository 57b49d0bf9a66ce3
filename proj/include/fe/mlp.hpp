#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fe/feature_map.hpp"
#include "fe/matrix.hpp"

namespace fe {

enum class Architecture { multi_headed, independent };
enum class Activation { tanh, relu };

struct MlpError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Architecture description for a set of n MLP basis functions, each mapping
/// input_dim to output_dim. multi_headed shares hidden layers across bases
/// with n*output_dim output heads; independent holds n disjoint networks.
struct MlpSpec {
    std::size_t input_dim = 1;
    std::vector<std::size_t> hidden_widths;
    std::size_t output_dim = 1;
    std::size_t n_basis = 1;
    Architecture architecture = Architecture::independent;
    Activation activation = Activation::tanh;

    void validate() const;
    std::size_t parameter_count() const;
};

/// One plain MLP evaluated against a parameter slice. Layer l holds the
/// weight matrix (dims[l+1] x dims[l]) row-major, then the bias vector.
struct MlpCore {
    std::vector<std::size_t> dims;
    Activation activation = Activation::tanh;

    std::size_t parameter_count() const;

    /// Forward pass; activations[0] is the input copy, activations[l+1] the
    /// post-activation output of layer l (final layer is linear).
    void forward(const double* params, std::span<const double> x,
                 std::vector<std::vector<double>>& activations) const;

    /// Reverse pass. Accumulates into param_grad; writes d(loss)/d(input)
    /// into in_grad when non-null.
    void backward(const double* params,
                  const std::vector<std::vector<double>>& activations,
                  std::span<const double> out_grad, double* param_grad,
                  double* in_grad) const;
};

/// A trained or trainable set of neural basis functions.
class BasisSet final : public FeatureMap {
public:
    BasisSet(MlpSpec spec, std::uint64_t seed);

    const MlpSpec& spec() const { return spec_; }
    std::uint64_t rng_seed() const { return seed_; }

    std::size_t n_basis() const override { return spec_.n_basis; }
    std::size_t input_dim() const override { return spec_.input_dim; }
    std::size_t output_dim() const override { return spec_.output_dim; }

    Matrix features(std::span<const double> x, double dt) const override;
    Matrix features_tail(std::span<const double> x, double dt,
                         std::size_t first_col) const override;
    void accumulate_gradient(std::span<const double> x, double dt, const Matrix& seed,
                             std::span<double> grad) const override;

    std::vector<double>& parameters() override { return params_; }
    const std::vector<double>& parameters() const override { return params_; }

    const std::vector<bool>& frozen_mask() const override { return frozen_; }
    void set_frozen(std::size_t basis, bool frozen) override;
    void scale_basis(std::size_t basis, double s) override;
    void apply_freeze(std::span<double> grad) const override;

    std::unique_ptr<FeatureMap> pruned(const std::vector<std::size_t>& keep) const override;
    std::unique_ptr<FeatureMap> clone() const override;

    /// Gradient of a scalar loss over a batch of (input, seed) pairs, with
    /// frozen-basis entries zeroed.
    std::vector<double> loss_gradient(
        const std::vector<std::pair<std::vector<double>, Matrix>>& batch) const;

    /// Parameter index ranges [offset, offset+length) owned exclusively by
    /// one basis (head rows for multi_headed, whole sub-network otherwise).
    std::vector<std::pair<std::size_t, std::size_t>> basis_param_ranges(std::size_t basis) const;

    /// Core for independent sub-network j (j must be 0 for multi_headed with
    /// the full head layer). Offset is the parameter slice start.
    const MlpCore& core() const { return core_; }
    std::size_t sub_network_offset(std::size_t basis) const;

private:
    BasisSet(MlpSpec spec, std::uint64_t seed, std::vector<double> params);

    MlpSpec spec_;
    std::uint64_t seed_ = 0;
    MlpCore core_;  // shared net (multi_headed) or per-basis net (independent)
    std::vector<double> params_;
    std::vector<bool> frozen_;
};

Activation activation_from_string(const std::string& s);
Architecture architecture_from_string(const std::string& s);
std::string to_string(Activation a);
std::string to_string(Architecture a);

}  // namespace fe
