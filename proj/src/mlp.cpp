#include "fe/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "fe/rng.hpp"

namespace fe {

void MlpSpec::validate() const {
    if (input_dim < 1 || output_dim < 1 || n_basis < 1) {
        throw MlpError("MlpSpec: all dims and n_basis must be >= 1");
    }
    for (std::size_t w : hidden_widths) {
        if (w < 1) throw MlpError("MlpSpec: hidden widths must be >= 1");
    }
}

namespace {

std::vector<std::size_t> layer_dims(const MlpSpec& spec) {
    std::vector<std::size_t> dims;
    dims.push_back(spec.input_dim);
    for (std::size_t w : spec.hidden_widths) dims.push_back(w);
    if (spec.architecture == Architecture::multi_headed) {
        dims.push_back(spec.n_basis * spec.output_dim);
    } else {
        dims.push_back(spec.output_dim);
    }
    return dims;
}

void init_core_params(const MlpCore& core, SplitMix64& rng, double* out) {
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < core.dims.size(); ++l) {
        const std::size_t fan_in = core.dims[l];
        const std::size_t fan_out = core.dims[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < fan_out * fan_in + fan_out; ++i) {
            out[off++] = rng.uniform(-bound, bound);
        }
    }
}

}  // namespace

std::size_t MlpCore::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += dims[l + 1] * (dims[l] + 1);
    return n;
}

std::size_t MlpSpec::parameter_count() const {
    MlpCore core{layer_dims(*this), activation};
    const std::size_t per = core.parameter_count();
    return architecture == Architecture::multi_headed ? per : n_basis * per;
}

void MlpCore::forward(const double* params, std::span<const double> x,
                      std::vector<std::vector<double>>& activations) const {
    const std::size_t layers = dims.size() - 1;
    activations.resize(layers + 1);
    activations[0].assign(x.begin(), x.end());
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = dims[l];
        const std::size_t out = dims[l + 1];
        const double* w = params + off;
        const double* b = params + off + out * in;
        off += out * (in + 1);
        const std::vector<double>& a = activations[l];
        std::vector<double>& z = activations[l + 1];
        z.assign(out, 0.0);
        for (std::size_t i = 0; i < out; ++i) {
            double s = b[i];
            const double* wi = w + i * in;
            for (std::size_t j = 0; j < in; ++j) s += wi[j] * a[j];
            z[i] = s;
        }
        if (l + 1 < layers) {
            if (activation == Activation::tanh) {
                for (double& v : z) v = std::tanh(v);
            } else {
                for (double& v : z) v = v > 0.0 ? v : 0.0;
            }
        }
    }
}

void MlpCore::backward(const double* params,
                       const std::vector<std::vector<double>>& activations,
                       std::span<const double> out_grad, double* param_grad,
                       double* in_grad) const {
    const std::size_t layers = dims.size() - 1;
    std::vector<std::size_t> offsets(layers);
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        offsets[l] = off;
        off += dims[l + 1] * (dims[l] + 1);
    }
    std::vector<double> delta(out_grad.begin(), out_grad.end());
    for (std::size_t l = layers; l-- > 0;) {
        const std::size_t in = dims[l];
        const std::size_t out = dims[l + 1];
        const double* w = params + offsets[l];
        const std::vector<double>& a = activations[l];
        double* wg = param_grad + offsets[l];
        double* bg = wg + out * in;
        for (std::size_t i = 0; i < out; ++i) {
            const double d = delta[i];
            if (d != 0.0) {
                double* wgi = wg + i * in;
                for (std::size_t j = 0; j < in; ++j) wgi[j] += d * a[j];
                bg[i] += d;
            }
        }
        if (l == 0 && in_grad == nullptr) break;
        std::vector<double> prev(in, 0.0);
        for (std::size_t i = 0; i < out; ++i) {
            const double d = delta[i];
            if (d == 0.0) continue;
            const double* wi = w + i * in;
            for (std::size_t j = 0; j < in; ++j) prev[j] += d * wi[j];
        }
        if (l > 0) {
            // Chain through the activation feeding layer l.
            const std::vector<double>& av = activations[l];
            if (activation == Activation::tanh) {
                for (std::size_t j = 0; j < in; ++j) prev[j] *= 1.0 - av[j] * av[j];
            } else {
                for (std::size_t j = 0; j < in; ++j) prev[j] *= av[j] > 0.0 ? 1.0 : 0.0;
            }
        }
        if (l == 0) {
            for (std::size_t j = 0; j < in; ++j) in_grad[j] += prev[j];
            break;
        }
        delta = std::move(prev);
    }
}

BasisSet::BasisSet(MlpSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
    spec_.validate();
    core_ = MlpCore{layer_dims(spec_), spec_.activation};
    params_.resize(spec_.parameter_count());
    frozen_.assign(spec_.n_basis, false);
    SplitMix64 rng(seed_);
    if (spec_.architecture == Architecture::multi_headed) {
        init_core_params(core_, rng, params_.data());
    } else {
        const std::size_t per = core_.parameter_count();
        for (std::size_t j = 0; j < spec_.n_basis; ++j) {
            init_core_params(core_, rng, params_.data() + j * per);
        }
    }
}

BasisSet::BasisSet(MlpSpec spec, std::uint64_t seed, std::vector<double> params)
    : spec_(std::move(spec)), seed_(seed), params_(std::move(params)) {
    spec_.validate();
    core_ = MlpCore{layer_dims(spec_), spec_.activation};
    if (params_.size() != spec_.parameter_count()) {
        throw MlpError("BasisSet: parameter count mismatch");
    }
    frozen_.assign(spec_.n_basis, false);
}

std::size_t BasisSet::sub_network_offset(std::size_t basis) const {
    if (spec_.architecture != Architecture::independent) {
        throw MlpError("sub_network_offset: multi_headed has no per-basis sub-network");
    }
    return basis * core_.parameter_count();
}

Matrix BasisSet::features(std::span<const double> x, double /*dt*/) const {
    if (x.size() != spec_.input_dim) throw MlpError("features: input dimension mismatch");
    const std::size_t d = spec_.output_dim;
    const std::size_t n = spec_.n_basis;
    Matrix phi(d, n);
    std::vector<std::vector<double>> acts;
    if (spec_.architecture == Architecture::multi_headed) {
        core_.forward(params_.data(), x, acts);
        const std::vector<double>& out = acts.back();
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < d; ++k) phi(k, j) = out[j * d + k];
    } else {
        const std::size_t per = core_.parameter_count();
        for (std::size_t j = 0; j < n; ++j) {
            core_.forward(params_.data() + j * per, x, acts);
            const std::vector<double>& out = acts.back();
            for (std::size_t k = 0; k < d; ++k) phi(k, j) = out[k];
        }
    }
    return phi;
}

Matrix BasisSet::features_tail(std::span<const double> x, double dt,
                               std::size_t first_col) const {
    if (first_col > spec_.n_basis) throw MlpError("features_tail: column out of range");
    if (spec_.architecture == Architecture::multi_headed) {
        return FeatureMap::features_tail(x, dt, first_col);
    }
    if (x.size() != spec_.input_dim) throw MlpError("features: input dimension mismatch");
    const std::size_t d = spec_.output_dim;
    Matrix phi(d, spec_.n_basis - first_col);
    std::vector<std::vector<double>> acts;
    const std::size_t per = core_.parameter_count();
    for (std::size_t j = first_col; j < spec_.n_basis; ++j) {
        core_.forward(params_.data() + j * per, x, acts);
        for (std::size_t k = 0; k < d; ++k) phi(k, j - first_col) = acts.back()[k];
    }
    return phi;
}

void BasisSet::accumulate_gradient(std::span<const double> x, double /*dt*/,
                                   const Matrix& seed, std::span<double> grad) const {
    if (x.size() != spec_.input_dim) throw MlpError("accumulate_gradient: input mismatch");
    if (seed.rows() != spec_.output_dim || seed.cols() != spec_.n_basis) {
        throw MlpError("accumulate_gradient: seed shape mismatch");
    }
    if (grad.size() != params_.size()) throw MlpError("accumulate_gradient: grad size mismatch");
    const std::size_t d = spec_.output_dim;
    const std::size_t n = spec_.n_basis;
    std::vector<std::vector<double>> acts;
    if (spec_.architecture == Architecture::multi_headed) {
        core_.forward(params_.data(), x, acts);
        std::vector<double> out_grad(n * d);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < d; ++k) out_grad[j * d + k] = seed(k, j);
        core_.backward(params_.data(), acts, out_grad, grad.data(), nullptr);
    } else {
        const std::size_t per = core_.parameter_count();
        std::vector<double> out_grad(d);
        for (std::size_t j = 0; j < n; ++j) {
            bool all_zero = true;
            for (std::size_t k = 0; k < d; ++k) {
                out_grad[k] = seed(k, j);
                all_zero = all_zero && out_grad[k] == 0.0;
            }
            if (all_zero) continue;
            core_.forward(params_.data() + j * per, x, acts);
            core_.backward(params_.data() + j * per, acts, out_grad,
                           grad.data() + j * per, nullptr);
        }
    }
}

void BasisSet::set_frozen(std::size_t basis, bool frozen) {
    if (basis >= spec_.n_basis) throw MlpError("set_frozen: basis index out of range");
    frozen_[basis] = frozen;
}

void BasisSet::scale_basis(std::size_t basis, double s) {
    if (basis >= spec_.n_basis) throw MlpError("scale_basis: index out of range");
    if (!std::isfinite(s)) throw MlpError("scale_basis: scale must be finite");
    const std::size_t layers = core_.dims.size() - 1;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < layers; ++l) off += core_.dims[l + 1] * (core_.dims[l] + 1);
    const std::size_t in = core_.dims[layers - 1];
    const std::size_t out = core_.dims[layers];
    const std::size_t d = spec_.output_dim;
    if (spec_.architecture == Architecture::multi_headed) {
        for (std::size_t i = 0; i < d * in; ++i) params_[off + basis * d * in + i] *= s;
        for (std::size_t i = 0; i < d; ++i) params_[off + out * in + basis * d + i] *= s;
    } else {
        const std::size_t base = basis * core_.parameter_count() + off;
        for (std::size_t i = 0; i < out * in + out; ++i) params_[base + i] *= s;
    }
}

std::vector<std::pair<std::size_t, std::size_t>> BasisSet::basis_param_ranges(
    std::size_t basis) const {
    if (basis >= spec_.n_basis) throw MlpError("basis_param_ranges: index out of range");
    const std::size_t d = spec_.output_dim;
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    if (spec_.architecture == Architecture::independent) {
        const std::size_t per = core_.parameter_count();
        ranges.emplace_back(basis * per, per);
        return ranges;
    }
    // Head layer of the shared net: rows basis*d .. basis*d+d-1 of the final
    // weight matrix, plus the matching biases.
    const std::size_t layers = core_.dims.size() - 1;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < layers; ++l) off += core_.dims[l + 1] * (core_.dims[l] + 1);
    const std::size_t in = core_.dims[layers - 1];
    const std::size_t out = core_.dims[layers];
    ranges.emplace_back(off + basis * d * in, d * in);
    ranges.emplace_back(off + out * in + basis * d, d);
    return ranges;
}

void BasisSet::apply_freeze(std::span<double> grad) const {
    for (std::size_t j = 0; j < spec_.n_basis; ++j) {
        if (!frozen_[j]) continue;
        for (auto [off, len] : basis_param_ranges(j)) {
            std::fill(grad.begin() + off, grad.begin() + off + len, 0.0);
        }
    }
}

std::vector<double> BasisSet::loss_gradient(
    const std::vector<std::pair<std::vector<double>, Matrix>>& batch) const {
    if (batch.empty()) throw MlpError("loss_gradient: empty batch");
    std::vector<double> grad(params_.size(), 0.0);
    for (const auto& [x, seed] : batch) accumulate_gradient(x, 0.0, seed, grad);
    apply_freeze(grad);
    return grad;
}

std::unique_ptr<FeatureMap> BasisSet::pruned(const std::vector<std::size_t>& keep) const {
    if (keep.empty()) throw MlpError("pruned: keep set is empty");
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (keep[i] >= spec_.n_basis) throw MlpError("pruned: index out of range");
        if (i > 0 && keep[i] <= keep[i - 1]) throw MlpError("pruned: keep must be strictly increasing");
    }
    MlpSpec new_spec = spec_;
    new_spec.n_basis = keep.size();
    std::vector<double> new_params(new_spec.parameter_count());
    if (spec_.architecture == Architecture::independent) {
        const std::size_t per = core_.parameter_count();
        for (std::size_t i = 0; i < keep.size(); ++i) {
            std::copy_n(params_.begin() + keep[i] * per, per, new_params.begin() + i * per);
        }
    } else {
        const std::size_t layers = core_.dims.size() - 1;
        std::size_t hidden_bytes = 0;
        for (std::size_t l = 0; l + 1 < layers; ++l)
            hidden_bytes += core_.dims[l + 1] * (core_.dims[l] + 1);
        std::copy_n(params_.begin(), hidden_bytes, new_params.begin());
        const std::size_t in = core_.dims[layers - 1];
        const std::size_t out = core_.dims[layers];
        const std::size_t d = spec_.output_dim;
        double* nw = new_params.data() + hidden_bytes;
        double* nb = nw + keep.size() * d * in;
        const double* ow = params_.data() + hidden_bytes;
        const double* ob = ow + out * in;
        for (std::size_t i = 0; i < keep.size(); ++i) {
            std::copy_n(ow + keep[i] * d * in, d * in, nw + i * d * in);
            std::copy_n(ob + keep[i] * d, d, nb + i * d);
        }
    }
    return std::unique_ptr<FeatureMap>(new BasisSet(new_spec, seed_, std::move(new_params)));
}

std::unique_ptr<FeatureMap> BasisSet::clone() const {
    auto copy = std::unique_ptr<BasisSet>(new BasisSet(spec_, seed_, params_));
    copy->frozen_ = frozen_;
    return copy;
}

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    throw MlpError("unknown activation: " + s);
}

Architecture architecture_from_string(const std::string& s) {
    if (s == "multi_headed") return Architecture::multi_headed;
    if (s == "independent") return Architecture::independent;
    throw MlpError("unknown architecture: " + s);
}

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }
std::string to_string(Architecture a) {
    return a == Architecture::multi_headed ? "multi_headed" : "independent";
}

}  // namespace fe
