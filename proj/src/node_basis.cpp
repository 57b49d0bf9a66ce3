#include "fe/node_basis.hpp"

#include <cmath>

namespace fe {

namespace {

struct StageTape {
    std::vector<double> input;                       // full model input at the stage point
    std::vector<std::vector<double>> activations;    // MLP tape
    std::vector<double> k;                           // field output
};

struct SubstepTape {
    std::vector<double> u;        // state at substep start
    StageTape stage[4];
};

constexpr double kStageWeight[4] = {1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0};

}  // namespace

NodeBasisSet::NodeBasisSet(BasisSet fields, std::size_t state_offset, std::size_t integrator_steps)
    : fields_(std::move(fields)), state_offset_(state_offset), integrator_steps_(integrator_steps) {
    if (integrator_steps_ < 1) throw MlpError("NodeBasisSet: integrator_steps must be >= 1");
    if (fields_.spec().architecture != Architecture::independent) {
        throw MlpError("NodeBasisSet: fields must use the independent architecture");
    }
    if (state_offset_ + state_dim() > fields_.input_dim()) {
        throw MlpError("NodeBasisSet: state slice exceeds input dimension");
    }
}

// One RK4 substep of field j from state u; records tapes when tape != nullptr.
static std::vector<double> flow_substep(const MlpCore& core, const double* params,
                                        std::span<const double> x_template,
                                        std::size_t state_offset, std::size_t d,
                                        const std::vector<double>& u, double h,
                                        SubstepTape* tape) {
    std::vector<double> input(x_template.begin(), x_template.end());
    std::vector<std::vector<double>> acts;
    std::vector<double> k[4];
    std::vector<double> point = u;
    for (int s = 0; s < 4; ++s) {
        for (std::size_t i = 0; i < d; ++i) input[state_offset + i] = point[i];
        core.forward(params, input, acts);
        k[s] = acts.back();
        for (double v : k[s]) {
            if (!std::isfinite(v)) throw MlpError("node_features: non-finite flow");
        }
        if (tape) {
            tape->stage[s].input = input;
            tape->stage[s].activations = acts;
            tape->stage[s].k = k[s];
        }
        if (s < 3) {
            const double c = s < 2 ? 0.5 * h : h;
            for (std::size_t i = 0; i < d; ++i) point[i] = u[i] + c * k[s][i];
        }
    }
    std::vector<double> next(d);
    for (std::size_t i = 0; i < d; ++i) {
        next[i] = u[i] + h * (kStageWeight[0] * k[0][i] + kStageWeight[1] * k[1][i] +
                              kStageWeight[2] * k[2][i] + kStageWeight[3] * k[3][i]);
    }
    return next;
}

Matrix NodeBasisSet::features(std::span<const double> x, double dt) const {
    return features_tail(x, dt, 0);
}

Matrix NodeBasisSet::features_tail(std::span<const double> x, double dt,
                                   std::size_t first_col) const {
    if (x.size() != input_dim()) throw MlpError("node_features: input dimension mismatch");
    if (dt <= 0.0) throw MlpError("node_features: dt must be > 0");
    if (first_col > n_basis()) throw MlpError("features_tail: column out of range");
    const std::size_t d = state_dim();
    const std::size_t n = n_basis();
    const double h = dt / static_cast<double>(integrator_steps_);
    Matrix phi(d, n - first_col);
    const MlpCore& core = fields_.core();
    for (std::size_t j = first_col; j < n; ++j) {
        const double* params = fields_.parameters().data() + fields_.sub_network_offset(j);
        std::vector<double> u(x.begin() + static_cast<std::ptrdiff_t>(state_offset_),
                              x.begin() + static_cast<std::ptrdiff_t>(state_offset_ + d));
        const std::vector<double> u0 = u;
        for (std::size_t s = 0; s < integrator_steps_; ++s) {
            u = flow_substep(core, params, x, state_offset_, d, u, h, nullptr);
        }
        for (std::size_t i = 0; i < d; ++i) phi(i, j - first_col) = u[i] - u0[i];
    }
    return phi;
}

void NodeBasisSet::accumulate_gradient(std::span<const double> x, double dt, const Matrix& seed,
                                       std::span<double> grad) const {
    if (x.size() != input_dim()) throw MlpError("accumulate_gradient: input mismatch");
    if (seed.rows() != state_dim() || seed.cols() != n_basis()) {
        throw MlpError("accumulate_gradient: seed shape mismatch");
    }
    if (grad.size() != parameters().size()) throw MlpError("accumulate_gradient: grad size mismatch");
    const std::size_t d = state_dim();
    const double h = dt / static_cast<double>(integrator_steps_);
    const MlpCore& core = fields_.core();
    for (std::size_t j = 0; j < n_basis(); ++j) {
        bool all_zero = true;
        for (std::size_t i = 0; i < d; ++i) all_zero = all_zero && seed(i, j) == 0.0;
        if (all_zero) continue;
        const std::size_t offset = fields_.sub_network_offset(j);
        const double* params = fields_.parameters().data() + offset;
        double* pgrad = grad.data() + offset;

        // Forward with tapes.
        std::vector<SubstepTape> tapes(integrator_steps_);
        std::vector<double> u(x.begin() + static_cast<std::ptrdiff_t>(state_offset_),
                              x.begin() + static_cast<std::ptrdiff_t>(state_offset_ + d));
        for (std::size_t s = 0; s < integrator_steps_; ++s) {
            tapes[s].u = u;
            u = flow_substep(core, params, x, state_offset_, d, u, h, &tapes[s]);
        }

        // Reverse through substeps. ubar is d(loss)/d(state after substep).
        std::vector<double> ubar(d);
        for (std::size_t i = 0; i < d; ++i) ubar[i] = seed(i, j);
        std::vector<double> in_grad(fields_.input_dim());
        for (std::size_t s = integrator_steps_; s-- > 0;) {
            const SubstepTape& tape = tapes[s];
            std::vector<double> kbar[4];
            for (int st = 0; st < 4; ++st) {
                kbar[st].assign(d, 0.0);
                for (std::size_t i = 0; i < d; ++i) kbar[st][i] = h * kStageWeight[st] * ubar[i];
            }
            std::vector<double> unew = ubar;  // direct u term of u' = u + ...
            for (int st = 3; st >= 0; --st) {
                std::fill(in_grad.begin(), in_grad.end(), 0.0);
                core.backward(params, tape.stage[st].activations, kbar[st], pgrad, in_grad.data());
                // Stage point: u (st=0), u + h/2 k1, u + h/2 k2, u + h k3.
                const double c = st == 0 ? 0.0 : (st < 3 ? 0.5 * h : h);
                for (std::size_t i = 0; i < d; ++i) {
                    const double xb = in_grad[state_offset_ + i];
                    unew[i] += xb;
                    if (st > 0) kbar[st - 1][i] += c * xb;
                }
            }
            ubar = std::move(unew);
        }
    }
}

std::unique_ptr<FeatureMap> NodeBasisSet::pruned(const std::vector<std::size_t>& keep) const {
    auto sub = fields_.pruned(keep);
    auto* basis = dynamic_cast<BasisSet*>(sub.get());
    return std::make_unique<NodeBasisSet>(std::move(*basis), state_offset_, integrator_steps_);
}

std::unique_ptr<FeatureMap> NodeBasisSet::clone() const {
    return std::make_unique<NodeBasisSet>(*this);
}

std::vector<std::vector<double>> rollout(const FunctionEncoder& enc, const CoefficientVector& c,
                                         std::span<const double> x0, double dt,
                                         std::size_t steps) {
    if (steps < 1) throw EncoderError("rollout: steps must be >= 1");
    const auto* nb = dynamic_cast<const NodeBasisSet*>(enc.basis.get());
    if (nb == nullptr) throw EncoderError("rollout: encoder basis is not a NodeBasisSet");
    const std::size_t d = nb->state_dim();
    const std::size_t off = nb->state_offset();
    std::vector<double> input(x0.begin(), x0.end());
    std::vector<std::vector<double>> traj;
    traj.emplace_back(input.begin() + static_cast<std::ptrdiff_t>(off),
                      input.begin() + static_cast<std::ptrdiff_t>(off + d));
    for (std::size_t s = 0; s < steps; ++s) {
        const std::vector<double> delta = predict(enc, c, input, dt);
        std::vector<double> next(d);
        for (std::size_t i = 0; i < d; ++i) {
            next[i] = input[off + i] + delta[i];
            if (!std::isfinite(next[i])) {
                throw EncoderError("rollout: non-finite state at step " + std::to_string(s));
            }
            input[off + i] = next[i];
        }
        traj.push_back(std::move(next));
    }
    return traj;
}

}  // namespace fe
