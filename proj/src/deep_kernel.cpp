#include "fe/deep_kernel.hpp"

#include <chrono>
#include <cmath>

namespace fe {

DeepKernelModel::DeepKernelModel(MlpSpec feature_spec, KernelKind kind, double lambda,
                                 std::uint64_t seed)
    : net_([&] {
          feature_spec.n_basis = 1;
          feature_spec.architecture = Architecture::multi_headed;
          return BasisSet(feature_spec, seed);
      }()),
      kind_(kind),
      lambda_(lambda) {
    if (lambda_ <= 0.0) throw TrainingError("DeepKernelModel: lambda must be > 0");
    log_ell_.assign(embed_dim(), 0.0);  // ell = 1
}

std::vector<double> DeepKernelModel::embed(std::span<const double> x) const {
    const Matrix phi = net_.features(x, 0.0);
    std::vector<double> z(phi.rows());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = phi(i, 0);
    return z;
}

std::vector<double> DeepKernelModel::lengthscales() const {
    std::vector<double> out(log_ell_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(log_ell_[i]);
    return out;
}

double DeepKernelModel::output_scale() const { return std::exp(log_sigma2_); }

double DeepKernelModel::kernel_value(std::span<const double> za,
                                     std::span<const double> zb) const {
    if (kind_ == KernelKind::linear) {
        double s = 0.0;
        for (std::size_t j = 0; j < za.size(); ++j) s += za[j] * zb[j];
        return s;
    }
    double q = 0.0;
    for (std::size_t j = 0; j < za.size(); ++j) {
        const double ell = std::exp(log_ell_[j]);
        const double u = (za[j] - zb[j]) / ell;
        q += u * u;
    }
    return std::exp(log_sigma2_) * std::exp(-0.5 * q);
}

std::size_t DeepKernelModel::flat_parameter_count() const {
    return net_.parameters().size() + log_ell_.size() + 1;
}

std::vector<double> DeepKernelModel::flat_parameters() const {
    std::vector<double> p = net_.parameters();
    p.insert(p.end(), log_ell_.begin(), log_ell_.end());
    p.push_back(log_sigma2_);
    return p;
}

void DeepKernelModel::set_flat_parameters(std::span<const double> p) {
    if (p.size() != flat_parameter_count()) {
        throw TrainingError("set_flat_parameters: size mismatch");
    }
    const std::size_t np = net_.parameters().size();
    std::copy_n(p.begin(), np, net_.parameters().begin());
    std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(np), log_ell_.size(), log_ell_.begin());
    log_sigma2_ = p.back();
}

Matrix DeepKernelModel::kernel_matrix(const std::vector<std::vector<double>>& a,
                                      const std::vector<std::vector<double>>& b) const {
    std::vector<std::vector<double>> za(a.size()), zb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) za[i] = embed(a[i]);
    for (std::size_t i = 0; i < b.size(); ++i) zb[i] = embed(b[i]);
    Matrix k(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) k(i, j) = kernel_value(za[i], zb[j]);
    return k;
}

std::vector<double> krr_fit_predict(const DeepKernelModel& model, const TaskDataset& eval_data,
                                    const std::vector<std::vector<double>>& query_inputs) {
    if (eval_data.eval_indices.empty()) throw TrainingError("krr_fit_predict: empty eval set");
    std::vector<std::vector<double>> xe;
    const std::size_t m = eval_data.eval_indices.size();
    Matrix y(m, 1);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t idx = eval_data.eval_indices[i];
        xe.push_back(eval_data.inputs[idx]);
        y(i, 0) = eval_data.targets[idx][0];
    }
    Matrix kee = model.kernel_matrix(xe, xe);
    for (std::size_t i = 0; i < m; ++i) kee(i, i) += model.lambda();
    const Matrix alpha = spd_solve(kee, y);
    const Matrix kqe = model.kernel_matrix(query_inputs, xe);
    std::vector<double> pred(query_inputs.size(), 0.0);
    for (std::size_t q = 0; q < pred.size(); ++q) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += kqe(q, i) * alpha(i, 0);
        pred[q] = s;
    }
    return pred;
}

namespace {

struct EmbedTape {
    std::vector<std::vector<double>> activations;
    std::vector<double> z;
};

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

std::pair<double, std::vector<double>> dkl_loss_gradient(const DeepKernelModel& model,
                                                         const std::vector<TaskDataset>& tasks) {
    if (tasks.empty()) throw TrainingError("dkl_loss_gradient: no tasks");
    const std::size_t d = model.embed_dim();
    const std::size_t np = model.feature_net().parameters().size();
    std::vector<double> grad(model.flat_parameter_count(), 0.0);
    double* net_grad = grad.data();
    double* ell_grad = grad.data() + np;
    double* sigma_grad = grad.data() + np + d;
    const std::vector<double> ell = model.lengthscales();
    double loss = 0.0;

    for (const TaskDataset& ds : tasks) {
        const std::size_t m = ds.eval_indices.size();
        const std::size_t q = ds.query_indices.size();
        if (m == 0 || q == 0) throw TrainingError("dkl_loss_gradient: empty eval or query set");

        // Forward with per-point tapes.
        std::vector<EmbedTape> te(m), tq(q);
        Matrix ye(m, 1);
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t idx = ds.eval_indices[i];
            model.feature_net().core().forward(model.feature_net().parameters().data(),
                                               ds.inputs[idx], te[i].activations);
            te[i].z = te[i].activations.back();
            ye(i, 0) = ds.targets[idx][0];
        }
        for (std::size_t i = 0; i < q; ++i) {
            model.feature_net().core().forward(model.feature_net().parameters().data(),
                                               ds.inputs[ds.query_indices[i]], tq[i].activations);
            tq[i].z = tq[i].activations.back();
        }
        Matrix kee(m, m), kqe(q, m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) kee(i, j) = model.kernel_value(te[i].z, te[j].z);
        Matrix a = kee;
        for (std::size_t i = 0; i < m; ++i) a(i, i) += model.lambda();
        const Matrix l = cholesky(a);
        const Matrix alpha = cholesky_solve(l, ye);
        for (std::size_t i = 0; i < q; ++i)
            for (std::size_t j = 0; j < m; ++j) kqe(i, j) = model.kernel_value(tq[i].z, te[j].z);

        std::vector<double> err(q);
        const double scale = 2.0 / (static_cast<double>(tasks.size()) * static_cast<double>(q));
        for (std::size_t i = 0; i < q; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += kqe(i, j) * alpha(j, 0);
            err[i] = s - ds.targets[ds.query_indices[i]][0];
            loss += err[i] * err[i] /
                    (static_cast<double>(tasks.size()) * static_cast<double>(q));
        }

        // Adjoint of the solve: beta = (K_EE + lambda I)^{-1} (K_QE^T scale*err),
        // then dL/dK_EE[i][j] = -beta_i alpha_j.
        Matrix galpha(m, 1);
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < q; ++i) s += kqe(i, j) * scale * err[i];
            galpha(j, 0) = s;
        }
        const Matrix beta = cholesky_solve(l, galpha);

        // Chain each kernel entry's adjoint into embeddings and kernel params.
        std::vector<std::vector<double>> ze_grad(m, std::vector<double>(d, 0.0));
        std::vector<std::vector<double>> zq_grad(q, std::vector<double>(d, 0.0));
        auto chain_pair = [&](double gk, const std::vector<double>& za,
                              const std::vector<double>& zb, std::vector<double>& ga,
                              std::vector<double>& gb, double kval) {
            if (model.kind() == KernelKind::linear) {
                for (std::size_t j = 0; j < d; ++j) {
                    ga[j] += gk * zb[j];
                    gb[j] += gk * za[j];
                }
                return;
            }
            for (std::size_t j = 0; j < d; ++j) {
                const double u = (za[j] - zb[j]) / (ell[j] * ell[j]);
                ga[j] += gk * kval * (-u);
                gb[j] += gk * kval * u;
                ell_grad[j] += gk * kval * (za[j] - zb[j]) * (za[j] - zb[j]) / (ell[j] * ell[j]);
            }
            *sigma_grad += gk * kval;
        };
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                const double gk = -beta(i, 0) * alpha(j, 0);
                if (gk != 0.0) chain_pair(gk, te[i].z, te[j].z, ze_grad[i], ze_grad[j], kee(i, j));
            }
        }
        for (std::size_t i = 0; i < q; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                const double gk = scale * err[i] * alpha(j, 0);
                if (gk != 0.0) chain_pair(gk, tq[i].z, te[j].z, zq_grad[i], ze_grad[j], kqe(i, j));
            }
        }
        for (std::size_t i = 0; i < m; ++i) {
            model.feature_net().core().backward(model.feature_net().parameters().data(),
                                                te[i].activations, ze_grad[i], net_grad, nullptr);
        }
        for (std::size_t i = 0; i < q; ++i) {
            model.feature_net().core().backward(model.feature_net().parameters().data(),
                                                tq[i].activations, zq_grad[i], net_grad, nullptr);
        }
    }
    if (model.kind() == KernelKind::linear) {
        // No kernel hyperparameters in the linear case.
        std::fill(ell_grad, ell_grad + d + 1, 0.0);
    }
    return {loss, grad};
}

std::pair<DeepKernelModel, DklReport> dkl_train(DeepKernelModel model,
                                                const std::vector<TaskDataset>& tasks,
                                                const TrainConfig& cfg) {
    cfg.validate();
    DklReport report;
    std::vector<double> params = model.flat_parameters();
    Adam opt(params.size(), cfg.learning_rate);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double t0 = now_seconds();
        auto [loss, grad] = dkl_loss_gradient(model, tasks);
        if (!std::isfinite(loss)) {
            throw TrainingError("dkl_train diverged at epoch " + std::to_string(epoch));
        }
        opt.step(params, grad);
        model.set_flat_parameters(params);
        report.step_wall_seconds.push_back(now_seconds() - t0);
        report.loss_curve.push_back(loss);
    }
    return {std::move(model), report};
}

GramSimilarity gram_compare(const Matrix& k1, const Matrix& k2) {
    if (k1.rows() != k2.rows() || k1.cols() != k2.cols() || k1.rows() != k1.cols()) {
        throw TrainingError("gram_compare: shape mismatch");
    }
    check_symmetric(k1, 1e-8, "gram_compare: first matrix");
    check_symmetric(k2, 1e-8, "gram_compare: second matrix");
    auto frob = [](const Matrix& k) {
        double s = 0.0;
        for (double v : k.values()) s += v * v;
        return std::sqrt(s);
    };
    const double f1 = frob(k1);
    const double f2 = frob(k2);
    if (f1 == 0.0 || f2 == 0.0) throw TrainingError("gram_compare: zero matrix");
    std::vector<double> u1, u2;
    for (std::size_t i = 0; i < k1.rows(); ++i) {
        for (std::size_t j = i; j < k1.cols(); ++j) {
            u1.push_back(k1(i, j) / f1);
            u2.push_back(k2(i, j) / f2);
        }
    }
    const double n = static_cast<double>(u1.size());
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < u1.size(); ++i) {
        m1 += u1[i];
        m2 += u2[i];
    }
    m1 /= n;
    m2 /= n;
    double num = 0.0, s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < u1.size(); ++i) {
        num += (u1[i] - m1) * (u2[i] - m2);
        s1 += (u1[i] - m1) * (u1[i] - m1);
        s2 += (u2[i] - m2) * (u2[i] - m2);
    }
    GramSimilarity sim;
    sim.correlation = num / std::sqrt(s1 * s2);
    sim.spectrum1 = sym_eig(k1).eigenvalues;
    sim.spectrum2 = sym_eig(k2).eigenvalues;
    return sim;
}

}  // namespace fe
