#include "fe/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "fe/rng.hpp"

namespace fe {

void TrainConfig::validate() const {
    if (epochs < 1) throw TrainingError("TrainConfig: epochs must be >= 1");
    if (learning_rate <= 0.0) throw TrainingError("TrainConfig: learning_rate must be > 0");
    if (lambda <= 0.0) throw TrainingError("TrainConfig: lambda must be > 0");
    if (tau <= 0.0 || tau > 1.0) throw TrainingError("TrainConfig: tau must be in (0, 1]");
    if (max_bases < 1) throw TrainingError("TrainConfig: max_bases must be >= 1");
    if (initial_bases < 1) throw TrainingError("TrainConfig: initial_bases must be >= 1");
    if (fine_tune_fraction < 0.0) throw TrainingError("TrainConfig: fine_tune_fraction < 0");
    if (detect_lambda < 0.0) throw TrainingError("TrainConfig: detect_lambda must be >= 0");
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
    }
}

double fe_loss(const FunctionEncoder& enc, const std::vector<TaskDataset>& tasks,
               const std::vector<CoefficientVector>& coeffs) {
    if (tasks.empty()) throw TrainingError("fe_loss: no tasks");
    if (tasks.size() != coeffs.size()) throw TrainingError("fe_loss: coeffs/tasks mismatch");
    double total = 0.0;
    for (std::size_t j = 0; j < tasks.size(); ++j) {
        const TaskDataset& ds = tasks[j];
        const CoefficientVector& c = coeffs[j];
        double mse = 0.0;
        for (std::size_t i : ds.query_indices) {
            const std::vector<double> pred = predict(enc, c, ds.inputs[i], ds.dt(i));
            for (std::size_t k = 0; k < pred.size(); ++k) {
                const double e = pred[k] - ds.targets[i][k];
                mse += e * e;
            }
        }
        mse /= static_cast<double>(ds.query_indices.size());
        double cnorm2 = 0.0;
        for (double v : c) cnorm2 += v * v;
        total += mse + enc.lambda * cnorm2;
    }
    return total / static_cast<double>(tasks.size());
}

std::vector<CoefficientVector> solve_all_coefficients(const FunctionEncoder& enc,
                                                      const std::vector<TaskDataset>& tasks) {
    std::vector<CoefficientVector> out;
    out.reserve(tasks.size());
    for (const TaskDataset& ds : tasks) out.push_back(solve_coefficients(enc, ds));
    return out;
}

Matrix coefficient_covariance(const std::vector<CoefficientVector>& coeffs) {
    if (coeffs.size() < 2) throw TrainingError("coefficient_covariance: need N >= 2");
    const std::size_t n = coeffs.front().size();
    const double count = static_cast<double>(coeffs.size());
    std::vector<double> mean(n, 0.0);
    for (const auto& c : coeffs) {
        if (c.size() != n) throw TrainingError("coefficient_covariance: length mismatch");
        for (std::size_t i = 0; i < n; ++i) mean[i] += c[i];
    }
    for (double& v : mean) v /= count;
    Matrix sigma(n, n);
    for (const auto& c : coeffs) {
        for (std::size_t i = 0; i < n; ++i) {
            const double di = c[i] - mean[i];
            for (std::size_t k = i; k < n; ++k) sigma(i, k) += di * (c[k] - mean[k]);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = i; k < n; ++k) {
            sigma(i, k) /= count - 1.0;
            sigma(k, i) = sigma(i, k);
        }
    }
    return sigma;
}

SpectrumReport spectrum(const Matrix& sigma, double tau) {
    if (tau <= 0.0 || tau > 1.0) throw TrainingError("spectrum: tau must be in (0, 1]");
    SpectrumReport rep;
    rep.covariance = sigma;
    EigenDecomposition dec = sym_eig(sigma);
    rep.eigenvalues = dec.eigenvalues;
    rep.eigenvectors = std::move(dec.eigenvectors);
    const std::size_t b = rep.eigenvalues.size();
    rep.evr.assign(b, 0.0);
    rep.cev.assign(b, 0.0);
    double total = 0.0;
    double max_ev = 0.0;
    for (double l : rep.eigenvalues) {
        max_ev = std::max(max_ev, l);
        total += std::max(l, 0.0);
    }
    if (max_ev <= 1e-14) {
        rep.effective_rank = 0;
        return rep;
    }
    double running = 0.0;
    rep.effective_rank = b;
    for (std::size_t i = 0; i < b; ++i) {
        rep.evr[i] = std::max(rep.eigenvalues[i], 0.0) / total;
        running += rep.evr[i];
        rep.cev[i] = running;
        if (rep.effective_rank == b && rep.cev[i] >= tau && i + 1 < rep.effective_rank) {
            rep.effective_rank = i + 1;
        }
    }
    return rep;
}

std::vector<double> basis_scores(const SpectrumReport& report) {
    if (report.effective_rank < 1) throw TrainingError("basis_scores: effective rank is 0");
    const std::size_t b = report.eigenvalues.size();
    std::vector<double> scores(b, 0.0);
    for (std::size_t p = 0; p < b; ++p) {
        double s = 0.0;
        for (std::size_t i = 0; i < report.effective_rank; ++i) {
            const double u = report.eigenvectors(p, i);
            s += report.eigenvalues[i] * u * u;
        }
        scores[p] = s;
    }
    return scores;
}

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// Wraps a map whose leading `prefix` bases are frozen: their feature columns
// are constant across a training stage, so they are computed once per sample
// (keyed by the sample's storage address) while only the trailing trainable
// columns are re-evaluated.
class FrozenPrefixCache final : public FeatureMap {
public:
    FrozenPrefixCache(FeatureMap& inner, std::size_t prefix) : inner_(inner), prefix_(prefix) {}

    std::size_t n_basis() const override { return inner_.n_basis(); }
    std::size_t input_dim() const override { return inner_.input_dim(); }
    std::size_t output_dim() const override { return inner_.output_dim(); }

    Matrix features(std::span<const double> x, double dt) const override {
        if (prefix_ == 0) return inner_.features(x, dt);
        const auto it = cache_.find(x.data());
        if (it == cache_.end()) {
            Matrix full = inner_.features(x, dt);
            Matrix block(full.rows(), prefix_);
            for (std::size_t k = 0; k < full.rows(); ++k)
                for (std::size_t j = 0; j < prefix_; ++j) block(k, j) = full(k, j);
            cache_.emplace(x.data(), std::move(block));
            return full;
        }
        const Matrix& block = it->second;
        const Matrix tail = inner_.features_tail(x, dt, prefix_);
        Matrix full(block.rows(), inner_.n_basis());
        for (std::size_t k = 0; k < full.rows(); ++k) {
            for (std::size_t j = 0; j < prefix_; ++j) full(k, j) = block(k, j);
            for (std::size_t j = 0; j < tail.cols(); ++j) full(k, prefix_ + j) = tail(k, j);
        }
        return full;
    }

    void accumulate_gradient(std::span<const double> x, double dt, const Matrix& seed,
                             std::span<double> grad) const override {
        inner_.accumulate_gradient(x, dt, seed, grad);
    }
    std::vector<double>& parameters() override { return inner_.parameters(); }
    const std::vector<double>& parameters() const override { return inner_.parameters(); }
    const std::vector<bool>& frozen_mask() const override { return inner_.frozen_mask(); }
    void set_frozen(std::size_t basis, bool frozen) override { inner_.set_frozen(basis, frozen); }
    void apply_freeze(std::span<double> grad) const override { inner_.apply_freeze(grad); }
    void scale_basis(std::size_t basis, double s) override { inner_.scale_basis(basis, s); }
    std::unique_ptr<FeatureMap> pruned(const std::vector<std::size_t>& keep) const override {
        return inner_.pruned(keep);
    }
    std::unique_ptr<FeatureMap> clone() const override { return inner_.clone(); }

private:
    FeatureMap& inner_;
    std::size_t prefix_;
    mutable std::unordered_map<const double*, Matrix> cache_;
};

// Runs `epochs` optimizer steps over the task collection, appending the
// per-epoch query MSE to report.loss_curve. Coefficients are re-solved from
// scratch each batch and treated as constants during backpropagation.
void train_in_place(FeatureMap& fm, const std::vector<TaskDataset>& tasks,
                    const TrainConfig& cfg, std::size_t epochs, Adam& opt,
                    std::vector<double>& loss_curve, std::uint64_t stream) {
    if (tasks.empty()) throw TrainingError("training: no tasks");
    const std::size_t n_tasks = tasks.size();
    const std::size_t batch_tasks =
        cfg.tasks_per_batch == 0 ? n_tasks : std::min(cfg.tasks_per_batch, n_tasks);
    const std::size_t d = fm.output_dim();
    const std::vector<bool>& frozen = fm.frozen_mask();
    std::size_t prefix = 0;
    while (prefix < frozen.size() && frozen[prefix]) ++prefix;
    FrozenPrefixCache cached(fm, prefix);
    FunctionEncoder enc(std::shared_ptr<const FeatureMap>(&cached, [](const FeatureMap*) {}),
                        cfg.lambda);
    std::vector<double> grad(fm.parameters().size());
    std::vector<std::size_t> task_order(n_tasks);
    std::iota(task_order.begin(), task_order.end(), 0);

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        SplitMix64 rng(mix_seed(cfg.seed ^ stream, epoch));
        // Task order is shuffled only when batching; full-batch runs keep a
        // fixed order for reproducible curves.
        if (batch_tasks < n_tasks) {
            for (std::size_t i = n_tasks; i-- > 1;) {
                const std::size_t j = rng.next() % (i + 1);
                std::swap(task_order[i], task_order[j]);
            }
        }
        double epoch_sq = 0.0;
        std::size_t epoch_pts = 0;
        for (std::size_t start = 0; start < n_tasks; start += batch_tasks) {
            const std::size_t stop = std::min(start + batch_tasks, n_tasks);
            std::fill(grad.begin(), grad.end(), 0.0);
            const double task_count = static_cast<double>(stop - start);
            for (std::size_t bi = start; bi < stop; ++bi) {
                const TaskDataset& ds = tasks[task_order[bi]];
                const CoefficientVector c = solve_coefficients(enc, ds);
                // Query subset for this step.
                std::vector<std::size_t> pts;
                if (cfg.query_batch == 0 || cfg.query_batch >= ds.query_indices.size()) {
                    pts = ds.query_indices;
                } else {
                    pts.reserve(cfg.query_batch);
                    for (std::size_t k = 0; k < cfg.query_batch; ++k) {
                        pts.push_back(ds.query_indices[rng.next() % ds.query_indices.size()]);
                    }
                }
                const double scale = 2.0 / (task_count * static_cast<double>(pts.size()));
                Matrix seed_mat(d, fm.n_basis());
                for (std::size_t i : pts) {
                    const Matrix phi = cached.features(ds.inputs[i], ds.dt(i));
                    std::vector<double> err(d);
                    for (std::size_t k = 0; k < d; ++k) {
                        double pred = 0.0;
                        for (std::size_t j = 0; j < c.size(); ++j) pred += phi(k, j) * c[j];
                        err[k] = pred - ds.targets[i][k];
                        epoch_sq += err[k] * err[k];
                    }
                    ++epoch_pts;
                    for (std::size_t k = 0; k < d; ++k)
                        for (std::size_t j = 0; j < c.size(); ++j)
                            seed_mat(k, j) = frozen[j] ? 0.0 : scale * err[k] * c[j];
                    fm.accumulate_gradient(ds.inputs[i], ds.dt(i), seed_mat, grad);
                }
            }
            fm.apply_freeze(grad);
            opt.step(fm.parameters(), grad);
        }
        const double mse = epoch_sq / static_cast<double>(epoch_pts);
        if (!std::isfinite(mse)) {
            throw TrainingError("training diverged: non-finite loss at epoch " +
                                std::to_string(epoch));
        }
        loss_curve.push_back(mse);
    }
}

}  // namespace

Matrix coefficient_correlation(const std::vector<CoefficientVector>& coeffs) {
    const Matrix cov = coefficient_covariance(coeffs);
    const std::size_t n = cov.rows();
    std::vector<double> sd(n);
    for (std::size_t i = 0; i < n; ++i) sd[i] = std::sqrt(std::max(cov(i, i), 0.0));
    Matrix corr(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        // A basis whose coefficient never varies carries no direction; its
        // row stays zero so it contributes a zero eigenvalue.
        if (sd[i] <= 1e-150) continue;
        for (std::size_t j = 0; j < n; ++j) {
            if (sd[j] <= 1e-150) continue;
            corr(i, j) = cov(i, j) / (sd[i] * sd[j]);
        }
    }
    return corr;
}

std::pair<FunctionEncoder, TrainReport> joint_train(const FeatureMap& init_basis,
                                                    const std::vector<TaskDataset>& tasks,
                                                    const TrainConfig& cfg) {
    cfg.validate();
    std::shared_ptr<FeatureMap> fm(init_basis.clone());
    TrainReport report;
    Adam opt(fm->parameters().size(), cfg.learning_rate);
    const double t0 = now_seconds();
    train_in_place(*fm, tasks, cfg, cfg.epochs, opt, report.loss_curve, 0);
    report.stage_wall_seconds.push_back(now_seconds() - t0);
    report.bases_history.push_back(fm->n_basis());
    FunctionEncoder enc(fm, cfg.lambda);
    if (tasks.size() >= 2) {
        report.spectrum =
            spectrum(coefficient_correlation(solve_all_coefficients(enc, tasks)), cfg.tau);
    }
    return {enc, report};
}

std::pair<FunctionEncoder, TrainReport> joint_train(const MlpSpec& spec,
                                                    const std::vector<TaskDataset>& tasks,
                                                    const TrainConfig& cfg) {
    return joint_train(BasisSet(spec, cfg.seed), tasks, cfg);
}

std::pair<FunctionEncoder, TrainReport> progressive_train(const BasisFactory& factory,
                                                          const std::vector<TaskDataset>& tasks,
                                                          const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.max_bases < 2) throw TrainingError("progressive_train: max_bases must be >= 2");
    if (tasks.size() < 2) throw TrainingError("progressive_train: need at least 2 tasks");

    TrainReport report;
    std::shared_ptr<FeatureMap> current;
    std::shared_ptr<FeatureMap> previous;
    SpectrumReport previous_spectrum;

    for (std::size_t b = 1; b <= cfg.max_bases; ++b) {
        const double t0 = now_seconds();
        bool accepted = false;
        // A fresh basis can settle into a local minimum that only duplicates
        // the frozen prefix, which would trigger a premature stop. Each stage
        // therefore gets a few re-initializations before a stop is accepted;
        // stage 1 and a run out of genuine directions are unaffected (the
        // newest component stays far under threshold for every restart).
        const std::size_t attempts = b >= 2 ? cfg.probe_retries + 1 : 1;
        for (std::size_t attempt = 0; attempt < attempts; ++attempt) {
            std::unique_ptr<FeatureMap> grown =
                factory(b, mix_seed(cfg.seed, (attempt + 1) * 1000 + b));
            if (grown->parameters().size() % b != 0) {
                throw TrainingError("progressive_train: parameter layout is not per-basis blocks");
            }
            if (current) {
                // Carry over bases 1..b-1; only the new block keeps its fresh init.
                const std::vector<double>& old = current->parameters();
                std::copy(old.begin(), old.end(), grown->parameters().begin());
            }
            for (std::size_t j = 0; j + 1 < b; ++j) grown->set_frozen(j, true);
            std::shared_ptr<FeatureMap> fm(std::move(grown));

            Adam opt(fm->parameters().size(), cfg.learning_rate);
            train_in_place(*fm, tasks, cfg, cfg.epochs, opt, report.loss_curve,
                           b + 1000 * attempt);

            FunctionEncoder enc(fm, cfg.lambda);
            const SpectrumReport spec_b =
                spectrum(coefficient_correlation(solve_all_coefficients(enc, tasks)), cfg.tau);

            bool stop = false;
            if (b >= 2) {
                if (cfg.stop_rule == StopRule::newest_evr) {
                    stop = spec_b.evr[b - 1] < 1.0 - cfg.tau;
                } else {
                    stop = spec_b.cev[b - 2] >= cfg.tau;
                }
            }
            if (!stop) {
                previous = fm;
                previous_spectrum = spec_b;
                current = fm;
                accepted = true;
                break;
            }
        }
        report.stage_wall_seconds.push_back(now_seconds() - t0);
        report.bases_history.push_back(b);
        if (!accepted) {
            // The probe basis that triggered the stop is discarded.
            report.spectrum = previous_spectrum;
            return {FunctionEncoder(previous, cfg.lambda), report};
        }
    }
    report.spectrum = previous_spectrum;
    return {FunctionEncoder(current, cfg.lambda), report};
}

std::pair<FunctionEncoder, TrainReport> progressive_train(const MlpSpec& spec_template,
                                                          const std::vector<TaskDataset>& tasks,
                                                          const TrainConfig& cfg) {
    if (spec_template.architecture != Architecture::independent) {
        throw TrainingError("progressive_train: requires the independent architecture");
    }
    BasisFactory factory = [&spec_template](std::size_t n, std::uint64_t seed) {
        MlpSpec s = spec_template;
        s.n_basis = n;
        return std::unique_ptr<FeatureMap>(std::make_unique<BasisSet>(s, seed));
    };
    return progressive_train(factory, tasks, cfg);
}

std::pair<FunctionEncoder, TrainReport> train_then_prune(const FeatureMap& init_basis,
                                                         const std::vector<TaskDataset>& tasks,
                                                         const TrainConfig& cfg) {
    cfg.validate();
    if (init_basis.n_basis() < 2) throw TrainingError("train_then_prune: initial_bases must be >= 2");
    if (tasks.size() < 2) throw TrainingError("train_then_prune: need at least 2 tasks");

    std::shared_ptr<FeatureMap> fm(init_basis.clone());
    TrainReport report;
    {
        Adam opt(fm->parameters().size(), cfg.learning_rate);
        const double t0 = now_seconds();
        train_in_place(*fm, tasks, cfg, cfg.epochs, opt, report.loss_curve, 0);
        report.stage_wall_seconds.push_back(now_seconds() - t0);
        report.bases_history.push_back(fm->n_basis());
    }
    FunctionEncoder enc(fm, cfg.lambda);
    report.spectrum =
        spectrum(coefficient_correlation(solve_all_coefficients(enc, tasks)), cfg.tau);

    const SpectrumReport& spec = report.spectrum;
    const std::size_t r = spec.effective_rank;
    if (r == 0) throw TrainingError("train_then_prune: degenerate task family (rank 0)");
    const std::vector<double> scores = basis_scores(spec);

    // Top-r by score; ties broken by lower basis index.
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<std::size_t> keep(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(r));
    std::sort(keep.begin(), keep.end());
    report.selected_indices = keep;

    std::shared_ptr<FeatureMap> pruned_fm(enc.basis->pruned(keep));
    const std::size_t ft_epochs =
        static_cast<std::size_t>(std::ceil(cfg.fine_tune_fraction * static_cast<double>(cfg.epochs)));
    const double t0 = now_seconds();
    if (ft_epochs > 0) {
        Adam opt(pruned_fm->parameters().size(), cfg.learning_rate);
        train_in_place(*pruned_fm, tasks, cfg, ft_epochs, opt, report.loss_curve, 7777);
    }
    report.stage_wall_seconds.push_back(now_seconds() - t0);
    report.bases_history.push_back(pruned_fm->n_basis());

    FunctionEncoder out(pruned_fm, cfg.lambda);
    return {out, report};
}

std::pair<FunctionEncoder, TrainReport> train_then_prune(const MlpSpec& spec_template,
                                                         const std::vector<TaskDataset>& tasks,
                                                         const TrainConfig& cfg) {
    MlpSpec s = spec_template;
    s.n_basis = cfg.initial_bases;
    return train_then_prune(BasisSet(s, cfg.seed), tasks, cfg);
}

}  // namespace fe
