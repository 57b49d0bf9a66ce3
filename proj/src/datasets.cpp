#include "fe/datasets.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "fe/rng.hpp"

namespace fe {

double PolynomialTask::evaluate(double x) const {
    double y = 0.0;
    for (std::size_t k = coefficients.size(); k-- > 0;) y = y * x + coefficients[k];
    return y;
}

OdeSystem van_der_pol(double mu) {
    OdeSystem sys;
    sys.state_dim = 2;
    sys.field = [mu](std::span<const double> x) {
        return std::vector<double>{x[1], mu * (1.0 - x[0] * x[0]) * x[1] - x[0]};
    };
    return sys;
}

OdeSystem two_body(double mu) {
    OdeSystem sys;
    sys.state_dim = 4;
    sys.field = [mu](std::span<const double> x) {
        const double r2 = x[0] * x[0] + x[1] * x[1];
        const double r3 = r2 * std::sqrt(r2);
        return std::vector<double>{x[2], x[3], -mu * x[0] / r3, -mu * x[1] / r3};
    };
    return sys;
}

std::vector<double> kepler_to_cartesian(const KeplerElements& el) {
    if (el.a <= 0.0) throw DatasetError("kepler_to_cartesian: a must be > 0");
    if (el.e < 0.0 || el.e >= 1.0) throw DatasetError("kepler_to_cartesian: need 0 <= e < 1");
    if (el.mu <= 0.0) throw DatasetError("kepler_to_cartesian: mu must be > 0");
    const double p = el.a * (1.0 - el.e * el.e);
    const double r = p / (1.0 + el.e * std::cos(el.nu));
    const double theta = el.omega + el.nu;
    // Perifocal velocity sqrt(mu/p) * (-sin nu, e + cos nu), rotated by omega.
    const double vf = std::sqrt(el.mu / p);
    const double vpx = -vf * std::sin(el.nu);
    const double vpy = vf * (el.e + std::cos(el.nu));
    const double cw = std::cos(el.omega);
    const double sw = std::sin(el.omega);
    return {r * std::cos(theta), r * std::sin(theta),
            cw * vpx - sw * vpy, sw * vpx + cw * vpy};
}

std::vector<double> rk4_step(const OdeSystem& sys, std::span<const double> x, double h) {
    if (h <= 0.0) throw DatasetError("rk4_step: h must be > 0");
    const std::size_t d = sys.state_dim;
    auto check = [](const std::vector<double>& v, const char* stage) {
        for (double e : v) {
            if (!std::isfinite(e)) {
                throw DatasetError(std::string("rk4_step: non-finite field evaluation at ") + stage);
            }
        }
    };
    std::vector<double> k1 = sys.field(x);
    check(k1, "k1");
    std::vector<double> tmp(d);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
    std::vector<double> k2 = sys.field(tmp);
    check(k2, "k2");
    for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
    std::vector<double> k3 = sys.field(tmp);
    check(k3, "k3");
    for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + h * k3[i];
    std::vector<double> k4 = sys.field(tmp);
    check(k4, "k4");
    std::vector<double> out(d);
    for (std::size_t i = 0; i < d; ++i) {
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    return out;
}

std::vector<std::vector<double>> integrate(const OdeSystem& sys, std::span<const double> x0,
                                           double h, std::size_t steps) {
    if (steps < 1) throw DatasetError("integrate: steps must be >= 1");
    std::vector<std::vector<double>> traj;
    traj.reserve(steps + 1);
    traj.emplace_back(x0.begin(), x0.end());
    for (std::size_t s = 0; s < steps; ++s) {
        try {
            traj.push_back(rk4_step(sys, traj.back(), h));
        } catch (const DatasetError& e) {
            throw DatasetError("integrate: failure at step " + std::to_string(s) + ": " + e.what());
        }
    }
    return traj;
}

namespace {

// Disjoint eval/query split by Fisher-Yates shuffle of sample indices.
void split_indices(std::size_t total, std::size_t eval_count, SplitMix64& rng,
                   std::vector<std::size_t>& eval_out, std::vector<std::size_t>& query_out) {
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = total; i-- > 1;) {
        const std::size_t j = rng.next() % (i + 1);
        std::swap(idx[i], idx[j]);
    }
    eval_out.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(eval_count));
    query_out.assign(idx.begin() + static_cast<std::ptrdiff_t>(eval_count), idx.end());
}

}  // namespace

std::vector<PolynomialTask> sample_polynomials(std::size_t degree, std::size_t n_tasks,
                                               std::uint64_t seed) {
    std::vector<PolynomialTask> out(n_tasks);
    for (std::size_t t = 0; t < n_tasks; ++t) {
        SplitMix64 rng(mix_seed(seed, t));
        out[t].degree = degree;
        out[t].coefficients.resize(degree + 1);
        for (double& a : out[t].coefficients) a = rng.uniform(-1.0, 1.0);
    }
    return out;
}

std::vector<TaskDataset> sample_polynomial_tasks(const PolynomialConfig& cfg, std::uint64_t seed) {
    if (cfg.eval_count >= cfg.m_points) {
        throw DatasetError("sample_polynomial_tasks: eval_count must be < m_points");
    }
    if (cfg.n_tasks < 1) throw DatasetError("sample_polynomial_tasks: n_tasks must be >= 1");
    std::vector<PolynomialTask> polys = sample_polynomials(cfg.degree, cfg.n_tasks, seed);
    std::vector<TaskDataset> tasks(cfg.n_tasks);
    for (std::size_t t = 0; t < cfg.n_tasks; ++t) {
        SplitMix64 rng(mix_seed(seed ^ 0x706f6c79ULL, t));
        TaskDataset& ds = tasks[t];
        ds.inputs.resize(cfg.m_points);
        ds.targets.resize(cfg.m_points);
        for (std::size_t i = 0; i < cfg.m_points; ++i) {
            const double x = rng.uniform(cfg.x_min, cfg.x_max);
            ds.inputs[i] = {x};
            ds.targets[i] = {polys[t].evaluate(x)};
        }
        split_indices(cfg.m_points, cfg.eval_count, rng, ds.eval_indices, ds.query_indices);
        ds.validate();
    }
    return tasks;
}

std::vector<TaskDataset> make_vdp_tasks(const VdpConfig& cfg, std::uint64_t seed) {
    if (cfg.n_tasks < 1) throw DatasetError("make_vdp_tasks: n_tasks must be >= 1");
    const std::size_t budget = cfg.query_points + cfg.eval_points;
    std::vector<TaskDataset> tasks(cfg.n_tasks);
    for (std::size_t t = 0; t < cfg.n_tasks; ++t) {
        SplitMix64 rng(mix_seed(seed ^ 0x766470ULL, t));
        const double mu = rng.uniform(cfg.mu_min, cfg.mu_max);
        const OdeSystem sys = van_der_pol(mu);
        TaskDataset& ds = tasks[t];
        while (ds.inputs.size() < budget) {
            const std::vector<double> x0 = {rng.uniform(cfg.x0_min, cfg.x0_max),
                                            rng.uniform(cfg.x0_min, cfg.x0_max)};
            const auto traj = integrate(sys, x0, cfg.dt, cfg.steps_per_trajectory);
            for (std::size_t s = 0; s + 1 < traj.size() && ds.inputs.size() < budget; ++s) {
                ds.inputs.push_back({traj[s][0], traj[s][1], mu});
                ds.targets.push_back({traj[s + 1][0] - traj[s][0], traj[s + 1][1] - traj[s][1]});
                ds.dts.push_back(cfg.dt);
            }
        }
        split_indices(budget, cfg.eval_points, rng, ds.eval_indices, ds.query_indices);
        ds.validate();
    }
    return tasks;
}

std::vector<TaskDataset> make_twobody_tasks(const TwoBodyConfig& cfg, std::uint64_t seed) {
    if (cfg.n_tasks < 1) throw DatasetError("make_twobody_tasks: n_tasks must be >= 1");
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    std::vector<TaskDataset> tasks(cfg.n_tasks);
    for (std::size_t t = 0; t < cfg.n_tasks; ++t) {
        SplitMix64 rng(mix_seed(seed ^ 0x326264ULL, t));
        KeplerElements el;
        do {
            el.a = rng.uniform(cfg.a_min, cfg.a_max);
            el.e = rng.uniform(cfg.e_min, cfg.e_max);
        } while (el.a * (1.0 - el.e) <= cfg.periapsis_floor);
        el.omega = rng.uniform(0.0, kTwoPi);
        el.nu = rng.uniform(0.0, kTwoPi);
        el.mu = rng.uniform(cfg.mu_min, cfg.mu_max);
        const std::vector<double> x0 = kepler_to_cartesian(el);
        const OdeSystem sys = two_body(el.mu);
        std::vector<std::vector<double>> traj;
        try {
            traj = integrate(sys, x0, cfg.dt, cfg.points_per_trajectory);
        } catch (const DatasetError& e) {
            throw DatasetError("make_twobody_tasks: integration failed for elements a=" +
                               std::to_string(el.a) + " e=" + std::to_string(el.e) +
                               " omega=" + std::to_string(el.omega) + " nu=" +
                               std::to_string(el.nu) + " mu=" + std::to_string(el.mu) + ": " +
                               e.what());
        }
        TaskDataset& ds = tasks[t];
        for (std::size_t s = 0; s + 1 < traj.size(); ++s) {
            ds.inputs.push_back({el.mu, traj[s][0], traj[s][1], traj[s][2], traj[s][3]});
            std::vector<double> delta(4);
            for (std::size_t k = 0; k < 4; ++k) delta[k] = traj[s + 1][k] - traj[s][k];
            ds.targets.push_back(std::move(delta));
            ds.dts.push_back(cfg.dt);
        }
        split_indices(ds.inputs.size(), cfg.eval_points, rng, ds.eval_indices, ds.query_indices);
        ds.validate();
    }
    return tasks;
}

void write_dataset_csv(const std::vector<TaskDataset>& tasks, const std::string& path,
                       const std::string& config_json) {
    if (tasks.empty()) throw DatasetError("write_dataset_csv: no tasks");
    std::ofstream out(path);
    if (!out) throw DatasetError("write_dataset_csv: cannot open " + path);
    const std::size_t in_dim = tasks.front().inputs.front().size();
    const std::size_t out_dim = tasks.front().targets.front().size();
    out << "task_id,split";
    for (std::size_t k = 0; k < in_dim; ++k) out << ",input_" << k;
    for (std::size_t k = 0; k < out_dim; ++k) out << ",target_" << k;
    out << "\n";
    out.precision(17);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const TaskDataset& ds = tasks[t];
        std::vector<char> split(ds.size(), 'q');
        for (std::size_t i : ds.eval_indices) split[i] = 'e';
        for (std::size_t i = 0; i < ds.size(); ++i) {
            out << t << ',' << (split[i] == 'e' ? "eval" : "query");
            for (double v : ds.inputs[i]) out << ',' << v;
            for (double v : ds.targets[i]) out << ',' << v;
            out << "\n";
        }
    }
    std::ofstream sidecar(path + ".json");
    if (!sidecar) throw DatasetError("write_dataset_csv: cannot open " + path + ".json");
    sidecar << config_json << "\n";
}

}  // namespace fe
