#include "fe/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fe/bounds.hpp"
#include "fe/deep_kernel.hpp"
#include "fe/model_io.hpp"
#include "fe/node_basis.hpp"
#include "fe/rng.hpp"

namespace fe {

using nlohmann::json;

namespace fs = std::filesystem;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

const char* to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::polynomial: return "polynomial";
        case ExperimentKind::vdp: return "vdp";
        default: return "twobody";
    }
}

const char* to_string(Algorithm a) {
    switch (a) {
        case Algorithm::joint: return "joint";
        case Algorithm::progressive: return "progressive";
        case Algorithm::prune: return "prune";
        case Algorithm::dkl_rbf: return "dkl_rbf";
        default: return "dkl_linear";
    }
}

namespace {

ExperimentKind experiment_from_string(const std::string& s) {
    if (s == "polynomial") return ExperimentKind::polynomial;
    if (s == "vdp") return ExperimentKind::vdp;
    if (s == "twobody") return ExperimentKind::twobody;
    throw ConfigError("unknown experiment '" + s + "'");
}

Algorithm algorithm_from_string(const std::string& s) {
    if (s == "joint") return Algorithm::joint;
    if (s == "progressive") return Algorithm::progressive;
    if (s == "prune") return Algorithm::prune;
    if (s == "dkl_rbf") return Algorithm::dkl_rbf;
    if (s == "dkl_linear") return Algorithm::dkl_linear;
    throw ConfigError("unknown algorithm '" + s + "'");
}

/// Wraps a JSON object and tracks which keys were read, so leftovers can be
/// rejected. Every config section goes through one of these.
class StrictObject {
public:
    StrictObject(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
    }

    bool has(const char* key) {
        if (j_.contains(key)) {
            used_.insert(key);
            return true;
        }
        return false;
    }

    template <typename T>
    void read(const char* key, T& out) {
        if (!has(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
        }
    }

    template <typename T>
    T require(const char* key) {
        if (!has(key)) throw ConfigError("config is missing required key '" + name_ + "." + key + "'");
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
        }
    }

    const json& sub(const char* key) {
        used_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (used_.find(it.key()) == used_.end()) {
                throw ConfigError("unknown config key '" + name_ + "." + it.key() + "'");
            }
        }
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> used_;
};

void parse_train(const json& j, TrainConfig& t) {
    StrictObject o(j, "train");
    o.read("epochs", t.epochs);
    o.read("learning_rate", t.learning_rate);
    o.read("tasks_per_batch", t.tasks_per_batch);
    o.read("query_batch", t.query_batch);
    o.read("lambda", t.lambda);
    o.read("tau", t.tau);
    o.read("fine_tune_fraction", t.fine_tune_fraction);
    o.read("max_bases", t.max_bases);
    o.read("initial_bases", t.initial_bases);
    o.read("probe_retries", t.probe_retries);
    if (o.has("stop_rule")) {
        const std::string s = j.at("stop_rule").get<std::string>();
        if (s == "newest_evr")
            t.stop_rule = StopRule::newest_evr;
        else if (s == "cev")
            t.stop_rule = StopRule::cev;
        else
            throw ConfigError("train.stop_rule must be 'newest_evr' or 'cev'");
    }
    o.finish();
}

void parse_model(const json& j, ExperimentConfig& cfg) {
    StrictObject o(j, "model");
    o.read("hidden_widths", cfg.hidden_widths);
    if (o.has("activation")) {
        cfg.activation = activation_from_string(j.at("activation").get<std::string>());
    }
    o.read("integrator_steps", cfg.integrator_steps);
    o.read("embed_dim", cfg.embed_dim);
    o.finish();
}

void parse_dataset(const json& j, ExperimentConfig& cfg) {
    StrictObject o(j, "dataset");
    switch (cfg.experiment) {
        case ExperimentKind::polynomial:
            o.read("degree", cfg.polynomial.degree);
            o.read("n_tasks", cfg.polynomial.n_tasks);
            o.read("m_points", cfg.polynomial.m_points);
            o.read("eval_count", cfg.polynomial.eval_count);
            o.read("x_min", cfg.polynomial.x_min);
            o.read("x_max", cfg.polynomial.x_max);
            break;
        case ExperimentKind::vdp:
            o.read("n_tasks", cfg.vdp.n_tasks);
            o.read("query_points", cfg.vdp.query_points);
            o.read("eval_points", cfg.vdp.eval_points);
            o.read("mu_min", cfg.vdp.mu_min);
            o.read("mu_max", cfg.vdp.mu_max);
            o.read("x0_min", cfg.vdp.x0_min);
            o.read("x0_max", cfg.vdp.x0_max);
            o.read("dt", cfg.vdp.dt);
            o.read("steps_per_trajectory", cfg.vdp.steps_per_trajectory);
            break;
        case ExperimentKind::twobody:
            o.read("n_tasks", cfg.twobody.n_tasks);
            o.read("points_per_trajectory", cfg.twobody.points_per_trajectory);
            o.read("eval_points", cfg.twobody.eval_points);
            o.read("a_min", cfg.twobody.a_min);
            o.read("a_max", cfg.twobody.a_max);
            o.read("e_min", cfg.twobody.e_min);
            o.read("e_max", cfg.twobody.e_max);
            o.read("mu_min", cfg.twobody.mu_min);
            o.read("mu_max", cfg.twobody.mu_max);
            o.read("dt", cfg.twobody.dt);
            o.read("periapsis_floor", cfg.twobody.periapsis_floor);
            break;
    }
    o.finish();
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open output file " + path.string());
    return out;
}

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

void ExperimentConfig::validate() const {
    train.validate();
    if (trajectory_steps < 1) throw ConfigError("trajectory_steps must be >= 1");
    if (!(bound_delta > 0.0 && bound_delta <= 1.0)) throw ConfigError("bound_delta must be in (0, 1]");
    if (embed_dim < 1) throw ConfigError("model.embed_dim must be >= 1");
    if (integrator_steps < 1) throw ConfigError("model.integrator_steps must be >= 1");
    const bool dkl = algorithm == Algorithm::dkl_rbf || algorithm == Algorithm::dkl_linear;
    if (dkl && experiment != ExperimentKind::polynomial) {
        throw ConfigError("deep-kernel algorithms support scalar targets only (experiment=polynomial)");
    }
    for (std::size_t w : hidden_widths) {
        if (w < 1) throw ConfigError("model.hidden_widths entries must be >= 1");
    }
}

ExperimentConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    StrictObject o(j, "config");
    cfg.experiment = experiment_from_string(o.require<std::string>("experiment"));
    cfg.algorithm = algorithm_from_string(o.require<std::string>("algorithm"));
    o.read("seed", cfg.seed);
    o.read("output_dir", cfg.output_dir);
    o.read("trajectory_steps", cfg.trajectory_steps);
    o.read("bound_delta", cfg.bound_delta);
    cfg.hidden_widths =
        cfg.experiment == ExperimentKind::polynomial ? std::vector<std::size_t>{32}
                                                     : std::vector<std::size_t>{64, 64};
    if (o.has("train")) parse_train(j.at("train"), cfg.train);
    if (o.has("model")) parse_model(j.at("model"), cfg);
    if (o.has("dataset")) parse_dataset(j.at("dataset"), cfg);
    o.finish();
    cfg.train.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json train{{"epochs", cfg.train.epochs},
               {"learning_rate", cfg.train.learning_rate},
               {"tasks_per_batch", cfg.train.tasks_per_batch},
               {"query_batch", cfg.train.query_batch},
               {"lambda", cfg.train.lambda},
               {"tau", cfg.train.tau},
               {"fine_tune_fraction", cfg.train.fine_tune_fraction},
               {"max_bases", cfg.train.max_bases},
               {"initial_bases", cfg.train.initial_bases},
               {"probe_retries", cfg.train.probe_retries},
               {"stop_rule", cfg.train.stop_rule == StopRule::newest_evr ? "newest_evr" : "cev"}};
    json model{{"hidden_widths", cfg.hidden_widths},
               {"activation", to_string(cfg.activation)},
               {"integrator_steps", cfg.integrator_steps},
               {"embed_dim", cfg.embed_dim}};
    json dataset;
    switch (cfg.experiment) {
        case ExperimentKind::polynomial:
            dataset = json{{"degree", cfg.polynomial.degree},
                           {"n_tasks", cfg.polynomial.n_tasks},
                           {"m_points", cfg.polynomial.m_points},
                           {"eval_count", cfg.polynomial.eval_count},
                           {"x_min", cfg.polynomial.x_min},
                           {"x_max", cfg.polynomial.x_max}};
            break;
        case ExperimentKind::vdp:
            dataset = json{{"n_tasks", cfg.vdp.n_tasks},
                           {"query_points", cfg.vdp.query_points},
                           {"eval_points", cfg.vdp.eval_points},
                           {"mu_min", cfg.vdp.mu_min},
                           {"mu_max", cfg.vdp.mu_max},
                           {"x0_min", cfg.vdp.x0_min},
                           {"x0_max", cfg.vdp.x0_max},
                           {"dt", cfg.vdp.dt},
                           {"steps_per_trajectory", cfg.vdp.steps_per_trajectory}};
            break;
        case ExperimentKind::twobody:
            dataset = json{{"n_tasks", cfg.twobody.n_tasks},
                           {"points_per_trajectory", cfg.twobody.points_per_trajectory},
                           {"eval_points", cfg.twobody.eval_points},
                           {"a_min", cfg.twobody.a_min},
                           {"a_max", cfg.twobody.a_max},
                           {"e_min", cfg.twobody.e_min},
                           {"e_max", cfg.twobody.e_max},
                           {"mu_min", cfg.twobody.mu_min},
                           {"mu_max", cfg.twobody.mu_max},
                           {"dt", cfg.twobody.dt},
                           {"periapsis_floor", cfg.twobody.periapsis_floor}};
            break;
    }
    json j{{"experiment", to_string(cfg.experiment)},
           {"algorithm", to_string(cfg.algorithm)},
           {"seed", cfg.seed},
           {"output_dir", cfg.output_dir},
           {"trajectory_steps", cfg.trajectory_steps},
           {"bound_delta", cfg.bound_delta},
           {"train", train},
           {"model", model},
           {"dataset", dataset}};
    return j.dump(2);
}

std::vector<TaskDataset> build_tasks(const ExperimentConfig& cfg) {
    switch (cfg.experiment) {
        case ExperimentKind::polynomial:
            return sample_polynomial_tasks(cfg.polynomial, mix_seed(cfg.seed, 1));
        case ExperimentKind::vdp:
            return make_vdp_tasks(cfg.vdp, mix_seed(cfg.seed, 1));
        default:
            return make_twobody_tasks(cfg.twobody, mix_seed(cfg.seed, 1));
    }
}

namespace {

struct ModelShape {
    std::size_t input_dim = 1;
    std::size_t output_dim = 1;
    std::size_t state_offset = 0;  // dynamics only
    bool dynamic = false;
    double dt = 0.0;
};

ModelShape shape_for(const ExperimentConfig& cfg) {
    switch (cfg.experiment) {
        case ExperimentKind::polynomial: return {1, 1, 0, false, 0.0};
        case ExperimentKind::vdp: return {3, 2, 0, true, cfg.vdp.dt};
        default: return {5, 4, 1, true, cfg.twobody.dt};
    }
}

MlpSpec base_spec(const ExperimentConfig& cfg, const ModelShape& shape, std::size_t n_basis,
                  Architecture arch) {
    MlpSpec s;
    s.input_dim = shape.input_dim;
    s.hidden_widths = cfg.hidden_widths;
    s.output_dim = shape.output_dim;
    s.n_basis = n_basis;
    s.architecture = arch;
    s.activation = cfg.activation;
    return s;
}

std::unique_ptr<FeatureMap> make_feature_map(const ExperimentConfig& cfg, const ModelShape& shape,
                                             std::size_t n_basis, std::uint64_t seed) {
    // Dynamics bases flow a learned vector field; they need per-basis
    // sub-networks, so the independent layout is forced for them and for
    // progressive growth.
    const bool independent = shape.dynamic || cfg.algorithm == Algorithm::progressive;
    const Architecture arch = independent ? Architecture::independent : Architecture::multi_headed;
    BasisSet net(base_spec(cfg, shape, n_basis, arch), seed);
    if (shape.dynamic) {
        return std::make_unique<NodeBasisSet>(std::move(net), shape.state_offset,
                                              cfg.integrator_steps);
    }
    return std::make_unique<BasisSet>(std::move(net));
}

void write_loss_curve(const fs::path& dir, const std::vector<double>& curve) {
    std::ofstream out = open_output(dir / "loss_curve.csv");
    out << "epoch,mse\n";
    for (std::size_t i = 0; i < curve.size(); ++i) {
        out << i << "," << format_double(curve[i]) << "\n";
    }
}

void write_scree(const fs::path& dir, const SpectrumReport& spec) {
    std::ofstream out = open_output(dir / "scree.csv");
    out << "component,eigenvalue,evr,cev\n";
    for (std::size_t i = 0; i < spec.eigenvalues.size(); ++i) {
        out << (i + 1) << "," << format_double(spec.eigenvalues[i]) << ","
            << format_double(spec.evr[i]) << "," << format_double(spec.cev[i]) << "\n";
    }
}

void write_trajectory(const fs::path& dir, const ExperimentConfig& cfg, const ModelShape& shape,
                      const FunctionEncoder& enc, const TaskDataset& task) {
    const std::vector<double>& x0 = task.inputs.at(0);
    const CoefficientVector c = solve_coefficients(enc, task);
    const std::vector<std::vector<double>> pred =
        rollout(enc, c, x0, shape.dt, cfg.trajectory_steps);

    const double mu_param = cfg.experiment == ExperimentKind::vdp ? x0[2] : x0[0];
    const OdeSystem sys = cfg.experiment == ExperimentKind::vdp ? van_der_pol(mu_param)
                                                                : two_body(mu_param);
    std::vector<double> state(x0.begin() + static_cast<std::ptrdiff_t>(shape.state_offset),
                              x0.begin() +
                                  static_cast<std::ptrdiff_t>(shape.state_offset + shape.output_dim));
    const std::vector<std::vector<double>> truth =
        integrate(sys, state, shape.dt, cfg.trajectory_steps);

    std::ofstream out = open_output(dir / "trajectory.csv");
    out << "t";
    for (std::size_t i = 0; i < shape.output_dim; ++i) out << ",true_" << i;
    for (std::size_t i = 0; i < shape.output_dim; ++i) out << ",pred_" << i;
    out << "\n";
    for (std::size_t s = 0; s < truth.size(); ++s) {
        out << format_double(static_cast<double>(s) * shape.dt);
        for (double v : truth[s]) out << "," << format_double(v);
        for (double v : pred[s]) out << "," << format_double(v);
        out << "\n";
    }
}

json bounds_to_json(const BoundReport& rep) {
    return json{{"n", rep.inputs.n},
                {"m", rep.inputs.m},
                {"lambda", rep.inputs.lambda},
                {"R", rep.inputs.R},
                {"Y", rep.inputs.Y},
                {"delta", rep.inputs.delta},
                {"empirical_risk", rep.inputs.empirical_risk},
                {"rademacher_complexity", rep.rademacher_complexity},
                {"rademacher_bound", rep.rademacher_bound},
                {"pac_bayes_bound", rep.pac_bayes_bound},
                {"r_estimated", rep.r_estimated},
                {"y_estimated", rep.y_estimated},
                {"injectivity_ok", rep.injectivity_ok}};
}

}  // namespace

std::string run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const fs::path dir(cfg.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string());

    const std::string config_echo = config_to_json(cfg);
    const double t_start = now_seconds();
    const std::vector<TaskDataset> tasks = build_tasks(cfg);
    const ModelShape shape = shape_for(cfg);
    const double probe_dt = shape.dynamic ? shape.dt : 0.0;

    json manifest;
    manifest["config"] = json::parse(config_echo);
    manifest["seed"] = cfg.seed;
    manifest["format_version"] = kModelFormatVersion;
    manifest["compiler"] =
#if defined(__VERSION__)
        __VERSION__;
#else
        "unknown";
#endif
    manifest["n_tasks"] = tasks.size();

    const bool dkl = cfg.algorithm == Algorithm::dkl_rbf || cfg.algorithm == Algorithm::dkl_linear;
    if (dkl) {
        MlpSpec spec;
        spec.input_dim = shape.input_dim;
        spec.hidden_widths = cfg.hidden_widths;
        spec.output_dim = cfg.embed_dim;
        spec.n_basis = 1;
        spec.architecture = Architecture::multi_headed;
        spec.activation = cfg.activation;
        const KernelKind kind =
            cfg.algorithm == Algorithm::dkl_rbf ? KernelKind::rbf_ard : KernelKind::linear;
        DeepKernelModel init(spec, kind, cfg.train.lambda, mix_seed(cfg.seed, 2));
        auto [model, report] = dkl_train(std::move(init), tasks, cfg.train);
        write_loss_curve(dir, report.loss_curve);
        save_dkl_model(model, (dir / "model.json").string(), config_echo);
        manifest["final_mse"] = report.loss_curve.empty() ? 0.0 : report.loss_curve.back();
        manifest["step_wall_seconds"] = report.step_wall_seconds;
    } else {
        FunctionEncoder enc;
        TrainReport report;
        if (cfg.algorithm == Algorithm::progressive) {
            BasisFactory factory = [&cfg, &shape](std::size_t n, std::uint64_t s) {
                return make_feature_map(cfg, shape, n, s);
            };
            std::tie(enc, report) = progressive_train(factory, tasks, cfg.train);
        } else {
            const std::size_t n0 = cfg.train.initial_bases;
            std::unique_ptr<FeatureMap> fm = make_feature_map(cfg, shape, n0, mix_seed(cfg.seed, 2));
            if (cfg.algorithm == Algorithm::joint) {
                std::tie(enc, report) = joint_train(*fm, tasks, cfg.train);
            } else {
                std::tie(enc, report) = train_then_prune(*fm, tasks, cfg.train);
            }
        }

        write_loss_curve(dir, report.loss_curve);
        if (!report.spectrum.eigenvalues.empty()) write_scree(dir, report.spectrum);
        if (shape.dynamic) write_trajectory(dir, cfg, shape, enc, tasks.front());

        std::vector<std::vector<double>> probes;
        for (const TaskDataset& t : tasks) {
            for (std::size_t i : t.eval_indices) {
                probes.push_back(t.inputs[i]);
                if (probes.size() >= 200) break;
            }
            if (probes.size() >= 200) break;
        }
        const double risk = report.loss_curve.empty() ? 0.0 : report.loss_curve.back();
        const BoundReport brep = bound_report(enc, probes, tasks, cfg.bound_delta, risk, probe_dt);
        {
            std::ofstream out = open_output(dir / "bounds.json");
            out << bounds_to_json(brep).dump(2) << "\n";
        }

        save_model(enc, (dir / "model.json").string(), config_echo);
        manifest["final_mse"] = risk;
        manifest["n_basis"] = enc.basis->n_basis();
        manifest["effective_rank"] = report.spectrum.effective_rank;
        manifest["bases_history"] = report.bases_history;
        manifest["selected_indices"] = report.selected_indices;
        manifest["stage_wall_seconds"] = report.stage_wall_seconds;
        manifest["bounds"] = bounds_to_json(brep);
    }

    manifest["total_wall_seconds"] = now_seconds() - t_start;
    const std::string text = manifest.dump(2);
    std::ofstream out = open_output(dir / "manifest.json");
    out << text << "\n";
    return text;
}

}  // namespace fe
