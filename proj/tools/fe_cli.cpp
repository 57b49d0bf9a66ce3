// fe: command-line front end for function-encoder experiments.
//
// Subcommands:
//   run          train a model from a config file and write all artifacts
//   export-gram  evaluate a trained model's kernel on a probe CSV
//   bounds       compute the generalization-bound report for a model + config
//   gen-data     emit the dataset CSVs described by a config
//
// Exit codes: 0 success, 2 config/schema violation, 3 training divergence,
// 4 I/O failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fe/bounds.hpp"
#include "fe/deep_kernel.hpp"
#include "fe/experiment.hpp"
#include "fe/model_io.hpp"
#include "fe/node_basis.hpp"
#include "fe/training.hpp"

namespace {

constexpr int kExitSchema = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

fe::ExperimentConfig load(const std::string& config_path, bool seed_set, std::uint64_t seed,
                          const std::string& output_dir) {
    fe::ExperimentConfig cfg = fe::load_config(config_path);
    if (seed_set) {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    return cfg;
}

std::vector<std::vector<double>> read_probe_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw fe::IoError("cannot read probe file " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                numeric = false;
                break;
            }
        }
        if (!numeric && rows.empty()) continue;  // header row
        if (!numeric) throw fe::IoError("non-numeric probe row in " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw fe::IoError("probe file " + path + " has no data rows");
    return rows;
}

int run_cmd(const std::string& config_path, bool seed_set, std::uint64_t seed,
            const std::string& output_dir) {
    const fe::ExperimentConfig cfg = load(config_path, seed_set, seed, output_dir);
    const std::string manifest = fe::run_experiment(cfg);
    std::cout << manifest << "\n";
    return 0;
}

int export_gram_cmd(const std::string& model_path, const std::string& probe_path,
                    const std::string& out_path) {
    const std::vector<std::vector<double>> probes = read_probe_csv(probe_path);
    fe::Matrix k(0, 0);
    if (fe::peek_model_kind(model_path) == fe::ModelKind::deep_kernel) {
        const fe::DeepKernelModel model = fe::load_dkl_model(model_path);
        k = model.kernel_matrix(probes, probes);
    } else {
        const fe::FunctionEncoder enc = fe::load_model(model_path);
        k = fe::gram(enc, probes);
    }
    std::ofstream out(out_path);
    if (!out) throw fe::IoError("cannot write " + out_path);
    for (std::size_t i = 0; i < k.rows(); ++i) {
        for (std::size_t j = 0; j < k.cols(); ++j) {
            if (j > 0) out << ",";
            out << fe::format_double(k(i, j));
        }
        out << "\n";
    }
    return 0;
}

int bounds_cmd(const std::string& model_path, const std::string& config_path, bool seed_set,
               std::uint64_t seed, const std::string& output_dir) {
    const fe::ExperimentConfig cfg = load(config_path, seed_set, seed, output_dir);
    const fe::FunctionEncoder enc = fe::load_model(model_path);
    const std::vector<fe::TaskDataset> tasks = fe::build_tasks(cfg);
    const double probe_dt = cfg.experiment == fe::ExperimentKind::vdp ? cfg.vdp.dt
                            : cfg.experiment == fe::ExperimentKind::twobody ? cfg.twobody.dt
                                                                            : 0.0;
    std::vector<std::vector<double>> probes;
    for (const fe::TaskDataset& t : tasks) {
        for (std::size_t i : t.eval_indices) {
            probes.push_back(t.inputs[i]);
            if (probes.size() >= 200) break;
        }
        if (probes.size() >= 200) break;
    }
    double risk = 0.0;
    {
        double total = 0.0;
        std::size_t count = 0;
        for (const fe::TaskDataset& t : tasks) {
            const fe::CoefficientVector c = fe::solve_coefficients(enc, t);
            for (std::size_t i : t.query_indices) {
                const std::vector<double> p = fe::predict(enc, c, t.inputs[i], t.dt(i));
                for (std::size_t d = 0; d < p.size(); ++d) {
                    const double e = p[d] - t.targets[i][d];
                    total += e * e;
                }
                ++count;
            }
        }
        if (count > 0) risk = total / static_cast<double>(count);
    }
    const fe::BoundReport rep =
        fe::bound_report(enc, probes, tasks, cfg.bound_delta, risk, probe_dt);
    nlohmann::json j{{"n", rep.inputs.n},
                     {"m", rep.inputs.m},
                     {"lambda", rep.inputs.lambda},
                     {"R", rep.inputs.R},
                     {"Y", rep.inputs.Y},
                     {"delta", rep.inputs.delta},
                     {"empirical_risk", rep.inputs.empirical_risk},
                     {"rademacher_complexity", rep.rademacher_complexity},
                     {"rademacher_bound", rep.rademacher_bound},
                     {"pac_bayes_bound", rep.pac_bayes_bound},
                     {"injectivity_ok", rep.injectivity_ok}};
    std::cout << j.dump(2) << "\n";
    return 0;
}

int gen_data_cmd(const std::string& config_path, bool seed_set, std::uint64_t seed,
                 const std::string& output_dir) {
    const fe::ExperimentConfig cfg = load(config_path, seed_set, seed, output_dir);
    const std::vector<fe::TaskDataset> tasks = fe::build_tasks(cfg);
    std::filesystem::create_directories(cfg.output_dir);
    const std::string path =
        (std::filesystem::path(cfg.output_dir) / "dataset.csv").string();
    fe::write_dataset_csv(tasks, path, fe::config_to_json(cfg));
    std::cout << "wrote " << tasks.size() << " tasks to " << path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"function encoder experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string output_dir;
    std::string model_path;
    std::string probe_path;
    std::string out_path;
    std::uint64_t seed = 0;
    bool serial = false;  // accepted for reproducibility scripting; runs are serial regardless

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        auto* opt = cmd->add_option("--config", config_path, "experiment config file");
        if (needs_config) opt->required();
        cmd->add_option("--seed", seed, "override the config seed");
        cmd->add_option("--output", output_dir, "override the config output directory");
        cmd->add_flag("--serial", serial, "force serial execution");
    };

    CLI::App* run = app.add_subcommand("run", "train a model and write artifacts");
    add_common(run, true);

    CLI::App* gram = app.add_subcommand("export-gram", "kernel matrix over probe inputs");
    gram->add_option("--model", model_path, "trained model file")->required();
    gram->add_option("--probes", probe_path, "CSV of probe inputs, one point per row")->required();
    gram->add_option("--out", out_path, "output CSV path")->required();

    CLI::App* bounds = app.add_subcommand("bounds", "generalization-bound report");
    bounds->add_option("--model", model_path, "trained model file")->required();
    add_common(bounds, true);

    CLI::App* gen = app.add_subcommand("gen-data", "write dataset CSVs");
    add_common(gen, true);

    CLI11_PARSE(app, argc, argv);

    const bool seed_set =
        run->count("--seed") + bounds->count("--seed") + gen->count("--seed") > 0;
    try {
        if (run->parsed()) return run_cmd(config_path, seed_set, seed, output_dir);
        if (gram->parsed()) return export_gram_cmd(model_path, probe_path, out_path);
        if (bounds->parsed()) return bounds_cmd(model_path, config_path, seed_set, seed, output_dir);
        if (gen->parsed()) return gen_data_cmd(config_path, seed_set, seed, output_dir);
    } catch (const fe::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitSchema;
    } catch (const fe::TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const fe::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const fe::ModelIoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
