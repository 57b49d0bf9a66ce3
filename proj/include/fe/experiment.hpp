#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fe/datasets.hpp"
#include "fe/mlp.hpp"
#include "fe/training.hpp"

namespace fe {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ExperimentKind { polynomial, vdp, twobody };
enum class Algorithm { joint, progressive, prune, dkl_rbf, dkl_linear };

/// One full run description. Parsed from a strict JSON file: unknown keys are
/// rejected at every nesting level, so a typo fails fast instead of silently
/// falling back to a default.
struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::polynomial;
    Algorithm algorithm = Algorithm::joint;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    TrainConfig train;

    // Model section; hidden_widths defaults depend on the experiment.
    std::vector<std::size_t> hidden_widths;
    Activation activation = Activation::tanh;
    std::size_t integrator_steps = 1;
    std::size_t embed_dim = 8;  // deep-kernel feature dimension

    // Dataset sections (only the one matching `experiment` is used).
    PolynomialConfig polynomial;
    VdpConfig vdp;
    TwoBodyConfig twobody;

    // Trajectory export length for dynamics experiments.
    std::size_t trajectory_steps = 100;
    double bound_delta = 0.05;

    void validate() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

const char* to_string(ExperimentKind k);
const char* to_string(Algorithm a);

/// Builds the task datasets named by the config.
std::vector<TaskDataset> build_tasks(const ExperimentConfig& cfg);

/// Runs the configured experiment and writes all artifacts (model file, loss
/// curve, scree, trajectory for dynamics, bound report, run manifest) into
/// cfg.output_dir. Returns the run manifest as a JSON string.
std::string run_experiment(const ExperimentConfig& cfg);

/// CSV float formatting shared by every exporter: 17 significant digits.
std::string format_double(double v);

}  // namespace fe
