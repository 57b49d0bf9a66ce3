#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fe/encoder.hpp"

namespace fe {

struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One random polynomial a0 + a1 x + ... + ad x^d with coefficients in [-1,1].
struct PolynomialTask {
    std::size_t degree = 0;
    std::vector<double> coefficients;  // ascending power order, degree+1 entries

    double evaluate(double x) const;
};

/// A first-order ODE system x' = field(x).
struct OdeSystem {
    std::size_t state_dim = 0;
    std::function<std::vector<double>(std::span<const double>)> field;
};

OdeSystem van_der_pol(double mu);
OdeSystem two_body(double mu);

/// Planar Keplerian elements for a bound orbit.
struct KeplerElements {
    double a = 1.0;      // semi-major axis
    double e = 0.0;      // eccentricity, in [0, 1)
    double omega = 0.0;  // argument of periapsis, radians
    double nu = 0.0;     // true anomaly, radians
    double mu = 1.0;     // gravitational parameter
};

/// Converts elements to a planar Cartesian state (r_x, r_y, v_x, v_y).
std::vector<double> kepler_to_cartesian(const KeplerElements& el);

/// One classical 4-stage Runge-Kutta step.
std::vector<double> rk4_step(const OdeSystem& sys, std::span<const double> x, double h);

/// Repeated rk4_step; returns steps+1 states including x0.
std::vector<std::vector<double>> integrate(const OdeSystem& sys, std::span<const double> x0,
                                           double h, std::size_t steps);

struct PolynomialConfig {
    std::size_t degree = 3;
    std::size_t n_tasks = 200;
    std::size_t m_points = 1000;
    std::size_t eval_count = 100;
    double x_min = -1.0;
    double x_max = 1.0;
};

std::vector<TaskDataset> sample_polynomial_tasks(const PolynomialConfig& cfg, std::uint64_t seed);
std::vector<PolynomialTask> sample_polynomials(std::size_t degree, std::size_t n_tasks,
                                               std::uint64_t seed);

struct VdpConfig {
    std::size_t n_tasks = 50;
    std::size_t query_points = 1000;
    std::size_t eval_points = 100;
    double mu_min = 0.5;
    double mu_max = 2.5;
    double x0_min = -3.5;
    double x0_max = 3.5;
    double dt = 0.1;
    std::size_t steps_per_trajectory = 100;  // t in [0, 10] at dt = 0.1
};

/// Van der Pol delta datasets. Model inputs are (x1, x2, mu); targets are
/// state deltas over one time step.
std::vector<TaskDataset> make_vdp_tasks(const VdpConfig& cfg, std::uint64_t seed);

struct TwoBodyConfig {
    std::size_t n_tasks = 60;
    std::size_t points_per_trajectory = 1000;
    std::size_t eval_points = 100;
    double a_min = 1.0;
    double a_max = 3.0;
    double e_min = 0.0;
    double e_max = 0.7;
    double mu_min = 0.8;
    double mu_max = 1.1;
    double dt = 0.05;
    double periapsis_floor = 0.25;  // redraw elements with a(1-e) below this
};

/// Two-body delta datasets, one trajectory per task. Model inputs are
/// (mu, r_x, r_y, v_x, v_y).
std::vector<TaskDataset> make_twobody_tasks(const TwoBodyConfig& cfg, std::uint64_t seed);

/// Writes one row per sample: task_id, split, input..., target...; plus a
/// JSON sidecar (same path with .json appended) holding config and seed.
void write_dataset_csv(const std::vector<TaskDataset>& tasks, const std::string& path,
                       const std::string& config_json);

}  // namespace fe
