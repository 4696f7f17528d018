#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kode::sim {

enum class SystemKind { nfblb, lotka_volterra, custom };

using ParameterMap = std::map<std::string, double>;
using RightHandSide = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// A deterministic autonomous ODE system dx/dt = rhs(x).
struct OdeSystem {
    SystemKind kind = SystemKind::custom;
    std::string name;
    int dimension = 0;
    ParameterMap parameters;
    RightHandSide rhs;

    Eigen::VectorXd operator()(const Eigen::VectorXd& x) const { return rhs(x); }
};

/// Parameter names for the three-node negative-feedback-with-buffer enzyme
/// circuit: c1..c6 (catalytic rates), C1..C6 (Michaelis-Menten constants),
/// ct1, ct2 (enzyme concentrations) and x0 (input stimulus).
std::vector<std::string> nfblb_parameter_names();

/// Published parameter set with the given stimulus.
ParameterMap nfblb_default_parameters(double stimulus = 1.0);

/// alpha1_j..alpha4_j for j = 1..pairs, with alpha_{i,j} = base_i + 0.2 (j - 1).
ParameterMap lotka_volterra_default_parameters(int pairs = 5);

/// Builds "nfblb" or "lotka_volterra" (alias "lotka-volterra").
/// `dimension` < 0 infers it from the system (3 for nfblb, 2 * pairs for
/// Lotka-Volterra); a requested dimension that disagrees raises DimensionError.
/// Missing or unknown parameter names raise ConfigError naming the field.
OdeSystem build_system(std::string_view name, const ParameterMap& parameters, int dimension = -1);

OdeSystem make_custom_system(std::string name, int dimension, RightHandSide rhs);

/// Forward-Euler solution sampled on a uniform grid.
struct Trajectory {
    double step = 0.01;
    double t_start = 0.0;
    double t_end = 0.0;
    Eigen::MatrixXd values;  ///< rows: grid index, cols: state coordinate

    Eigen::Index size() const { return values.rows(); }
    double time(Eigen::Index row) const { return t_start + step * static_cast<double>(row); }
    /// Nearest-grid-node state at time t.
    Eigen::VectorXd at(double t) const;
};

/// x_{m+1} = x_m + step * rhs(x_m) until t_start + horizon.
/// Row count is floor(horizon / step) + 1. Non-finite states throw
/// NumericalError reporting the time at which they appeared.
Trajectory euler_solve(const OdeSystem& system, const Eigen::VectorXd& x0,
                       double step, double horizon, double t_start = 0.0);

/// Observed noisy time course; `replicates[r]` is n x p.
struct Dataset {
    Eigen::VectorXd times;
    std::vector<Eigen::MatrixXd> replicates;
    std::optional<Eigen::VectorXd> noise_sd;
    std::optional<Eigen::VectorXd> initial_state;

    Eigen::Index n() const { return times.size(); }
    Eigen::Index p() const { return replicates.empty() ? 0 : replicates.front().cols(); }
    int replicate_count() const { return static_cast<int>(replicates.size()); }

    /// Throws DataError on unsorted times, n < 2, ragged replicates or non-finite values.
    void validate() const;
};

/// y_ij = x_j(t_i) + eps_ij with eps_ij ~ N(0, sd_j^2). Replicate r draws from
/// its own stream seeded by (seed, r).
Dataset sample_observations(const Trajectory& trajectory, const Eigen::VectorXd& times,
                            const Eigen::VectorXd& noise_sd, std::uint64_t seed,
                            int replicates = 1);

/// One draw of a benchmark experiment: data plus the noiseless truth.
struct Scenario {
    OdeSystem system;
    Eigen::VectorXd initial_state;
    Trajectory truth;
    Dataset data;
};

/// Enzyme benchmark: stimulus ~ U[0.5, 1.5], x(0) = 0, t_i = (i - 1) / 20,
/// Euler step 0.01; the truth is integrated up to max(t_n, horizon).
Scenario nfblb_scenario(int n, double sigma, std::uint64_t seed, double horizon = 2.0);

/// Predator-prey benchmark: x_{2j-1}(0) = x_{2j}(0) ~ U[5, 15], n points evenly
/// spaced on [0, span].
Scenario lotka_volterra_scenario(int n, double sigma, std::uint64_t seed, int pairs = 5,
                                 double span = 100.0, double horizon = 105.0);

/// Evenly spaced grid helper: first, first + step, ... (count points).
Eigen::VectorXd arithmetic_grid(double first, double step, int count);

}  // namespace kode::sim
