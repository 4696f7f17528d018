#pragma once

#include "kode/gram.hpp"
#include "kode/kernels.hpp"
#include "kode/sim.hpp"
#include "kode/solver.hpp"
#include "kode/trajectory.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace kode::model {

/// End-to-end settings: trajectory smoothing, component kernels, quadrature
/// and the block solver.
struct PipelineConfig {
    kernels::KernelFamily trajectory_family = kernels::KernelFamily::matern1;
    std::vector<double> nu_grid;  ///< empty: trajectory::default_nu_grid(span)
    std::vector<double> lambda_grid = trajectory::default_lambda_grid();
    int bandwidth_folds = 10;

    kernels::KernelFamily kernel_family = kernels::KernelFamily::matern1;
    double kernel_bandwidth = 1.0;
    /// Map each coordinate onto [0, 1] using the range of its fitted trajectory.
    /// Unset: on for the linear family only.
    std::optional<bool> rescale_inputs;

    gram::QuadratureSpec quadrature;
    solver::SolverConfig solver;
    /// Clamp F_hat at zero when continuing trajectories (population systems).
    bool nonneg_f = false;

    void validate() const;
};

/// A fitted system: smoothers, component kernels, Gram tensors and one
/// EquationFit per coordinate.
struct KodeModel {
    int p = 0;
    Eigen::VectorXd times;  ///< raw observation times
    double time_span = 1.0;
    std::vector<Eigen::MatrixXd> observations;                    ///< per replicate, n x p
    std::vector<std::vector<trajectory::TrajectoryFit>> trajectories;  ///< [replicate][coordinate]
    std::vector<kernels::KernelSpec> kernels;
    gram::QuadratureSpec quadrature;
    solver::SolverConfig solver;
    bool nonneg_f = false;
    std::vector<solver::EquationFit> equations;
    gram::GramTensors grams;
    /// W c_j on the quadrature nodes, filled by prepare().
    std::vector<Eigen::VectorXd> node_coefficients;

    int replicate_count() const { return static_cast<int>(observations.size()); }

    /// Recomputes node_coefficients after grams or equations change.
    void prepare();

    /// F_hat_j at an arbitrary state, as a derivative in standardized time.
    double evaluate_f(int equation, const Eigen::VectorXd& state) const;
    Eigen::VectorXd evaluate_f(const Eigen::VectorXd& state) const;

    /// theta_j0 + integral over [0, t] of F_hat_j(x_hat(s)) ds for every j,
    /// t raw and within the observed span.
    Eigen::VectorXd integrated_state(double t, int replicate = 0) const;

    /// Prediction at raw time t: theta0 + integral of F-hat along the smoothed
    /// trajectory x-hat. Beyond the observed span the smoother is extrapolated
    /// and the extra integral uses the trapezoid rule with raw step <= `step`.
    Eigen::VectorXd predict(double t, int replicate = 0, double step = 0.01) const;
};

/// Per-coordinate trajectory smoothing of one replicate (bandwidth CV, then GCV).
std::vector<trajectory::TrajectoryFit> fit_trajectories(const Eigen::VectorXd& times, const Eigen::MatrixXd& y,
                                                        const PipelineConfig& config);

/// Component kernels for the fitted node states (rescale ranges come from them).
std::vector<kernels::KernelSpec> component_kernels(const Eigen::MatrixXd& node_states, const PipelineConfig& config);

/// Gram tensors of a model from its stored trajectories and kernels.
gram::GramTensors rebuild_grams(const KodeModel& model);

/// Runs the full pipeline; several replicates are pooled.
KodeModel fit_model(const sim::Dataset& data, const PipelineConfig& config);

/// Pools separately supplied experiments on a common time grid.
KodeModel fit_model_multi(const std::vector<sim::Dataset>& experiments, const PipelineConfig& config);

}  // namespace kode::model
