#pragma once

#include "kode/kernels.hpp"

#include <Eigen/Dense>

#include <vector>

namespace kode::trajectory {

/// Kernel ridge smoother x_hat(t) = sum_i a_i K(t, t_i) over time.
struct TrajectoryFit {
    kernels::KernelSpec kernel;
    Eigen::VectorXd coefficients;
    Eigen::VectorXd train_times;
    Eigen::VectorXd fitted_values;
    double lambda = 0.0;
    double gcv_score = 0.0;

    /// Sets `*extrapolated` when t lies outside [0, max(train_times)].
    double operator()(double t, bool* extrapolated = nullptr) const;
};

/// `count` log-spaced points on [lo, hi].
std::vector<double> log_grid(double lo, double hi, int count);

/// 30 points on [1e-8, 1e1].
std::vector<double> default_lambda_grid();

/// Bandwidth candidates scaled to the observed time span.
std::vector<double> default_nu_grid(double span);

/// Gram matrix K(t_i, t_i').
Eigen::MatrixXd time_gram(const kernels::KernelSpec& kernel, const Eigen::VectorXd& times);

/// Minimizes (1/n)||y - z(t)||^2 + lambda ||z||^2 for every lambda on the grid
/// and keeps the GCV winner, GCV(lambda) = n ||(I - A)y||^2 / tr(I - A)^2 with
/// A = K (K + n lambda I)^{-1}. Ties go to the larger lambda.
TrajectoryFit fit_trajectory(const Eigen::VectorXd& times, const Eigen::VectorXd& y,
                             const kernels::KernelSpec& kernel,
                             const std::vector<double>& lambda_grid);

double evaluate_trajectory(const TrajectoryFit& fit, double t, bool* extrapolated = nullptr);

/// Contiguous-block K-fold cross-validation of the bandwidth. For each nu the
/// ridge penalty is the full-data GCV choice; each fold refits on the remaining
/// blocks with that penalty and scores the held-out block. Returns the kernel
/// with the smallest mean held-out squared error, ties toward larger nu.
kernels::KernelSpec select_bandwidth(const Eigen::VectorXd& times, const Eigen::VectorXd& y,
                                     kernels::KernelFamily family,
                                     const std::vector<double>& nu_grid, int folds,
                                     const std::vector<double>& lambda_grid = default_lambda_grid());

/// Held-out mean squared error for one bandwidth (the CV objective above).
double bandwidth_cv_error(const Eigen::VectorXd& times, const Eigen::VectorXd& y,
                          const kernels::KernelSpec& kernel, int folds,
                          const std::vector<double>& lambda_grid);

}  // namespace kode::trajectory
