#pragma once

#include "kode/gram.hpp"
#include "kode/kernels.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace kode::solver {

struct SolverConfig {
    int max_iterations = 10;
    double block_tolerance = 1e-6;  ///< relative change of every parameter block
    std::vector<double> eta_grid;   ///< defaults to 20 log-spaced points on [1e-6, 1]
    std::vector<double> kappa_grid; ///< defaults to 20 log-spaced points on [1e-6, 1]
    int cv_folds = 10;
    double theta_init = 1.0;
    std::uint64_t seed = 0;
    double collinearity_threshold = 10.0;
    /// Stop re-tuning eta and kappa after this many outer iterations (0: never).
    int freeze_tuning_after = 0;

    SolverConfig();
    void validate() const;
};

/// Q1 spans B, Q2 its orthogonal complement; B = Q1 * r.
struct BasisSplit {
    Eigen::VectorXd Q1;
    Eigen::MatrixXd Q2;
    double r = 0.0;
};

BasisSplit split_basis(const Eigen::VectorXd& B);

struct FStep {
    double b = 0.0;
    Eigen::VectorXd c;
};

/// Closed-form minimizer of (1/n)||y - Bb - Sigma c||^2 + eta c' Sigma c:
///   c = Q2 (Q2' W Q2)^{-1} Q2' y,  b = r^{-1} Q1' (y - W c),  W = Sigma + n eta I.
FStep solve_f_step(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& B,
                   const Eigen::VectorXd& y_centered, double eta);

/// A(eta) = I - n eta Q2 (Q2' W Q2)^{-1} Q2'.
Eigen::MatrixXd smoothing_matrix(double eta, const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& Q2);

/// ||(A - I) y||^2 / [tr(I - A) / n]^2 on the grid, ties toward larger eta.
double gcv_eta(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& B,
               const Eigen::VectorXd& y_centered, const std::vector<double>& eta_grid);

struct LassoOptions {
    double tolerance = 1e-10;    ///< max absolute coordinate change per sweep (or its rounding floor)
    long max_sweeps = 100000;
};

/// (z - G theta)'(z - G theta) + n kappa sum(theta), n = rows of G.
double lasso_objective(const Eigen::VectorXd& z, const Eigen::MatrixXd& G, double kappa,
                       const Eigen::VectorXd& theta);

/// Nonnegative Lasso by cyclic coordinate descent in column order.
Eigen::VectorXd lasso_theta_step(const Eigen::VectorXd& z, const Eigen::MatrixXd& G, double kappa,
                                 const Eigen::VectorXd* warm_start = nullptr,
                                 const LassoOptions& options = {});

/// Same solver on sufficient statistics H = G'G, g = G'z with penalty weight
/// `penalty` (n kappa above). Warm-starts from and overwrites `theta`.
void lasso_gram(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, double penalty,
                Eigen::VectorXd& theta, const LassoOptions& options = {});

/// Row-wise K-fold CV of kappa; folds come from a seeded shuffle. Ties go to
/// the larger kappa.
double cv_kappa(const Eigen::VectorXd& z, const Eigen::MatrixXd& G,
                const std::vector<double>& kappa_grid, int folds, std::uint64_t seed);

/// Fold label of every row used by cv_kappa.
std::vector<int> cv_fold_labels(Eigen::Index rows, int folds, std::uint64_t seed);

/// Columns Sigma^m c in canonical component order.
Eigen::MatrixXd theta_design(const gram::GramTensors& grams, const Eigen::VectorXd& c);

/// z = y - (1/2) n eta c - B b.
Eigen::VectorXd theta_response(const Eigen::VectorXd& y_centered, const Eigen::VectorXd& B,
                               const FStep& f, double eta);

/// ||P^m F||_H = theta_m sqrt(c' Sigma^m c).
double component_norm(const kernels::ThetaVector& theta, const gram::GramTensors& grams,
                      const Eigen::VectorXd& c, int index);

/// Fitted state of one equation.
struct EquationFit {
    int equation = 0;
    Eigen::VectorXd theta0;   ///< intercept per replicate
    Eigen::VectorXd y_mean;   ///< per-replicate response mean
    double b = 0.0;
    Eigen::VectorXd c;
    kernels::ThetaVector theta;
    double eta = 0.0;
    double kappa = 0.0;
    std::vector<int> support;
    int iterations = 0;
    bool converged = false;
    std::vector<double> objective_trace;
    Eigen::VectorXd collinearity_main;   ///< 0 for inactive components
    Eigen::VectorXd collinearity_inter;
    bool identifiability_warning = false;

    /// Stacked centered response and the final Lasso problem, kept for inference.
    Eigen::VectorXd y_centered;
    Eigen::VectorXd z;
    Eigen::MatrixXd G;
};

struct Collinearity {
    Eigen::VectorXd main;
    Eigen::VectorXd inter;
    bool flagged = false;
};

/// Square roots of the diagonal of the inverse cosine matrix of the fitted
/// component vectors theta_m Sigma^m c. A singular matrix yields +inf.
Collinearity collinearity_indices(const EquationFit& fit, const gram::GramTensors& grams,
                                  double threshold = 10.0);

/// theta0 = ybar - integral of Tbar F_hat.
double update_theta0(double f_hat_integral_mean, double y_bar);

/// F_hat on every node (stacked over replicates).
Eigen::VectorXd functional_on_nodes(const gram::GramTensors& grams, const kernels::ThetaVector& theta,
                                    double b, const Eigen::VectorXd& c);

/// Integral of Tbar F_hat for each replicate.
Eigen::VectorXd mean_integral(const gram::GramTensors& grams, const kernels::ThetaVector& theta,
                              double b, const Eigen::VectorXd& c);

/// Alternating block solver for one equation. Exposed so that individual
/// block updates can be driven with frozen tuning parameters.
class EquationSolver {
public:
    EquationSolver(const gram::GramTensors& grams, std::vector<Eigen::VectorXd> y_per_replicate,
                   SolverConfig config, int equation = 0);

    /// theta0 = ybar - integral of Tbar F_hat for the current F_hat.
    void update_theta0();
    /// Closed-form F-step on the centered data. It is the exact minimizer over
    /// (theta0, F) for fixed theta, so theta0 is re-profiled afterwards.
    void update_f(double eta);
    /// Nonnegative-Lasso theta-step; likewise re-profiles theta0.
    void update_theta(double kappa);
    double tune_eta() const;
    double tune_kappa() const;

    /// Penalized least-squares objective at the current state.
    double objective() const;

    EquationFit run();

    const EquationFit& state() const { return fit_; }
    EquationFit& state() { return fit_; }

private:
    Eigen::VectorXd stacked_theta0() const;

    const gram::GramTensors& grams_;
    SolverConfig config_;
    Eigen::VectorXd y_;  ///< stacked raw responses
    Eigen::Index n_ = 0;
    EquationFit fit_;
};

/// Single experiment.
EquationFit fit_kode(const Eigen::VectorXd& y, const gram::GramTensors& grams,
                     const SolverConfig& config, int equation = 0);

/// Pooled replicates sharing one set of Gram tensors (built over all replicates).
EquationFit fit_kode_multi(const std::vector<Eigen::VectorXd>& y_per_replicate,
                           const gram::GramTensors& grams, const SolverConfig& config,
                           int equation = 0);

}  // namespace kode::solver
