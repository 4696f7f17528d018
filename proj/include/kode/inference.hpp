#pragma once

#include "kode/gram.hpp"
#include "kode/model.hpp"
#include "kode/solver.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace kode::inference {

enum class FamilyProvenance { all_subsets, lasso_path, explicit_list };

/// Candidate supports over which the post-selection maximum is taken.
struct ModelFamily {
    std::vector<std::vector<int>> models;
    FamilyProvenance provenance = FamilyProvenance::explicit_list;

    std::size_t size() const { return models.size(); }
    bool contains(const std::vector<int>& support) const;
};

/// Every subset of {0, ..., component_count - 1}; refused above 12 components.
ModelFamily all_subsets(int component_count);

/// Distinct supports visited along a log-spaced kappa path from the smallest
/// kappa that zeroes every coordinate down to 1e-4 of it, plus `selected`.
ModelFamily lasso_path_family(const Eigen::VectorXd& z, const Eigen::MatrixXd& G, const std::vector<int>& selected,
                              int points = 50);

/// All subsets when there are at most 12 components, the Lasso path otherwise.
ModelFamily default_family(const solver::EquationFit& fit, int component_count);

/// Unpenalized least squares of z on the columns of G in `support`
/// (sign-unconstrained, minimum-norm when rank deficient); zero elsewhere.
Eigen::VectorXd ls_refit(const std::vector<int>& support, const Eigen::VectorXd& z, const Eigen::MatrixXd& G);

/// Smoothing matrix of the F-step for the component weights `theta`
/// (signed weights allowed) at fixed eta.
Eigen::MatrixXd model_smoother(const Eigen::VectorXd& theta, const gram::GramTensors& grams, double eta);

/// Chi-square CDF with `dof` degrees of freedom.
double chi2_cdf(double x, double dof);

/// Solves N^{-1} sum_v D_U(c / c_v) = 1 - alpha for c on [0, 10 sqrt(n)] to
/// 1e-7 with a bracketing root finder, where D_U(t) = D_chi2(n)(t^2).
double cutoff_from_maxima(const Eigen::VectorXd& maxima, double alpha, Eigen::Index n);

/// Uniform draws on the unit sphere in R^n, one per column.
Eigen::MatrixXd sphere_draws(Eigen::Index n, int draws, std::uint64_t seed);

struct Cutoffs {
    Eigen::VectorXd per_row;  ///< c0 for each time index
    double global = 0.0;      ///< maximum also taken over time indices
};

/// Cutoffs for smoothers A_M (one per model) with rows normalized to unit
/// length; rows of zero norm contribute nothing.
Cutoffs c0_compute(const std::vector<Eigen::MatrixXd>& smoothers, double alpha, int draws, std::uint64_t seed);

/// ||A y - y||^2 / tr(I - A).
double sigma_hat(const Eigen::MatrixXd& A, const Eigen::VectorXd& y_centered);

struct BandOptions {
    double alpha = 0.05;
    int draws = 10000;
    std::uint64_t seed = 0;
    bool global_cutoff = false;  ///< use the max-over-rows cutoff for every row
};

/// Post-selection band for one equation; rows follow the stacked
/// (replicate, time) order.
struct ConfidenceBand {
    int equation = 0;
    double alpha = 0.05;
    Eigen::VectorXd times;  ///< raw time of each row
    Eigen::VectorXi replicate;
    Eigen::VectorXd center;
    Eigen::VectorXd half_width;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    Eigen::VectorXd c0;
    double global_c0 = 0.0;
    double sigma_hat = 0.0;
    Eigen::VectorXd row_norms;
    std::vector<int> support;
    Eigen::VectorXd refit_theta;
    Eigen::MatrixXd smoother;  ///< A_M of the selected model
    std::size_t family_size = 0;
};

ConfidenceBand confidence_band(const model::KodeModel& model, int equation, const ModelFamily& family,
                               const BandOptions& options);

/// Same band with the cutoff replaced by the normal quantile z_{alpha/2}.
ConfidenceBand naive_band(const ConfidenceBand& band);

/// Standard-normal upper alpha/2 quantile.
double normal_quantile(double alpha);

}  // namespace kode::inference
