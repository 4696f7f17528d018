#pragma once

#include "kode/kernels.hpp"
#include "kode/trajectory.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace kode::gram {

enum class QuadratureScheme { trapezoid_grid, monte_carlo };

struct QuadratureSpec {
    QuadratureScheme scheme = QuadratureScheme::trapezoid_grid;
    int nodes = 200;  ///< nodes per axis (trapezoid) or number of draws (Monte Carlo)
    std::uint64_t seed = 0;

    void validate() const;
};

/// Quadrature on the standardized interval [0, 1] for integrands of the form
/// w(s) g(s) with indicator weights w built from T_i(s) = 1{s <= t_i}.
///
/// The trapezoid rule integrates the piecewise-linear interpolant of g, so
/// indicator cut points falling between nodes are handled exactly for linear g.
/// The Monte Carlo rule averages over uniform draws shared by every weight.
class QuadratureRule {
public:
    QuadratureRule() = default;
    QuadratureRule(const Eigen::VectorXd& times01, const QuadratureSpec& spec);

    const Eigen::VectorXd& nodes() const { return nodes_; }
    Eigen::Index node_count() const { return nodes_.size(); }
    /// Column i integrates against T_i - Tbar.
    const Eigen::MatrixXd& centered_weights() const { return centered_; }
    /// Integrates against Tbar.
    const Eigen::VectorXd& mean_weights() const { return mean_; }
    /// Integrates over [0, upper].
    Eigen::VectorXd partial_weights(double upper) const;

private:
    QuadratureSpec spec_;
    Eigen::VectorXd nodes_;
    Eigen::MatrixXd centered_;
    Eigen::VectorXd mean_;
};

/// B_i = s_i - mean(s) with s = t / span: the integral of T_i - Tbar over standardized time.
Eigen::VectorXd build_B(const Eigen::VectorXd& times, double span);

/// W^T K W with K the kernel evaluated on the node states, symmetrized.
Eigen::MatrixXd integrate_kernel(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& node_kernel);

/// Kernel matrix K(x_q, x_q') over node states for one coordinate.
Eigen::MatrixXd node_kernel(const kernels::KernelSpec& kernel, const Eigen::VectorXd& states);

/// Integral operators shared by every equation of a fit. With R replicates the
/// node set is the concatenation of R copies of the quadrature nodes, each
/// carrying that replicate's fitted states, and the observation index runs
/// over (replicate, time) pairs.
struct GramTensors {
    int p = 0;
    int replicates = 1;
    Eigen::VectorXd times;      ///< standardized to [0, 1]
    double time_span = 1.0;     ///< raw span mapped onto [0, 1]
    QuadratureSpec quadrature;
    QuadratureRule rule;
    std::vector<kernels::KernelSpec> kernels;
    Eigen::MatrixXd node_states;               ///< (R m) x p
    Eigen::MatrixXd weights;                   ///< (R m) x (R n), block diagonal
    Eigen::VectorXd B;                         ///< length R n
    std::vector<Eigen::MatrixXd> sigma_main;   ///< p matrices (R n) x (R n)
    std::vector<Eigen::MatrixXd> sigma_inter;  ///< p(p-1) matrices, canonical order
    std::vector<Eigen::MatrixXd> main_node_kernels;  ///< p matrices (R m) x (R m)

    Eigen::Index n() const { return times.size(); }
    Eigen::Index rows() const { return B.size(); }
    int component_count() const { return p * p; }
    const Eigen::MatrixXd& sigma(int component) const;
    /// Kernel of one component over all nodes (product for interactions).
    Eigen::MatrixXd component_node_kernel(int component) const;
};

/// Fitted states of `fits` (one per coordinate) on the quadrature nodes, with
/// node s mapped to raw time s * span.
Eigen::MatrixXd trajectory_node_states(const std::vector<trajectory::TrajectoryFit>& fits,
                                       const QuadratureRule& rule, double span);

/// Single-coordinate Gram matrix Sigma^k for one set of trajectory fits.
/// `times` are raw; they are standardized by `span` before integration.
Eigen::MatrixXd build_sigma_main(const std::vector<trajectory::TrajectoryFit>& fits,
                                 const Eigen::VectorXd& times, double span,
                                 const kernels::KernelSpec& kernel_k, int k,
                                 const QuadratureSpec& quadrature);

/// Product-kernel Gram matrix Sigma^{kl}; k == l raises RangeError.
Eigen::MatrixXd build_sigma_inter(const std::vector<trajectory::TrajectoryFit>& fits,
                                  const Eigen::VectorXd& times, double span,
                                  const kernels::KernelSpec& kernel_k,
                                  const kernels::KernelSpec& kernel_l, int k, int l,
                                  const QuadratureSpec& quadrature);

/// Builds every Sigma^k and Sigma^{kl}. `fits[r][k]` is the fit of coordinate
/// k in replicate r; `kernels[k]` is the component kernel of coordinate k.
GramTensors build_gram_tensors(const std::vector<std::vector<trajectory::TrajectoryFit>>& fits,
                               const Eigen::VectorXd& times, double span,
                               const std::vector<kernels::KernelSpec>& kernels,
                               const QuadratureSpec& quadrature);

/// Lower-level variant taking node states directly; node_states is (R m) x p.
GramTensors build_gram_tensors_from_states(const Eigen::VectorXd& times01, double span,
                                           const Eigen::MatrixXd& node_states, int replicates,
                                           const std::vector<kernels::KernelSpec>& kernels,
                                           const QuadratureSpec& quadrature);

/// Sum_m theta_m Sigma^m over nonzero entries. Negative entries raise DomainError.
Eigen::MatrixXd assemble_sigma(const kernels::ThetaVector& theta, const GramTensors& grams);

/// Same linear combination without the sign check (least-squares refits).
Eigen::MatrixXd combine_sigma(const Eigen::VectorXd& weights, const GramTensors& grams);

}  // namespace kode::gram
