#include "kode/gram.hpp"

#include "kode/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace kode::gram {

void QuadratureSpec::validate() const {
    if (scheme == QuadratureScheme::trapezoid_grid && nodes < 16) {
        throw ConfigError("trapezoid quadrature needs at least 16 nodes per axis (got " +
                          std::to_string(nodes) + ")");
    }
    if (scheme == QuadratureScheme::monte_carlo && nodes < 1) {
        throw ConfigError("Monte Carlo quadrature needs at least one draw");
    }
}

QuadratureRule::QuadratureRule(const Eigen::VectorXd& times01, const QuadratureSpec& spec) : spec_(spec) {
    spec.validate();
    if (times01.size() < 1) throw DataError("quadrature needs at least one time point");
    if (spec.scheme == QuadratureScheme::trapezoid_grid) {
        nodes_ = Eigen::VectorXd::LinSpaced(spec.nodes, 0.0, 1.0);
    } else {
        std::mt19937_64 rng(spec.seed);
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        nodes_.resize(spec.nodes);
        for (auto& s : nodes_) s = uniform(rng);
    }
    const Eigen::Index n = times01.size();
    centered_.resize(nodes_.size(), n);
    for (Eigen::Index i = 0; i < n; ++i) centered_.col(i) = partial_weights(times01(i));
    mean_ = centered_.rowwise().mean();
    centered_.colwise() -= mean_;
}

Eigen::VectorXd QuadratureRule::partial_weights(double upper) const {
    const Eigen::Index m = nodes_.size();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
    if (spec_.scheme == QuadratureScheme::monte_carlo) {
        for (Eigen::Index q = 0; q < m; ++q) {
            if (nodes_(q) <= upper) w(q) = 1.0 / static_cast<double>(m);
        }
        return w;
    }
    const double h = 1.0 / static_cast<double>(m - 1);
    const double a = std::clamp(upper, 0.0, 1.0);
    for (Eigen::Index q = 0; q + 1 < m; ++q) {
        const double left = nodes_(q);
        if (left >= a) break;
        const double delta = std::min(a - left, h);
        // Exact integral of the linear interpolant over [left, left + delta].
        w(q) += delta - delta * delta / (2.0 * h);
        w(q + 1) += delta * delta / (2.0 * h);
    }
    return w;
}

Eigen::VectorXd build_B(const Eigen::VectorXd& times, double span) {
    if (times.size() < 1) throw DataError("build_B: no time points");
    for (Eigen::Index i = 0; i < times.size(); ++i) {
        if (times(i) < 0.0 || times(i) > span * (1.0 + 1e-12)) {
            throw RangeError("build_B: time " + std::to_string(times(i)) + " outside [0, span]");
        }
    }
    if (!(span > 0.0)) throw RangeError("build_B: span must be positive");
    const Eigen::ArrayXd s = times.array() / span;
    return (s - s.mean()).matrix();
}

Eigen::MatrixXd integrate_kernel(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& node_kernel) {
    Eigen::MatrixXd out = weights.transpose() * (node_kernel * weights);
    return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd node_kernel(const kernels::KernelSpec& kernel, const Eigen::VectorXd& states) {
    const Eigen::Index m = states.size();
    Eigen::VectorXd transformed(m);
    for (Eigen::Index q = 0; q < m; ++q) transformed(q) = kernel.transform(states(q));
    Eigen::MatrixXd K(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b <= a; ++b) K(a, b) = K(b, a) = kernel.raw(transformed(a), transformed(b));
    }
    return K;
}

const Eigen::MatrixXd& GramTensors::sigma(int component) const {
    if (component < 0 || component >= component_count()) throw RangeError("component index out of range");
    return component < p ? sigma_main[component] : sigma_inter[component - p];
}

Eigen::MatrixXd GramTensors::component_node_kernel(int component) const {
    const auto layout = kernels::component_layout(p);
    const auto& c = layout.at(component);
    if (c.is_main()) return main_node_kernels[c.k];
    return main_node_kernels[c.k].cwiseProduct(main_node_kernels[c.l]);
}

Eigen::MatrixXd trajectory_node_states(const std::vector<trajectory::TrajectoryFit>& fits,
                                       const QuadratureRule& rule, double span) {
    Eigen::MatrixXd states(rule.node_count(), static_cast<Eigen::Index>(fits.size()));
    for (std::size_t k = 0; k < fits.size(); ++k) {
        for (Eigen::Index q = 0; q < rule.node_count(); ++q) {
            states(q, static_cast<Eigen::Index>(k)) = fits[k](rule.nodes()(q) * span);
        }
    }
    return states;
}

namespace {

Eigen::VectorXd standardize(const Eigen::VectorXd& times, double span) {
    if (!(span > 0.0)) throw RangeError("time span must be positive");
    return times / span;
}

}  // namespace

Eigen::MatrixXd build_sigma_main(const std::vector<trajectory::TrajectoryFit>& fits,
                                 const Eigen::VectorXd& times, double span,
                                 const kernels::KernelSpec& kernel_k, int k,
                                 const QuadratureSpec& quadrature) {
    if (k < 0 || k >= static_cast<int>(fits.size())) throw RangeError("build_sigma_main: coordinate out of range");
    const QuadratureRule rule(standardize(times, span), quadrature);
    const Eigen::MatrixXd states = trajectory_node_states(fits, rule, span);
    return integrate_kernel(rule.centered_weights(), node_kernel(kernel_k, states.col(k)));
}

Eigen::MatrixXd build_sigma_inter(const std::vector<trajectory::TrajectoryFit>& fits,
                                  const Eigen::VectorXd& times, double span,
                                  const kernels::KernelSpec& kernel_k, const kernels::KernelSpec& kernel_l,
                                  int k, int l, const QuadratureSpec& quadrature) {
    const int p = static_cast<int>(fits.size());
    if (k == l) throw RangeError("build_sigma_inter: interaction requires k != l");
    if (k < 0 || l < 0 || k >= p || l >= p) throw RangeError("build_sigma_inter: coordinate out of range");
    const QuadratureRule rule(standardize(times, span), quadrature);
    const Eigen::MatrixXd states = trajectory_node_states(fits, rule, span);
    const Eigen::MatrixXd K = node_kernel(kernel_k, states.col(k)).cwiseProduct(node_kernel(kernel_l, states.col(l)));
    return integrate_kernel(rule.centered_weights(), K);
}

GramTensors build_gram_tensors_from_states(const Eigen::VectorXd& times01, double span,
                                           const Eigen::MatrixXd& node_states, int replicates,
                                           const std::vector<kernels::KernelSpec>& kernels,
                                           const QuadratureSpec& quadrature) {
    if (replicates < 1) throw ConfigError("gram: replicates must be positive");
    const int p = static_cast<int>(kernels.size());
    if (node_states.cols() != p) throw DimensionError("gram: node states and kernels disagree on p");
    for (const auto& k : kernels) k.validate();

    GramTensors g;
    g.p = p;
    g.replicates = replicates;
    g.times = times01;
    g.time_span = span;
    g.quadrature = quadrature;
    g.rule = QuadratureRule(times01, quadrature);
    g.kernels = kernels;

    const Eigen::Index m = g.rule.node_count();
    const Eigen::Index n = times01.size();
    if (node_states.rows() != m * replicates) {
        throw DimensionError("gram: expected " + std::to_string(m * replicates) + " node states, got " +
                             std::to_string(node_states.rows()));
    }
    if (!node_states.allFinite()) throw NumericalError("gram: fitted trajectory is not finite on the nodes");
    g.node_states = node_states;

    g.weights = Eigen::MatrixXd::Zero(m * replicates, n * replicates);
    g.B.resize(n * replicates);
    const Eigen::VectorXd B = build_B(times01, 1.0);
    for (int r = 0; r < replicates; ++r) {
        g.weights.block(r * m, r * n, m, n) = g.rule.centered_weights();
        g.B.segment(r * n, n) = B;
    }

    g.main_node_kernels.resize(p);
    g.sigma_main.resize(p);
    for (int k = 0; k < p; ++k) {
        g.main_node_kernels[k] = node_kernel(kernels[k], node_states.col(k));
        g.sigma_main[k] = integrate_kernel(g.weights, g.main_node_kernels[k]);
    }
    g.sigma_inter.resize(static_cast<std::size_t>(p) * (p - 1));
    for (int k = 0; k < p; ++k) {
        for (int l = k + 1; l < p; ++l) {
            const Eigen::MatrixXd K = g.main_node_kernels[k].cwiseProduct(g.main_node_kernels[l]);
            Eigen::MatrixXd S = integrate_kernel(g.weights, K);
            g.sigma_inter[kernels::interaction_index(p, l, k) - p] = S;
            g.sigma_inter[kernels::interaction_index(p, k, l) - p] = std::move(S);
        }
    }
    return g;
}

GramTensors build_gram_tensors(const std::vector<std::vector<trajectory::TrajectoryFit>>& fits,
                               const Eigen::VectorXd& times, double span,
                               const std::vector<kernels::KernelSpec>& kernels,
                               const QuadratureSpec& quadrature) {
    if (fits.empty()) throw DataError("gram: no trajectory fits");
    const auto times01 = standardize(times, span);
    const QuadratureRule rule(times01, quadrature);
    const Eigen::Index m = rule.node_count();
    const auto p = static_cast<Eigen::Index>(kernels.size());
    Eigen::MatrixXd states(m * static_cast<Eigen::Index>(fits.size()), p);
    for (std::size_t r = 0; r < fits.size(); ++r) {
        if (static_cast<Eigen::Index>(fits[r].size()) != p) {
            throw DimensionError("gram: replicate " + std::to_string(r + 1) + " has the wrong number of fits");
        }
        states.block(static_cast<Eigen::Index>(r) * m, 0, m, p) = trajectory_node_states(fits[r], rule, span);
    }
    return build_gram_tensors_from_states(times01, span, states, static_cast<int>(fits.size()), kernels,
                                          quadrature);
}

Eigen::MatrixXd assemble_sigma(const kernels::ThetaVector& theta, const GramTensors& grams) {
    if (theta.size() != grams.component_count()) throw DimensionError("assemble_sigma: theta has the wrong length");
    if ((theta.values().array() < 0.0).any()) throw DomainError("assemble_sigma: theta entries must be nonnegative");
    return combine_sigma(theta.values(), grams);
}

Eigen::MatrixXd combine_sigma(const Eigen::VectorXd& weights, const GramTensors& grams) {
    if (weights.size() != grams.component_count()) throw DimensionError("combine_sigma: weights have the wrong length");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(grams.rows(), grams.rows());
    for (int c = 0; c < grams.component_count(); ++c) {
        if (weights(c) != 0.0) out.noalias() += weights(c) * grams.sigma(c);
    }
    return out;
}

}  // namespace kode::gram
