#include "kode/solver.hpp"

#include "kode/errors.hpp"
#include "kode/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace kode::solver {

SolverConfig::SolverConfig()
    : eta_grid(trajectory::log_grid(1e-6, 1.0, 20)), kappa_grid(trajectory::log_grid(1e-6, 1.0, 20)) {}

namespace {

void check_grid(const std::vector<double>& grid, const char* what) {
    if (grid.empty()) throw ConfigError(std::string(what) + " grid is empty");
    for (double g : grid) {
        if (!(g >= 0.0) || !std::isfinite(g)) throw ConfigError(std::string(what) + " grid must be nonnegative and finite");
    }
}

std::vector<double> descending(const std::vector<double>& grid) {
    std::vector<double> out(grid);
    std::sort(out.begin(), out.end(), std::greater<>());
    return out;
}

/// Eigen decomposition of Q2' Sigma Q2, shared by GCV and the F-step.
struct ReducedSystem {
    BasisSplit basis;
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd Q2V;  ///< Q2 times the eigenvectors

    ReducedSystem(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& B) : basis(split_basis(B)) {
        const Eigen::MatrixXd M = basis.Q2.transpose() * sigma * basis.Q2;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (M + M.transpose()));
        if (eig.info() != Eigen::Success) throw NumericalError("eigen decomposition of the reduced Gram failed");
        eigenvalues = eig.eigenvalues().cwiseMax(0.0);
        Q2V = basis.Q2 * eig.eigenvectors();
    }
};

double relative_change(const Eigen::VectorXd& now, const Eigen::VectorXd& before) {
    const double scale = std::max(now.norm(), before.norm());
    if (scale == 0.0) return 0.0;
    return (now - before).norm() / scale;
}

}  // namespace

void SolverConfig::validate() const {
    if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
    if (!(block_tolerance > 0.0)) throw ConfigError("block_tolerance must be positive");
    check_grid(eta_grid, "eta");
    check_grid(kappa_grid, "kappa");
    for (double e : eta_grid) {
        if (!(e > 0.0)) throw ConfigError("eta grid must be positive");
    }
    if (cv_folds < 2) throw ConfigError("cv_folds must be at least 2");
    if (!(theta_init >= 0.0)) throw ConfigError("theta_init must be nonnegative");
    if (freeze_tuning_after < 0) throw ConfigError("freeze_tuning_after must be nonnegative");
}

BasisSplit split_basis(const Eigen::VectorXd& B) {
    const Eigen::Index n = B.size();
    if (n < 2) throw DimensionError("split_basis: need at least two rows");
    if (!(B.norm() > 0.0)) throw DataError("split_basis: B is zero (time points must not all coincide)");
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(B);
    const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
    BasisSplit out;
    out.Q1 = Q.col(0);
    out.Q2 = Q.rightCols(n - 1);
    out.r = qr.matrixQR()(0, 0);
    return out;
}

FStep solve_f_step(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& B, const Eigen::VectorXd& y_centered,
                   double eta) {
    const Eigen::Index n = B.size();
    if (sigma.rows() != n || sigma.cols() != n || y_centered.size() != n) {
        throw DimensionError("solve_f_step: Sigma, B and y disagree in size");
    }
    if (!(eta > 0.0)) throw RangeError("solve_f_step: eta must be positive");
    const BasisSplit basis = split_basis(B);
    Eigen::MatrixXd W = sigma;
    W.diagonal().array() += static_cast<double>(n) * eta;
    const Eigen::MatrixXd M = basis.Q2.transpose() * W * basis.Q2;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(0.5 * (M + M.transpose()));
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) {
        std::ostringstream msg;
        msg << "solve_f_step: reduced system is numerically singular at eta = " << eta
            << "; increase eta (or kappa) to restore identifiability";
        throw NumericalError(msg.str());
    }
    FStep out;
    out.c = basis.Q2 * ldlt.solve(basis.Q2.transpose() * y_centered);
    out.b = basis.Q1.dot(y_centered - W * out.c) / basis.r;
    return out;
}

Eigen::MatrixXd smoothing_matrix(double eta, const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& Q2) {
    const Eigen::Index n = sigma.rows();
    if (Q2.rows() != n) throw DimensionError("smoothing_matrix: Q2 and Sigma disagree in size");
    if (!(eta > 0.0)) throw RangeError("smoothing_matrix: eta must be positive");
    Eigen::MatrixXd W = sigma;
    W.diagonal().array() += static_cast<double>(n) * eta;
    const Eigen::MatrixXd M = Q2.transpose() * W * Q2;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(0.5 * (M + M.transpose()));
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) {
        throw NumericalError("smoothing_matrix: reduced system is numerically singular; increase eta");
    }
    Eigen::MatrixXd A = -static_cast<double>(n) * eta * (Q2 * ldlt.solve(Q2.transpose()));
    A.diagonal().array() += 1.0;
    return A;
}

double gcv_eta(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& B, const Eigen::VectorXd& y_centered,
               const std::vector<double>& eta_grid) {
    check_grid(eta_grid, "eta");
    const auto grid = descending(eta_grid);
    if (grid.size() == 1) return grid.front();
    const ReducedSystem sys(sigma, B);
    const auto n = static_cast<double>(B.size());
    const Eigen::VectorXd r = sys.Q2V.transpose() * y_centered;

    double best = std::numeric_limits<double>::infinity();
    double best_eta = grid.front();
    for (double eta : grid) {
        if (!(eta > 0.0)) continue;
        const double shift = n * eta;
        double rss = 0.0, trace = 0.0;
        for (Eigen::Index k = 0; k < r.size(); ++k) {
            const double w = shift / (sys.eigenvalues(k) + shift);
            rss += w * w * r(k) * r(k);
            trace += w;
        }
        const double score = rss / std::pow(trace / n, 2);
        if (std::isfinite(score) && score < best) {
            best = score;
            best_eta = eta;
        }
    }
    if (!std::isfinite(best)) throw NumericalError("gcv_eta: every eta on the grid is ill-conditioned");
    return best_eta;
}

double lasso_objective(const Eigen::VectorXd& z, const Eigen::MatrixXd& G, double kappa,
                       const Eigen::VectorXd& theta) {
    return (z - G * theta).squaredNorm() + static_cast<double>(G.rows()) * kappa * theta.sum();
}

namespace {

/// Coordinate descent sweeps between exact active-set refinements.
constexpr long cd_chunk_sweeps = 3;

/// Exact minimizer of 0.5 t'Ht - q't over t >= 0 by a Lawson-Hanson active-set
/// iteration started from the support of the feasible point `theta`. Returns
/// false when the iteration budget runs out.
bool active_set_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& q, Eigen::VectorXd& theta) {
    const Eigen::Index P = H.rows();
    std::vector<bool> passive(static_cast<std::size_t>(P), false);
    for (Eigen::Index m = 0; m < P; ++m) passive[m] = theta(m) > 0.0;
    const double scale = std::max({1.0, q.cwiseAbs().maxCoeff(), H.diagonal().cwiseAbs().maxCoeff()});
    const Eigen::MatrixXd Habs = H.cwiseAbs();
    constexpr double eps = std::numeric_limits<double>::epsilon();

    const auto restricted_solve = [&](Eigen::VectorXd& s, std::vector<Eigen::Index>& idx) {
        idx.clear();
        for (Eigen::Index m = 0; m < P; ++m) {
            if (passive[m]) idx.push_back(m);
        }
        const auto a = static_cast<Eigen::Index>(idx.size());
        Eigen::MatrixXd Hp(a, a);
        Eigen::VectorXd qp(a);
        for (Eigen::Index i = 0; i < a; ++i) {
            qp(i) = q(idx[i]);
            for (Eigen::Index k = 0; k < a; ++k) Hp(i, k) = H(idx[i], idx[k]);
        }
        // Pivoted LDL' treats vanishing pivots as zero, which gives a valid
        // (not minimum-norm) solution for semidefinite rank-deficient blocks;
        // the orthogonal decomposition is the fallback when it breaks down.
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(Hp);
        s = ldlt.solve(qp);
        if (ldlt.info() == Eigen::Success && s.allFinite()) {
            // Iterative refinement keeps the restricted gradient at rounding level.
            for (int pass = 0; pass < 2; ++pass) s += ldlt.solve(qp - Hp * s);
        }
        if (!s.allFinite() || (Hp * s - qp).norm() > 1e-8 * std::max(1.0, qp.norm())) {
            Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
            cod.setThreshold(1e-14);
            cod.compute(Hp);
            s = cod.solve(qp);
            for (int pass = 0; pass < 2 && s.allFinite(); ++pass) s += cod.solve(qp - Hp * s);
        }
    };

    const long budget = 30 * static_cast<long>(P) + 100;
    const auto settle = [&]() -> bool {
        for (long inner = 0; inner < budget; ++inner) {
            Eigen::VectorXd s;
            std::vector<Eigen::Index> idx;
            restricted_solve(s, idx);
            if (idx.empty()) return true;
            if (!s.allFinite()) return false;
            if (s.minCoeff() > 0.0) {
                for (std::size_t i = 0; i < idx.size(); ++i) theta(idx[i]) = s(static_cast<Eigen::Index>(i));
                return true;
            }
            double step = 1.0;
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const double cur = theta(idx[i]), tgt = s(static_cast<Eigen::Index>(i));
                if (tgt <= 0.0) step = std::min(step, cur / (cur - tgt));
            }
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const Eigen::Index m = idx[i];
                theta(m) += step * (s(static_cast<Eigen::Index>(i)) - theta(m));
                if (theta(m) <= 1e-15 * scale) {
                    theta(m) = 0.0;
                    passive[m] = false;
                }
            }
        }
        return false;
    };

    if (!settle()) return false;
    for (long outer = 0; outer < budget; ++outer) {
        const Eigen::VectorXd w = q - H * theta;
        // A coordinate enters only if its gradient clears the rounding noise of w.
        const Eigen::VectorXd noise = 4.0 * eps * (Habs * theta + q.cwiseAbs());
        Eigen::Index enter = -1;
        double best = 0.0;
        for (Eigen::Index m = 0; m < P; ++m) {
            if (!passive[m] && w(m) > noise(m) && w(m) > best) {
                best = w(m);
                enter = m;
            }
        }
        if (enter < 0) return true;
        passive[enter] = true;
        if (!settle()) return false;
    }
    return false;
}

/// Cyclic coordinate descent sweeps; returns true once a sweep moves no
/// coordinate by more than the tolerance, or by more than the rounding floor
/// of its own update when that floor is larger (badly scaled designs put it
/// above any fixed absolute tolerance).
bool coordinate_sweeps(const Eigen::MatrixXd& H, const Eigen::MatrixXd& Habs, const Eigen::VectorXd& g,
                       double penalty, Eigen::VectorXd& theta, Eigen::VectorXd& Htheta, long sweeps,
                       double tolerance) {
    const Eigen::Index P = H.rows();
    Eigen::VectorXd change(P);
    for (long sweep = 0; sweep < sweeps; ++sweep) {
        double max_change = 0.0;
        change.setZero();
        for (Eigen::Index m = 0; m < P; ++m) {
            const double hmm = H(m, m);
            double updated = 0.0;
            if (hmm > 0.0) {
                const double partial = g(m) - (Htheta(m) - hmm * theta(m));
                updated = std::max(0.0, (partial - 0.5 * penalty) / hmm);
            }
            const double delta = updated - theta(m);
            if (delta != 0.0) {
                Htheta.noalias() += delta * H.col(m);
                theta(m) = updated;
                change(m) = std::abs(delta);
                max_change = std::max(max_change, change(m));
            }
        }
        if (max_change <= tolerance) return true;
        if (max_change < 1e-4 * std::max(1.0, theta.cwiseAbs().maxCoeff())) {
            constexpr double eps = std::numeric_limits<double>::epsilon();
            const Eigen::VectorXd magnitude = Habs * theta.cwiseAbs() + g.cwiseAbs();
            bool settled = true;
            for (Eigen::Index m = 0; m < P && settled; ++m) {
                const double floor = H(m, m) > 0.0 ? 16.0 * eps * (magnitude(m) + penalty) / H(m, m) : 0.0;
                settled = change(m) <= std::max(tolerance, floor);
            }
            if (settled) return true;
        }
    }
    return false;
}

/// Zeroes coordinates whose value is below the rounding floor of their own
/// update, so that support membership never hinges on rounding residue.
void snap_rounding_zeros(const Eigen::MatrixXd& H, const Eigen::MatrixXd& Habs, const Eigen::VectorXd& g,
                         double penalty, Eigen::VectorXd& theta) {
    constexpr double eps = std::numeric_limits<double>::epsilon();
    const Eigen::VectorXd magnitude = Habs * theta.cwiseAbs() + g.cwiseAbs();
    for (Eigen::Index m = 0; m < theta.size(); ++m) {
        if (theta(m) > 0.0 && H(m, m) > 0.0 && theta(m) <= 16.0 * eps * (magnitude(m) + penalty) / H(m, m)) {
            theta(m) = 0.0;
        }
    }
}

}  // namespace

void lasso_gram(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, double penalty, Eigen::VectorXd& theta,
                const LassoOptions& options) {
    const Eigen::Index P = H.rows();
    if (H.cols() != P || g.size() != P) throw DimensionError("lasso: H and g disagree in size");
    if (theta.size() != P) theta = Eigen::VectorXd::Zero(P);
    theta = theta.cwiseMax(0.0);
    Eigen::VectorXd Htheta = H * theta;
    const Eigen::MatrixXd Habs = H.cwiseAbs();
    // Plain sweeps settle well-conditioned problems; ill-conditioned designs
    // stall them, so between chunks the iterate jumps to the exact solution on
    // its current support and the following sweeps certify it.
    long used = 0;
    while (used < options.max_sweeps) {
        const long chunk = std::min(cd_chunk_sweeps, options.max_sweeps - used);
        if (coordinate_sweeps(H, Habs, g, penalty, theta, Htheta, chunk, options.tolerance)) {
            snap_rounding_zeros(H, Habs, g, penalty, theta);
            return;
        }
        used += chunk;
        Eigen::VectorXd exact = theta;
        if (active_set_qp(H, g - Eigen::VectorXd::Constant(P, 0.5 * penalty), exact)) {
            theta = exact;
            Htheta = H * theta;
        }
    }
    std::ostringstream msg;
    msg << "nonnegative Lasso did not converge after " << options.max_sweeps << " sweeps (penalty " << penalty
        << ", " << P << " coordinates)";
    throw NumericalError(msg.str());
}

Eigen::VectorXd lasso_theta_step(const Eigen::VectorXd& z, const Eigen::MatrixXd& G, double kappa,
                                 const Eigen::VectorXd* warm_start, const LassoOptions& options) {
    if (z.size() != G.rows()) throw DimensionError("lasso_theta_step: z and G disagree in rows");
    if (!(kappa >= 0.0)) throw RangeError("lasso_theta_step: kappa must be nonnegative");
    Eigen::VectorXd theta = warm_start ? *warm_start : Eigen::VectorXd::Zero(G.cols());
    const Eigen::MatrixXd H = G.transpose() * G;
    const Eigen::VectorXd g = G.transpose() * z;
    lasso_gram(H, g, static_cast<double>(G.rows()) * kappa, theta, options);
    return theta;
}

std::vector<int> cv_fold_labels(Eigen::Index rows, int folds, std::uint64_t seed) {
    if (folds < 2) throw ConfigError("cross-validation needs at least two folds");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(rows));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> labels(static_cast<std::size_t>(rows));
    for (std::size_t pos = 0; pos < order.size(); ++pos) labels[order[pos]] = static_cast<int>(pos % folds);
    return labels;
}

double cv_kappa(const Eigen::VectorXd& z, const Eigen::MatrixXd& G, const std::vector<double>& kappa_grid, int folds,
                std::uint64_t seed) {
    check_grid(kappa_grid, "kappa");
    if (folds < 2) throw ConfigError("cv_kappa: folds must be at least 2");
    if (z.size() != G.rows()) throw DimensionError("cv_kappa: z and G disagree in rows");
    const auto grid = descending(kappa_grid);
    if (grid.size() == 1) return grid.front();
    const Eigen::Index N = G.rows(), P = G.cols();
    if (folds > N) throw ConfigError("cv_kappa: more folds than rows");
    const auto labels = cv_fold_labels(N, folds, seed);

    const Eigen::MatrixXd H = G.transpose() * G;
    const Eigen::VectorXd g = G.transpose() * z;
    std::vector<double> error(grid.size(), 0.0);
    for (int f = 0; f < folds; ++f) {
        std::vector<Eigen::Index> test;
        for (Eigen::Index i = 0; i < N; ++i) {
            if (labels[i] == f) test.push_back(i);
        }
        const auto nt = static_cast<Eigen::Index>(test.size());
        Eigen::MatrixXd Gt(nt, P);
        Eigen::VectorXd zt(nt);
        for (Eigen::Index a = 0; a < nt; ++a) {
            Gt.row(a) = G.row(test[a]);
            zt(a) = z(test[a]);
        }
        const Eigen::MatrixXd Htrain = H - Gt.transpose() * Gt;
        const Eigen::VectorXd gtrain = g - Gt.transpose() * zt;
        const auto ntrain = static_cast<double>(N - nt);
        // Largest kappa first: the sparse solution warm-starts the next one.
        Eigen::VectorXd theta = Eigen::VectorXd::Zero(P);
        for (std::size_t a = 0; a < grid.size(); ++a) {
            lasso_gram(Htrain, gtrain, ntrain * grid[a], theta);
            error[a] += (zt - Gt * theta).squaredNorm();
        }
    }
    std::size_t best = 0;
    for (std::size_t a = 1; a < grid.size(); ++a) {
        if (error[a] < error[best]) best = a;
    }
    return grid[best];
}

Eigen::MatrixXd theta_design(const gram::GramTensors& grams, const Eigen::VectorXd& c) {
    if (c.size() != grams.rows()) throw DimensionError("theta_design: c has the wrong length");
    const int P = grams.component_count();
    Eigen::MatrixXd G(grams.rows(), P);
    for (int m = 0; m < P; ++m) G.col(m).noalias() = grams.sigma(m) * c;
    return G;
}

Eigen::VectorXd theta_response(const Eigen::VectorXd& y_centered, const Eigen::VectorXd& B, const FStep& f,
                               double eta) {
    const auto n = static_cast<double>(y_centered.size());
    return y_centered - 0.5 * n * eta * f.c - B * f.b;
}

double component_norm(const kernels::ThetaVector& theta, const gram::GramTensors& grams, const Eigen::VectorXd& c,
                      int index) {
    if (index < 0 || index >= grams.component_count()) throw RangeError("component_norm: index out of range");
    if (theta[index] == 0.0) return 0.0;
    const double quad = c.dot(grams.sigma(index) * c);
    const double scale = std::max(1.0, c.squaredNorm() * grams.sigma(index).diagonal().cwiseAbs().maxCoeff());
    if (quad < -1e-10 * scale) throw NumericalError("component_norm: Gram quadratic form is negative");
    return theta[index] * std::sqrt(std::max(quad, 0.0));
}

Collinearity collinearity_indices(const EquationFit& fit, const gram::GramTensors& grams, double threshold) {
    const int P = grams.component_count();
    const int p = grams.p;
    Collinearity out;
    out.main = Eigen::VectorXd::Zero(p);
    out.inter = Eigen::VectorXd::Zero(P - p);

    // (k, l) and (l, k) share one Gram matrix, so their fitted vectors are
    // exactly parallel; they are pooled into a single unordered component.
    const auto layout = kernels::component_layout(p);
    std::vector<std::vector<int>> groups;
    std::vector<Eigen::VectorXd> vectors;
    for (int m = 0; m < P; ++m) {
        const auto& comp = layout[m];
        if (!comp.is_main() && comp.k > comp.l) continue;
        std::vector<int> members{m};
        double weight = fit.theta[m];
        if (!comp.is_main()) {
            const int twin = kernels::interaction_index(p, comp.l, comp.k);
            members.push_back(twin);
            weight += fit.theta[twin];
        }
        if (weight <= 0.0) continue;
        Eigen::VectorXd v = weight * (grams.sigma(m) * fit.c);
        if (!(v.norm() > 0.0)) continue;
        groups.push_back(std::move(members));
        vectors.push_back(v / v.norm());
    }
    const auto q = static_cast<Eigen::Index>(groups.size());
    Eigen::VectorXd index = Eigen::VectorXd::Ones(q);
    if (q >= 2) {
        Eigen::MatrixXd cosine(q, q);
        for (Eigen::Index a = 0; a < q; ++a) {
            for (Eigen::Index b = 0; b < q; ++b) cosine(a, b) = vectors[a].dot(vectors[b]);
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(cosine);
        lu.setThreshold(1e-12);
        if (!lu.isInvertible()) {
            index.setConstant(std::numeric_limits<double>::infinity());
        } else {
            const Eigen::VectorXd diag = lu.inverse().diagonal();
            for (Eigen::Index a = 0; a < q; ++a) {
                index(a) = diag(a) > 0.0 ? std::sqrt(diag(a)) : std::numeric_limits<double>::infinity();
            }
        }
    }
    for (Eigen::Index a = 0; a < q; ++a) {
        for (int m : groups[a]) {
            if (m < p) out.main(m) = index(a);
            else out.inter(m - p) = index(a);
        }
        if (!(index(a) <= threshold)) out.flagged = true;
    }
    return out;
}

double update_theta0(double f_hat_integral_mean, double y_bar) { return y_bar - f_hat_integral_mean; }

Eigen::VectorXd functional_on_nodes(const gram::GramTensors& grams, const kernels::ThetaVector& theta, double b,
                                    const Eigen::VectorXd& c) {
    const Eigen::VectorXd wc = grams.weights * c;
    Eigen::VectorXd f = Eigen::VectorXd::Constant(grams.weights.rows(), b);
    const auto layout = kernels::component_layout(grams.p);
    for (int m = 0; m < grams.component_count(); ++m) {
        if (theta[m] == 0.0) continue;
        const auto& comp = layout[m];
        if (comp.is_main()) {
            f.noalias() += theta[m] * (grams.main_node_kernels[comp.k] * wc);
        } else {
            f.noalias() += theta[m] * (grams.main_node_kernels[comp.k].cwiseProduct(grams.main_node_kernels[comp.l]) * wc);
        }
    }
    return f;
}

Eigen::VectorXd mean_integral(const gram::GramTensors& grams, const kernels::ThetaVector& theta, double b,
                              const Eigen::VectorXd& c) {
    const Eigen::VectorXd f = functional_on_nodes(grams, theta, b, c);
    const Eigen::Index m = grams.rule.node_count();
    Eigen::VectorXd out(grams.replicates);
    for (int r = 0; r < grams.replicates; ++r) out(r) = grams.rule.mean_weights().dot(f.segment(r * m, m));
    return out;
}

EquationSolver::EquationSolver(const gram::GramTensors& grams, std::vector<Eigen::VectorXd> y_per_replicate,
                               SolverConfig config, int equation)
    : grams_(grams), config_(std::move(config)) {
    config_.validate();
    if (static_cast<int>(y_per_replicate.size()) != grams.replicates) {
        throw DimensionError("solver: expected " + std::to_string(grams.replicates) + " replicate responses, got " +
                             std::to_string(y_per_replicate.size()));
    }
    const Eigen::Index n = grams.n();
    n_ = grams.rows();
    y_.resize(n_);
    fit_.equation = equation;
    fit_.y_mean.resize(grams.replicates);
    fit_.y_centered.resize(n_);
    for (int r = 0; r < grams.replicates; ++r) {
        const auto& yr = y_per_replicate[r];
        if (yr.size() != n) throw DimensionError("solver: replicate " + std::to_string(r + 1) + " has the wrong length");
        if (!yr.allFinite()) throw DataError("solver: responses must be finite");
        y_.segment(r * n, n) = yr;
        fit_.y_mean(r) = yr.mean();
        fit_.y_centered.segment(r * n, n) = yr.array() - fit_.y_mean(r);
    }
    fit_.theta = kernels::ThetaVector(grams.p, config_.theta_init);
    fit_.c = Eigen::VectorXd::Zero(n_);
    fit_.theta0 = fit_.y_mean;
    fit_.eta = config_.eta_grid.front();
    fit_.kappa = config_.kappa_grid.front();
}

Eigen::VectorXd EquationSolver::stacked_theta0() const {
    Eigen::VectorXd out(n_);
    const Eigen::Index n = grams_.n();
    for (int r = 0; r < grams_.replicates; ++r) out.segment(r * n, n).setConstant(fit_.theta0(r));
    return out;
}

void EquationSolver::update_theta0() {
    const Eigen::VectorXd integral = mean_integral(grams_, fit_.theta, fit_.b, fit_.c);
    for (int r = 0; r < grams_.replicates; ++r) fit_.theta0(r) = solver::update_theta0(integral(r), fit_.y_mean(r));
}

void EquationSolver::update_f(double eta) {
    fit_.eta = eta;
    const FStep f = solve_f_step(gram::assemble_sigma(fit_.theta, grams_), grams_.B, fit_.y_centered, eta);
    fit_.b = f.b;
    fit_.c = f.c;
    // The centered closed form minimizes jointly over (theta0, F); carry theta0 along.
    update_theta0();
}

void EquationSolver::update_theta(double kappa) {
    fit_.kappa = kappa;
    fit_.G = theta_design(grams_, fit_.c);
    fit_.z = theta_response(fit_.y_centered, grams_.B, FStep{fit_.b, fit_.c}, fit_.eta);
    Eigen::VectorXd warm = fit_.theta.values();
    fit_.theta.values() = lasso_theta_step(fit_.z, fit_.G, kappa, &warm);
    update_theta0();
}

double EquationSolver::tune_eta() const {
    return gcv_eta(gram::assemble_sigma(fit_.theta, grams_), grams_.B, fit_.y_centered, config_.eta_grid);
}

double EquationSolver::tune_kappa() const {
    const Eigen::MatrixXd G = theta_design(grams_, fit_.c);
    const Eigen::VectorXd z = theta_response(fit_.y_centered, grams_.B, FStep{fit_.b, fit_.c}, fit_.eta);
    // Fold assignment is seeded per equation so that equations stay independent.
    const std::uint64_t seed = config_.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(fit_.equation) + 1;
    return cv_kappa(z, G, config_.kappa_grid, config_.cv_folds, seed);
}

double EquationSolver::objective() const {
    const Eigen::MatrixXd sigma = gram::combine_sigma(fit_.theta.values(), grams_);
    const Eigen::VectorXd sc = sigma * fit_.c;
    // y - theta0 - int T_i F equals (y - ybar) - B b - Sigma(theta) c once theta0 is current.
    const Eigen::VectorXd integral = mean_integral(grams_, fit_.theta, fit_.b, fit_.c);
    Eigen::VectorXd resid = y_ - stacked_theta0() - grams_.B * fit_.b - sc;
    const Eigen::Index n = grams_.n();
    for (int r = 0; r < grams_.replicates; ++r) resid.segment(r * n, n).array() -= integral(r);
    return resid.squaredNorm() / static_cast<double>(n_) + fit_.eta * fit_.c.dot(sc) +
           fit_.kappa * fit_.theta.values().sum();
}

EquationFit EquationSolver::run() {
    fit_.objective_trace.clear();
    fit_.converged = false;
    for (int iter = 1; iter <= config_.max_iterations; ++iter) {
        const Eigen::VectorXd theta0_old = fit_.theta0;
        const Eigen::VectorXd bc_old = [&] {
            Eigen::VectorXd v(n_ + 1);
            v << fit_.b, fit_.c;
            return v;
        }();
        const Eigen::VectorXd theta_old = fit_.theta.values();

        const bool retune = config_.freeze_tuning_after == 0 || iter <= config_.freeze_tuning_after;
        update_theta0();
        try {
            update_f(retune ? tune_eta() : fit_.eta);
            update_theta(retune ? tune_kappa() : fit_.kappa);
        } catch (const NumericalError& e) {
            std::ostringstream msg;
            msg << "equation " << fit_.equation + 1 << ", iteration " << iter << " (eta " << fit_.eta << ", kappa "
                << fit_.kappa << "): " << e.what();
            throw NumericalError(msg.str());
        }
        update_theta0();
        const double obj = objective();
        if (!std::isfinite(obj)) {
            throw NumericalError("equation " + std::to_string(fit_.equation + 1) + ": objective is not finite at iteration " +
                                 std::to_string(iter));
        }
        fit_.objective_trace.push_back(obj);
        fit_.iterations = iter;

        Eigen::VectorXd bc(n_ + 1);
        bc << fit_.b, fit_.c;
        const double change = std::max({relative_change(fit_.theta0, theta0_old), relative_change(bc, bc_old),
                                        relative_change(fit_.theta.values(), theta_old)});
        if (change < config_.block_tolerance) {
            fit_.converged = true;
            break;
        }
    }
    fit_.support = fit_.theta.support(0.0);
    const Collinearity col = collinearity_indices(fit_, grams_, config_.collinearity_threshold);
    fit_.collinearity_main = col.main;
    fit_.collinearity_inter = col.inter;
    fit_.identifiability_warning = col.flagged;
    return fit_;
}

EquationFit fit_kode(const Eigen::VectorXd& y, const gram::GramTensors& grams, const SolverConfig& config,
                     int equation) {
    if (grams.replicates != 1) throw DimensionError("fit_kode: Gram tensors hold several replicates; use fit_kode_multi");
    EquationSolver solver(grams, {y}, config, equation);
    return solver.run();
}

EquationFit fit_kode_multi(const std::vector<Eigen::VectorXd>& y_per_replicate, const gram::GramTensors& grams,
                           const SolverConfig& config, int equation) {
    if (y_per_replicate.empty()) throw DataError("fit_kode_multi: no replicates");
    EquationSolver solver(grams, y_per_replicate, config, equation);
    return solver.run();
}

}  // namespace kode::solver
