#include "kode/network.hpp"

#include "kode/errors.hpp"
#include "kode/solver.hpp"

#include <algorithm>
#include <cmath>

namespace kode::network {

std::vector<int> NetworkEstimate::regulators(int j) const {
    if (j < 0 || j >= p()) throw RangeError("network: equation index out of range");
    std::vector<int> out;
    for (int k = 0; k < p(); ++k) {
        if (adjacency(j, k)) out.push_back(k);
    }
    return out;
}

namespace {

NetworkEstimate from_scores(const std::vector<Eigen::VectorXd>& weights, const std::vector<Eigen::VectorXd>& scores,
                            int p, double threshold) {
    NetworkEstimate est;
    est.adjacency = Adjacency::Constant(p, p, false);
    est.edge_scores = Eigen::MatrixXd::Zero(p, p);
    const auto layout = kernels::component_layout(p);
    for (int j = 0; j < p; ++j) {
        for (std::size_t m = 0; m < layout.size(); ++m) {
            const auto& comp = layout[m];
            const bool active = weights[j](static_cast<Eigen::Index>(m)) > threshold;
            const double score = scores[j](static_cast<Eigen::Index>(m));
            for (int k : {comp.k, comp.l}) {
                if (k < 0) continue;
                if (active) est.adjacency(j, k) = true;
                est.edge_scores(j, k) = std::max(est.edge_scores(j, k), score);
            }
        }
    }
    return est;
}

}  // namespace

NetworkEstimate extract_regulators(const std::vector<kernels::ThetaVector>& thetas, double threshold) {
    const int p = static_cast<int>(thetas.size());
    std::vector<Eigen::VectorXd> weights;
    for (const auto& t : thetas) {
        if (t.p() != p) throw DimensionError("network: theta vectors disagree with the number of equations");
        weights.push_back(t.values());
    }
    return from_scores(weights, weights, p, threshold);
}

NetworkEstimate extract_regulators(const model::KodeModel& model, double threshold) {
    const int p = model.p;
    if (static_cast<int>(model.equations.size()) != p) throw DimensionError("network: model is missing equations");
    std::vector<Eigen::VectorXd> weights, scores;
    for (const auto& eq : model.equations) {
        weights.push_back(eq.theta.values());
        Eigen::VectorXd s(eq.theta.size());
        for (int m = 0; m < static_cast<int>(s.size()); ++m) s(m) = solver::component_norm(eq.theta, model.grams, eq.c, m);
        scores.push_back(s);
    }
    return from_scores(weights, scores, p, threshold);
}

Recovery fdp_power(const Adjacency& selected, const Adjacency& truth) {
    if (selected.rows() != truth.rows() || selected.cols() != truth.cols()) {
        throw DimensionError("fdp_power: selected and true networks differ in shape");
    }
    const int total_true = static_cast<int>(truth.count());
    if (total_true == 0) throw DomainError("fdp_power: power is undefined without true edges");
    Recovery r;
    int selected_count = 0;
    for (Eigen::Index a = 0; a < truth.rows(); ++a) {
        for (Eigen::Index b = 0; b < truth.cols(); ++b) {
            if (!selected(a, b)) continue;
            ++selected_count;
            if (truth(a, b)) ++r.true_discoveries;
            else ++r.false_discoveries;
        }
    }
    r.fdp = static_cast<double>(r.false_discoveries) / std::max(selected_count, 1);
    r.power = static_cast<double>(r.true_discoveries) / total_true;
    return r;
}

double roc_auc(const Eigen::MatrixXd& scores, const Adjacency& truth) {
    if (scores.rows() != truth.rows() || scores.cols() != truth.cols()) {
        throw DimensionError("roc_auc: scores and truth differ in shape");
    }
    if (!scores.allFinite()) throw DomainError("roc_auc: scores must be finite");
    std::vector<double> positives, negatives;
    for (Eigen::Index a = 0; a < truth.rows(); ++a) {
        for (Eigen::Index b = 0; b < truth.cols(); ++b) {
            (truth(a, b) ? positives : negatives).push_back(scores(a, b));
        }
    }
    if (positives.empty() || negatives.empty()) throw DomainError("roc_auc: undefined when truth has one class only");
    // Rank-sum form: for each positive count negatives below it plus half the ties.
    std::sort(negatives.begin(), negatives.end());
    double wins = 0.0;
    for (double s : positives) {
        const auto lo = std::lower_bound(negatives.begin(), negatives.end(), s);
        const auto hi = std::upper_bound(negatives.begin(), negatives.end(), s);
        wins += static_cast<double>(lo - negatives.begin()) + 0.5 * static_cast<double>(hi - lo);
    }
    return wins / (static_cast<double>(positives.size()) * static_cast<double>(negatives.size()));
}

Adjacency frequency_threshold_network(const std::vector<Adjacency>& estimates, double threshold) {
    if (estimates.empty()) throw DataError("frequency threshold: no estimates");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw RangeError("frequency threshold must lie in [0, 1]");
    const auto rows = estimates.front().rows(), cols = estimates.front().cols();
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(rows, cols);
    for (const auto& e : estimates) {
        if (e.rows() != rows || e.cols() != cols) throw DimensionError("frequency threshold: estimates differ in shape");
        counts += e.cast<int>();
    }
    const auto total = static_cast<double>(estimates.size());
    Adjacency out(rows, cols);
    for (Eigen::Index a = 0; a < rows; ++a) {
        for (Eigen::Index b = 0; b < cols; ++b) out(a, b) = static_cast<double>(counts(a, b)) >= threshold * total;
    }
    return out;
}

Adjacency nfblb_truth() {
    Adjacency truth = Adjacency::Constant(3, 3, false);
    truth(0, 0) = true;
    truth(1, 1) = truth(1, 2) = true;
    truth(2, 0) = truth(2, 1) = truth(2, 2) = true;
    return truth;
}

Adjacency lotka_volterra_truth(int pairs) {
    if (pairs < 1) throw ConfigError("Lotka-Volterra truth needs at least one pair");
    Adjacency truth = Adjacency::Constant(2 * pairs, 2 * pairs, false);
    for (int j = 0; j < pairs; ++j) truth.block(2 * j, 2 * j, 2, 2).setConstant(true);
    return truth;
}

double prediction_error(const model::KodeModel& model, const sim::Trajectory& truth, double t_future, int replicate) {
    const Eigen::VectorXd predicted = model.predict(t_future, replicate);
    const Eigen::VectorXd actual = truth.at(t_future);
    if (actual.size() != predicted.size()) throw DimensionError("prediction_error: truth has the wrong dimension");
    return (predicted - actual).norm();
}

}  // namespace kode::network
