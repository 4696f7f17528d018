#pragma once

#include "kode/kernels.hpp"
#include "kode/model.hpp"
#include "kode/sim.hpp"

#include <Eigen/Dense>

#include <vector>

namespace kode::network {

/// adjacency(j, k) is true when x_k regulates x_j (directed edge k -> j).
using Adjacency = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct NetworkEstimate {
    Adjacency adjacency;
    /// Same orientation; larger means stronger evidence for the edge.
    Eigen::MatrixXd edge_scores;

    int p() const { return static_cast<int>(adjacency.rows()); }
    /// Regulators of x_j, 0-based and ascending.
    std::vector<int> regulators(int j) const;
    int edge_count() const { return static_cast<int>(adjacency.count()); }
};

/// k regulates j iff theta_j has a main weight for k or an interaction weight
/// for any pair containing k above `threshold`. Edge scores are the largest
/// such weight.
NetworkEstimate extract_regulators(const std::vector<kernels::ThetaVector>& thetas, double threshold = 1e-8);

/// Same support rule on a fitted model; edge scores are the largest component
/// norm among the main effect and the interactions containing k.
NetworkEstimate extract_regulators(const model::KodeModel& model, double threshold = 1e-8);

struct Recovery {
    double fdp = 0.0;
    double power = 0.0;
    int false_discoveries = 0;
    int true_discoveries = 0;
};

/// fdp = |selected \ true| / max(|selected|, 1); power = |selected & true| / |true|.
Recovery fdp_power(const Adjacency& selected, const Adjacency& truth);

/// Mann-Whitney AUC over (true edge, non-edge) pairs with ties counted 1/2.
double roc_auc(const Eigen::MatrixXd& scores, const Adjacency& truth);

/// Keeps an edge selected in at least `threshold` of the estimates.
Adjacency frequency_threshold_network(const std::vector<Adjacency>& estimates, double threshold = 0.9);

/// Known regulator structure of the benchmark systems.
Adjacency nfblb_truth();
Adjacency lotka_volterra_truth(int pairs = 5);

/// sqrt(sum_j (x_tilde_j(t) - x_j(t))^2) with x_tilde the fitted-ODE prediction.
double prediction_error(const model::KodeModel& model, const sim::Trajectory& truth, double t_future,
                        int replicate = 0);

}  // namespace kode::network
