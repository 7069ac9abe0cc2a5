#pragma once

// Training losses: hard selection loss, comp-sum surrogate with logistic
// Psi(u) = -log u, panel entropy, coverage BCE and the task-weighted batch
// objective.

#include <span>
#include <vector>

#include "toolselect/anp_selector.hpp"
#include "toolselect/diffcore.hpp"
#include "toolselect/domain.hpp"

namespace toolselect::objective {

using diffcore::Var;

/// Cost of every panel slot; only meaningful where `valid`.
struct PanelCosts {
    std::vector<double> costs;
    std::vector<bool> valid;

    std::size_t valid_count() const;
};

struct ObjectiveConfig {
    std::vector<double> task_weights;  // lambda_t, on the simplex
    double entropy_weight = 0.05;      // lambda_H
    double score_l2 = 2.0;             // lambda_r; keeps scores bounded when comp-sum weights go negative
    double coverage_weight = 1.0;      // lambda_cov
    double eps = 1e-12;

    static ObjectiveConfig uniform(std::size_t task_count);
    void validate() const;
};

/// Cost of the selected slot.
double selection_loss(const PanelCosts& pc, std::size_t selected);
double selection_loss(const PanelCosts& pc, const anp::SelectionDistribution& dist);

/// w_j = sum_{j' != j, valid} c_j' - m_valid + 2 for valid slots, 0 elsewhere.
std::vector<double> compsum_weights(const PanelCosts& pc);

/// sum over valid slots of w_j * -log(max(pi_j, eps)).
double compsum_loss(std::span<const double> probs, std::span<const double> weights, const std::vector<bool>& mask,
                    double eps = 1e-12);
Var compsum_loss(Var probs, std::span<const double> weights, const std::vector<bool>& mask, double eps = 1e-12);

/// -sum over valid slots of pi_j log(max(pi_j, eps)).
double entropy(std::span<const double> probs, const std::vector<bool>& mask, double eps = 1e-12);
Var entropy_reg(Var probs, const std::vector<bool>& mask, double eps = 1e-12);

/// Binary cross-entropy of coverage s against target 1 - c.
double coverage_loss(double s, double c, double eps = 1e-12);
/// Mean BCE over a column of coverage predictions.
Var coverage_loss(Var s, std::span<const double> costs, double eps = 1e-12);

struct ExampleTerms {
    const anp::ExampleGraph* graph = nullptr;
    PanelCosts costs;
    domain::TaskId task = 0;
};

/// Mean over the batch of
///   lambda_t |T| * (L_comp - lambda_H H + lambda_r mean(r^2) + lambda_cov mean BCE).
Var batch_objective(const ObjectiveConfig& cfg, std::span<const ExampleTerms> batch);

} // namespace toolselect::objective
