#include "toolselect/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "toolselect/errors.hpp"

namespace toolselect::objective {

using diffcore::Tape;
using diffcore::Tensor;

std::size_t PanelCosts::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
}

ObjectiveConfig ObjectiveConfig::uniform(std::size_t task_count) {
    ObjectiveConfig cfg;
    cfg.task_weights.assign(task_count, 1.0 / static_cast<double>(task_count));
    return cfg;
}

void ObjectiveConfig::validate() const {
    if (task_weights.empty()) throw ContractViolation("objective: no task weights");
    double total = 0.0;
    for (double w : task_weights) {
        if (!(w >= 0.0)) throw ContractViolation("objective: task weights must be non-negative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ContractViolation("objective: task weights must sum to 1");
    if (!(entropy_weight >= 0.0) || !(score_l2 >= 0.0) || !(coverage_weight >= 0.0) || !(eps > 0.0)) {
        throw ContractViolation("objective: regularizer weights must be non-negative");
    }
}

double selection_loss(const PanelCosts& pc, std::size_t selected) {
    if (selected >= pc.valid.size() || !pc.valid[selected]) {
        throw ContractViolation("selection_loss: selected slot " + std::to_string(selected) + " is not valid");
    }
    return pc.costs[selected];
}

double selection_loss(const PanelCosts& pc, const anp::SelectionDistribution& dist) {
    return selection_loss(pc, dist.selected);
}

std::vector<double> compsum_weights(const PanelCosts& pc) {
    if (pc.costs.size() != pc.valid.size()) throw DimensionError("compsum_weights: costs and mask differ in length");
    if (pc.costs.size() < 2) throw ContractViolation("compsum_weights: panel needs at least two slots");
    double total = 0.0;
    for (std::size_t j = 0; j < pc.costs.size(); ++j)
        if (pc.valid[j]) total += pc.costs[j];
    const double m_valid = static_cast<double>(pc.valid_count());
    std::vector<double> w(pc.costs.size(), 0.0);
    for (std::size_t j = 0; j < pc.costs.size(); ++j)
        if (pc.valid[j]) w[j] = (total - pc.costs[j]) - m_valid + 2.0;
    return w;
}

double compsum_loss(std::span<const double> probs, std::span<const double> weights, const std::vector<bool>& mask,
                    double eps) {
    double loss = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j)
        if (mask[j]) loss += weights[j] * -std::log(std::max(probs[j], eps));
    return loss;
}

namespace {

Tensor masked_copy(std::span<const double> values, const std::vector<bool>& mask, double factor) {
    Tensor t({values.size()});
    for (std::size_t j = 0; j < values.size(); ++j) t[j] = mask[j] ? factor * values[j] : 0.0;
    return t;
}

Tensor mask_tensor(const std::vector<bool>& mask, double on) {
    Tensor t({mask.size()});
    for (std::size_t j = 0; j < mask.size(); ++j) t[j] = mask[j] ? on : 0.0;
    return t;
}

} // namespace

Var compsum_loss(Var probs, std::span<const double> weights, const std::vector<bool>& mask, double eps) {
    if (weights.size() != probs.value().size() || mask.size() != weights.size()) {
        throw DimensionError("compsum_loss: probabilities, weights and mask differ in length");
    }
    return sum(diffcore::mul_const(diffcore::log_clamped(probs, eps), masked_copy(weights, mask, -1.0)));
}

double entropy(std::span<const double> probs, const std::vector<bool>& mask, double eps) {
    double h = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j)
        if (mask[j]) h -= probs[j] * std::log(std::max(probs[j], eps));
    return h;
}

Var entropy_reg(Var probs, const std::vector<bool>& mask, double eps) {
    Var plogp = diffcore::mul(probs, diffcore::log_clamped(probs, eps));
    return sum(diffcore::mul_const(plogp, mask_tensor(mask, -1.0)));
}

double coverage_loss(double s, double c, double eps) {
    return -(1.0 - c) * std::log(std::max(s, eps)) - c * std::log(std::max(1.0 - s, eps));
}

Var coverage_loss(Var s, std::span<const double> costs, double eps) {
    const Tensor& sv = s.value();
    if (sv.size() != costs.size()) throw DimensionError("coverage_loss: one cost per coverage prediction required");
    Tape& tape = *s.tape;
    const std::size_t n = costs.size();
    Tensor success(sv.shape());
    Tensor failure(sv.shape());
    for (std::size_t i = 0; i < n; ++i) {
        success[i] = -(1.0 - costs[i]) / static_cast<double>(n);
        failure[i] = -costs[i] / static_cast<double>(n);
    }
    Var one_minus = diffcore::sub(tape.constant(Tensor(sv.shape(), 1.0)), s);
    return diffcore::add(sum(diffcore::mul_const(diffcore::log_clamped(s, eps), success)),
                         sum(diffcore::mul_const(diffcore::log_clamped(one_minus, eps), failure)));
}

Var batch_objective(const ObjectiveConfig& cfg, std::span<const ExampleTerms> batch) {
    if (batch.empty()) throw ContractViolation("batch_objective: empty batch");
    const double n_tasks = static_cast<double>(cfg.task_weights.size());
    std::vector<Var> terms;
    terms.reserve(batch.size());
    for (const auto& ex : batch) {
        const anp::ExampleGraph& g = *ex.graph;
        if (ex.task >= cfg.task_weights.size()) throw ContractViolation("batch_objective: task without weight");
        if (ex.costs.valid != g.mask) throw ContractViolation("batch_objective: cost mask disagrees with panel mask");
        const auto weights = compsum_weights(ex.costs);
        Var total = compsum_loss(g.probs, weights, g.mask, cfg.eps);
        if (cfg.entropy_weight > 0.0) {
            total = diffcore::sub(total, diffcore::scale(entropy_reg(g.probs, g.mask, cfg.eps), cfg.entropy_weight));
        }
        if (cfg.score_l2 > 0.0) {
            const double n_valid = static_cast<double>(ex.costs.valid_count());
            Var l2 = sum(diffcore::mul_const(diffcore::square(g.scores), mask_tensor(g.mask, 1.0 / n_valid)));
            total = diffcore::add(total, diffcore::scale(l2, cfg.score_l2));
        }
        if (cfg.coverage_weight > 0.0) {
            std::vector<double> valid_costs;
            for (std::size_t j : g.valid_slots) valid_costs.push_back(ex.costs.costs[j]);
            total = diffcore::add(total, diffcore::scale(coverage_loss(g.coverage, valid_costs, cfg.eps),
                                                         cfg.coverage_weight));
        }
        terms.push_back(diffcore::scale(total, cfg.task_weights[ex.task] * n_tasks));
    }
    return diffcore::scale(sum(diffcore::vcat(std::span<const Var>(terms))), 1.0 / static_cast<double>(batch.size()));
}

} // namespace toolselect::objective
