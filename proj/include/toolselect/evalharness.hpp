#pragma once

// Paired-panel evaluation of routers. Every router evaluated against the
// same EvalContext sees the same panel for every query; panels are seeded by
// (seed, query uid).

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "toolselect/baselines.hpp"
#include "toolselect/domain.hpp"
#include "toolselect/simworld.hpp"

namespace toolselect::eval {

using domain::TaskId;
using domain::ToolId;

/// Queries, their outcome table and their panels (population positions).
struct EvalContext {
    const simworld::SimWorld* world = nullptr;
    std::vector<simworld::LabeledQuery> queries;  // uid order
    simworld::OutcomeTable outcomes;
    std::vector<std::vector<std::size_t>> panels;
    std::size_t panel_size = 0;
    std::uint64_t seed = 0;

    /// Digest over (uid, panel tool ids) in query order.
    std::uint64_t panel_digest() const;
};

/// Throws ContractViolation on an empty split; NoValidPanel names the query uid.
EvalContext make_context(const simworld::SimWorld& world, std::span<const simworld::LabeledQuery> queries,
                         std::size_t panel_size, std::uint64_t seed);

struct TaskMetrics {
    TaskId task = 0;
    domain::TaskFamily family = domain::TaskFamily::Classification;
    std::size_t count = 0;
    double mean_cost = 0.0;
    /// Family metrics in fixed order: classification accuracy, precision,
    /// recall, f1 (macro); grounding iou; report findings_f1; MCQ accuracy.
    std::vector<std::pair<std::string, double>> metrics;
};

/// Metric names reported for a family, in column order.
std::vector<std::string> metric_names(domain::TaskFamily family);

struct MetricsReport {
    std::string router;
    std::uint64_t seed = 0;
    std::size_t panel_size = 0;
    std::size_t query_count = 0;
    double mean_cost = 0.0;
    double cost_stderr = 0.0;
    std::vector<TaskMetrics> tasks;
    std::map<ToolId, std::size_t> histogram;
    std::uint64_t panel_digest = 0;
    std::optional<double> gap_closure;
    std::vector<double> query_costs;  // routed cost per query, context order
    std::vector<std::size_t> selections;
};

MetricsReport evaluate(const baselines::Router& router, const EvalContext& context);

/// (c_random - c_method) / (c_random - c_oracle); absent when c_random <= c_oracle.
std::optional<double> gap_closure(double c_method, double c_random, double c_oracle);

/// Fills gap_closure of every report from the reports named Random and Oracle.
void attach_gap_closure(std::vector<MetricsReport>& reports);

/// Macro precision / recall / F1 and accuracy from a confusion matrix
/// (rows: truth, columns: prediction). Classes never predicted contribute 0 precision.
struct ConfusionSummary {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
};
ConfusionSummary summarize_confusion(const std::vector<std::vector<std::size_t>>& confusion);

/// Fixed-width table followed by one `record key=value ...` line per
/// (router, task) and one per router with task=all.
std::string render_report(std::span<const MetricsReport> reports);

/// Key/value pairs of a `record` line.
std::map<std::string, std::string> parse_record(const std::string& line);

} // namespace toolselect::eval
