#pragma once

// Synthetic tool zoo. Each task has a population of specialist tools whose
// competence decays with the distance between the query features and the
// tool's expertise centroid; tools may not support every task and may
// predict in a coarsened label space.

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "toolselect/domain.hpp"
#include "toolselect/rng.hpp"

namespace toolselect::simworld {

using domain::TaskFamily;
using domain::TaskId;
using domain::ToolId;

struct WorldConfig {
    std::vector<TaskFamily> families = {TaskFamily::Classification, TaskFamily::Grounding,
                                        TaskFamily::ReportGeneration, TaskFamily::MultipleChoice};
    std::size_t tasks_per_family = 1;
    std::size_t d_x = 16;
    std::size_t d_q = 8;
    std::size_t tools_per_task = 12;
    std::size_t labels_per_task = 5;   // classification classes, grounding/report components
    std::size_t mcq_options = 4;
    std::size_t report_vocab = 6;
    double p_max = 0.95;
    double p_floor = -1.0;             // negative: 1 / |canonical labels| per task
    double sharpness = 4.0;
    double support_prob = 0.8;
    double coarsen_prob = 0.5;
    double anchor_jitter = 0.1;        // sd of class centroids around their anchor tool's centroid
    double feature_noise = 0.3;
    double hint_noise = 0.5;
    double outcome_correlation = 0.9;  // Gaussian-copula correlation of tool noise on the same query
    std::size_t train_size = 5000;
    std::size_t val_size = 500;
    std::size_t test_size = 1000;
    std::size_t ref_pool_size = 256;
    std::size_t ref_size = 16;         // B_t
    std::uint64_t seed = 0;

    std::size_t task_count() const { return families.size() * tasks_per_family; }
    void validate() const;
};

struct SimTool {
    domain::Tool tool;
    TaskId home_task = 0;
    std::vector<double> centroid;
    double sharpness = 4.0;
    double ceiling = 0.95;
    std::uint32_t variant = 0;         // 0 identity label space, 1 coarsened
    std::uint64_t noise_stream = 0;

    bool operator==(const SimTool&) const = default;
};

/// Per-task generative parameters.
struct TaskGenerator {
    std::vector<std::vector<double>> centroids;   // one per class / component
    std::vector<double> task_code;                 // d_q
    std::vector<std::vector<double>> hint_codes;   // per class / component, d_q
    std::vector<double> box_map;                   // 2 x d_x, row-major
    std::vector<domain::FindingPair> component_pairs;  // report tasks: pair of each component
    double p_floor = 0.0;

    bool operator==(const TaskGenerator&) const = default;
};

struct LabeledQuery {
    domain::Query query;
    domain::GroundTruth gt;

    bool operator==(const LabeledQuery&) const = default;
};

/// Mean-IoU calibration: noise scale giving each probed competence.
struct IouCalibration {
    std::vector<double> kappa;
    std::vector<double> sigma;

    double sigma_for(double kappa) const;
    bool operator==(const IouCalibration&) const = default;
};

struct SimWorld {
    WorldConfig config;
    std::vector<domain::TaskInfo> tasks;
    std::vector<TaskGenerator> generators;
    std::vector<SimTool> tools;                       // index == tool id
    std::vector<std::vector<ToolId>> populations;     // per task
    std::map<std::string, std::vector<LabeledQuery>> splits;  // train / val / test
    std::vector<std::vector<LabeledQuery>> reference_pools;   // per task
    IouCalibration iou_calibration;
    std::uint64_t next_uid = 0;

    const SimTool& tool(ToolId id) const { return tools.at(id); }
    const std::vector<LabeledQuery>& split(const std::string& name) const;
    std::size_t slot_width() const;
    std::vector<std::size_t> label_counts() const;
    /// Population tools of `task` as domain tools.
    std::vector<const domain::Tool*> population(TaskId task) const;
};

SimWorld generate_world(const WorldConfig& cfg);

/// Draws one labeled query for `task`.
LabeledQuery sample_query(const SimWorld& world, TaskId task, Rng& rng, std::uint64_t uid = 0);

/// Competence of `tool` at features `x`.
double competence(const SimWorld& world, const SimTool& tool, TaskId task, std::span<const double> x);

/// Per-query standard normals shared by every tool; they make tool errors on
/// the same query correlated while leaving each tool's marginals unchanged.
struct QueryDifficulty {
    std::array<double, 4> z{};
};

QueryDifficulty query_difficulty(const SimWorld& world, const LabeledQuery& lq);

/// One stochastic prediction of `tool` on a labeled query (the ground truth
/// drives the simulated correctness). Unsupported tasks yield Abstain.
/// Without `shared`, tool noise is independent across calls.
domain::RawPrediction tool_predict(const SimWorld& world, const SimTool& tool, const LabeledQuery& lq, Rng& rng,
                                   const QueryDifficulty* shared = nullptr);

/// The frozen prediction of a tool on a query: seeded by (world seed, tool
/// noise stream, query uid) so repeated calls agree.
domain::AlignedPrediction frozen_prediction(const SimWorld& world, const SimTool& tool, const LabeledQuery& lq);

struct Outcome {
    domain::AlignedPrediction prediction;
    bool valid = false;
    double cost = 1.0;  // only meaningful when valid
};

Outcome outcome(const SimWorld& world, const SimTool& tool, const LabeledQuery& lq);

/// Outcomes of every population tool of each query's task, in population order.
using OutcomeTable = std::vector<std::vector<Outcome>>;
OutcomeTable outcome_table(const SimWorld& world, std::span<const LabeledQuery> queries);

/// Population position of each tool id, per task.
std::vector<std::map<ToolId, std::size_t>> population_positions(const SimWorld& world);

/// Fills every tool's reference sets: `ref_size` draws per supported task
/// from that task's reference pool, with frozen aligned predictions.
void build_reference_sets(SimWorld& world, std::size_t ref_size, Rng& rng);

/// Copy of `world` in which `fraction` of every task population is replaced
/// by freshly generated tools (new ids, centroids and reference sets).
SimWorld with_fresh_tools(const SimWorld& world, double fraction, std::uint64_t seed);

/// Hash over every generated array of the world.
std::uint64_t world_digest(const SimWorld& world);

} // namespace toolselect::simworld
