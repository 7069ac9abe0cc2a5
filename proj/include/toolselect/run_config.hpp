#pragma once

// Flat `key = value` run configuration. Keys are grouped by prefix
// (world., selector., train., objective., eval.); `#` starts a comment;
// unknown or repeated keys are rejected. Line order does not matter.

#include <string>
#include <vector>

#include "toolselect/anp_selector.hpp"
#include "toolselect/objective.hpp"
#include "toolselect/simworld.hpp"
#include "toolselect/trainer.hpp"

namespace toolselect {

struct EvalConfig {
    std::vector<std::string> routers = {"Random", "Oracle", "GlobalBest", "KNN", "MLPIndex", "ToolSelect"};
    std::string split = "test";
    double fresh_tools = 0.0;  // fraction of each population replaced before evaluation
    std::uint64_t seed = 0;
};

struct RunConfig {
    simworld::WorldConfig world;
    anp::SelectorConfig selector;        // world-derived widths are filled at run time
    trainer::TrainConfig train;
    std::vector<double> task_weights;    // empty: uniform
    objective::ObjectiveConfig objective;
    EvalConfig eval;

    /// Same seed for world generation, training and evaluation.
    void set_seed(std::uint64_t seed);
    /// Objective with task weights resolved for `task_count` tasks.
    objective::ObjectiveConfig objective_for(std::size_t task_count) const;
};

/// Throws ParseError naming the line of an unknown key, repeated key or bad value.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// Every key with its current value, one per line, in a fixed order.
std::string to_text(const RunConfig& config);

/// All recognized keys.
std::vector<std::string> run_config_keys();

} // namespace toolselect
