#pragma once

// Stochastic training of the selector: per step a task is drawn from the
// task weights, a batch of that task's training queries is drawn, each query
// gets a fresh i.i.d. panel, and the batch objective is minimized by AdamW.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "toolselect/anp_selector.hpp"
#include "toolselect/diffcore.hpp"
#include "toolselect/domain.hpp"
#include "toolselect/objective.hpp"
#include "toolselect/rng.hpp"
#include "toolselect/simworld.hpp"

namespace toolselect::trainer {

struct TrainConfig {
    double lr = 3e-5;
    double weight_decay = 1e-4;
    std::size_t max_epochs = 50;
    std::size_t patience = 10;
    double min_delta = 1e-4;
    std::size_t batch_size = 16;
    std::size_t panel_size = 6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_cost = 0.0;
    bool best = false;

    bool operator==(const EpochRecord&) const = default;
};

using History = std::vector<EpochRecord>;

/// `epoch=<n> train_loss=<.6f> val_cost=<.6f> best=<0|1>`
std::string format_epoch(const EpochRecord& record);

/// Categorical draw from `weights` (on the simplex).
domain::TaskId sample_task(std::span<const double> weights, Rng& rng);

/// m i.i.d. uniform draws from `population`; the whole panel is redrawn
/// while no drawn tool is valid for `query`. Throws NoValidPanel after 100
/// failed attempts.
domain::Panel sample_panel(std::span<const domain::Tool* const> population, const domain::Query& query, std::size_t m,
                           Rng& rng);

/// Population positions instead of tool pointers; same draw sequence as sample_panel.
std::vector<std::size_t> sample_panel_positions(std::span<const domain::Tool* const> population,
                                                const domain::Query& query, std::size_t m, Rng& rng);

class AdamW {
public:
    AdamW(std::vector<diffcore::Tensor*> params, double lr, double weight_decay, double beta1 = 0.9,
          double beta2 = 0.999, double eps = 1e-8);

    /// One update. A non-finite gradient throws NonFiniteError and leaves
    /// parameters and moments untouched.
    void step(std::span<const diffcore::Tensor> grads);

    std::size_t steps() const noexcept { return step_; }
    const std::vector<diffcore::Tensor>& first_moments() const noexcept { return m_; }
    const std::vector<diffcore::Tensor>& second_moments() const noexcept { return v_; }

private:
    std::vector<diffcore::Tensor*> params_;
    std::vector<diffcore::Tensor> m_, v_;
    double lr_, weight_decay_, beta1_, beta2_, eps_;
    std::size_t step_ = 0;
};

/// True when the best value has not improved by more than `min_delta` for
/// `patience` consecutive entries after it.
bool early_stop(std::span<const double> val_history, std::size_t patience, double min_delta);

/// Selector dimensions taken from the world (feature widths, label counts,
/// slot width, reference size); the remaining fields come from `base`.
anp::SelectorConfig selector_config_for(const simworld::SimWorld& world, anp::SelectorConfig base = {});

/// Mean routed cost of the selector over `queries` with the given panels
/// (population positions per query).
double routed_cost(const anp::SelectorParams& params, const anp::SelectorConfig& config,
                   const simworld::SimWorld& world, std::span<const simworld::LabeledQuery> queries,
                   const simworld::OutcomeTable& outcomes, std::span<const std::vector<std::size_t>> panels);

struct FitResult {
    anp::SelectorParams params;  // best-validation snapshot
    History history;
    std::size_t best_epoch = 0;  // 1-based
    std::size_t steps = 0;
};

FitResult fit(const TrainConfig& config, const simworld::SimWorld& world, const anp::SelectorConfig& selector,
              const objective::ObjectiveConfig& objective,
              const std::function<void(const EpochRecord&)>& on_epoch = {});

} // namespace toolselect::trainer
