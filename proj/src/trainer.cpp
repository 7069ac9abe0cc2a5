#include "toolselect/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "toolselect/errors.hpp"

namespace toolselect::trainer {

using diffcore::Tape;
using diffcore::Tensor;
using diffcore::Var;
using simworld::LabeledQuery;
using simworld::OutcomeTable;
using simworld::SimWorld;

namespace {

constexpr std::size_t kMaxPanelAttempts = 100;
constexpr std::size_t kEvalChunk = 64;

enum : std::uint64_t { kTagInit = 0x1417, kTagSteps = 0x57E9, kTagDropout = 0xD409, kTagValPanels = 0x7A15 };

std::vector<anp::RoutingExample> routing_examples(const SimWorld& world, std::span<const LabeledQuery* const> queries,
                                                  std::span<const std::size_t> rows, const OutcomeTable& outcomes,
                                                  std::span<const std::vector<std::size_t>> panels) {
    std::vector<anp::RoutingExample> out;
    out.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const LabeledQuery& lq = *queries[i];
        const auto& pop = world.populations.at(lq.query.task);
        anp::RoutingExample ex;
        ex.query = &lq.query;
        ex.task = &world.tasks.at(lq.query.task);
        for (std::size_t pos : panels[i]) {
            ex.panel.push_back(&world.tool(pop[pos]).tool);
            ex.predictions.push_back(&outcomes[rows[i]][pos].prediction);
        }
        out.push_back(std::move(ex));
    }
    return out;
}

objective::PanelCosts panel_costs(const simworld::OutcomeTable& outcomes, std::size_t row,
                                  std::span<const std::size_t> panel) {
    objective::PanelCosts pc;
    for (std::size_t pos : panel) {
        const auto& o = outcomes[row][pos];
        pc.costs.push_back(o.valid ? o.cost : 0.0);
        pc.valid.push_back(o.valid);
    }
    return pc;
}

} // namespace

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ContractViolation("train config: lr must be positive");
    if (!(weight_decay >= 0.0)) throw ContractViolation("train config: weight_decay must be non-negative");
    if (max_epochs == 0) throw ContractViolation("train config: max_epochs must be positive");
    if (patience == 0) throw ContractViolation("train config: patience must be at least 1");
    if (!(min_delta >= 0.0)) throw ContractViolation("train config: min_delta must be non-negative");
    if (batch_size == 0) throw ContractViolation("train config: batch_size must be positive");
    if (panel_size < 2) throw ContractViolation("train config: panel_size must be at least 2");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
        throw ContractViolation("train config: adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ContractViolation("train config: adam_eps must be positive");
}

std::string format_epoch(const EpochRecord& r) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "epoch=%zu train_loss=%.6f val_cost=%.6f best=%d", r.epoch, r.train_loss,
                  r.val_cost, r.best ? 1 : 0);
    return buf;
}

domain::TaskId sample_task(std::span<const double> weights, Rng& rng) {
    if (weights.empty()) throw ContractViolation("sample_task: no task weights");
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t t = 0; t < weights.size(); ++t) {
        if (weights[t] <= 0.0) continue;
        last_positive = t;
        acc += weights[t];
        if (u < acc) return static_cast<domain::TaskId>(t);
    }
    return static_cast<domain::TaskId>(last_positive);
}

std::vector<std::size_t> sample_panel_positions(std::span<const domain::Tool* const> population,
                                                const domain::Query& query, std::size_t m, Rng& rng) {
    if (population.empty()) throw ContractViolation("sample_panel: empty population");
    if (m < 2) throw ContractViolation("sample_panel: panel size must be at least 2");
    std::vector<std::size_t> positions(m);
    for (std::size_t attempt = 0; attempt < kMaxPanelAttempts; ++attempt) {
        bool any_valid = false;
        for (std::size_t j = 0; j < m; ++j) {
            positions[j] = rng.index(population.size());
            any_valid = any_valid || domain::validity(*population[positions[j]], query);
        }
        if (any_valid) return positions;
    }
    throw NoValidPanel("no valid tool in " + std::to_string(kMaxPanelAttempts) + " panel draws for query uid " +
                       std::to_string(query.uid));
}

domain::Panel sample_panel(std::span<const domain::Tool* const> population, const domain::Query& query, std::size_t m,
                           Rng& rng) {
    domain::Panel panel{query.task, {}};
    for (std::size_t pos : sample_panel_positions(population, query, m, rng)) panel.tools.push_back(population[pos]);
    return panel;
}

AdamW::AdamW(std::vector<Tensor*> params, double lr, double weight_decay, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const Tensor* p : params_) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
    }
}

void AdamW::step(std::span<const Tensor> grads) {
    if (grads.size() != params_.size()) throw DimensionError("adamw: one gradient per parameter tensor required");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].shape() != params_[i]->shape()) {
            throw DimensionError("adamw: gradient " + std::to_string(i) + " has shape " +
                                 diffcore::shape_string(grads[i].shape()) + ", parameter has " +
                                 diffcore::shape_string(params_[i]->shape()));
        }
        if (!grads[i].all_finite()) {
            throw NonFiniteError("adamw: non-finite gradient in tensor " + std::to_string(i) + " at step " +
                                 std::to_string(step_ + 1));
        }
    }
    ++step_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (std::size_t i = 0; i < grads.size(); ++i) {
        Tensor& p = *params_[i];
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        const Tensor& g = grads[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
            v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
            const double m_hat = m[k] / c1;
            const double v_hat = v[k] / c2;
            p[k] = p[k] - lr_ * (m_hat / (std::sqrt(v_hat) + eps_)) - lr_ * weight_decay_ * p[k];
        }
    }
}

bool early_stop(std::span<const double> h, std::size_t patience, double min_delta) {
    if (h.empty()) throw ContractViolation("early_stop: empty history");
    double best = h[0];
    std::size_t best_idx = 0;
    for (std::size_t i = 1; i < h.size(); ++i) {
        if (h[i] < best - min_delta) {
            best = h[i];
            best_idx = i;
        }
    }
    return h.size() - 1 - best_idx >= patience;
}

anp::SelectorConfig selector_config_for(const SimWorld& world, anp::SelectorConfig base) {
    base.d_x = world.config.d_x;
    base.d_q = world.config.d_q;
    base.label_counts = world.label_counts();
    base.slot_width = world.slot_width();
    base.ref_size = world.config.ref_size;
    base.validate();
    return base;
}

double routed_cost(const anp::SelectorParams& params, const anp::SelectorConfig& config, const SimWorld& world,
                   std::span<const LabeledQuery> queries, const OutcomeTable& outcomes,
                   std::span<const std::vector<std::size_t>> panels) {
    if (queries.empty()) throw ContractViolation("routed_cost: no queries");
    double total = 0.0;
    for (std::size_t start = 0; start < queries.size(); start += kEvalChunk) {
        const std::size_t end = std::min(queries.size(), start + kEvalChunk);
        std::vector<const LabeledQuery*> chunk;
        std::vector<std::size_t> rows;
        for (std::size_t i = start; i < end; ++i) {
            chunk.push_back(&queries[i]);
            rows.push_back(i);
        }
        const auto examples = routing_examples(world, chunk, rows, outcomes, panels.subspan(start, end - start));
        const auto dists = anp::select_batch(params, config, examples);
        for (std::size_t i = 0; i < dists.size(); ++i) {
            const auto& o = outcomes[start + i][panels[start + i][dists[i].selected]];
            total += o.cost;
        }
    }
    return total / static_cast<double>(queries.size());
}

FitResult fit(const TrainConfig& config, const SimWorld& world, const anp::SelectorConfig& selector,
              const objective::ObjectiveConfig& objective, const std::function<void(const EpochRecord&)>& on_epoch) {
    config.validate();
    selector.validate();
    objective.validate();
    if (objective.task_weights.size() != world.tasks.size()) {
        throw ContractViolation("fit: one task weight per world task required");
    }
    const auto& train = world.split("train");
    const auto& val = world.split("val");
    if (train.empty() || val.empty()) throw ContractViolation("fit: train and val splits must be non-empty");

    std::vector<std::vector<std::size_t>> by_task(world.tasks.size());
    for (std::size_t i = 0; i < train.size(); ++i) by_task.at(train[i].query.task).push_back(i);
    for (std::size_t t = 0; t < by_task.size(); ++t) {
        if (objective.task_weights[t] > 0.0 && by_task[t].empty()) {
            throw ContractViolation("fit: task " + std::to_string(t) + " has weight but no training queries");
        }
    }

    const OutcomeTable train_outcomes = simworld::outcome_table(world, train);
    const OutcomeTable val_outcomes = simworld::outcome_table(world, val);
    std::vector<std::vector<const domain::Tool*>> populations;
    for (const auto& task : world.tasks) populations.push_back(world.population(task.id));

    std::vector<std::vector<std::size_t>> val_panels;
    {
        Rng rng(config.seed, {kTagValPanels});
        for (const auto& lq : val) {
            val_panels.push_back(
                sample_panel_positions(populations[lq.query.task], lq.query, config.panel_size, rng));
        }
    }

    FitResult result;
    anp::SelectorParams params = anp::init_params(selector, derive_seed(config.seed, {kTagInit}));
    AdamW opt(params.tensors(), config.lr, config.weight_decay, config.beta1, config.beta2, config.adam_eps);
    Rng step_rng(config.seed, {kTagSteps});
    Rng dropout_rng(config.seed, {kTagDropout});
    const std::size_t steps_per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;

    std::vector<double> val_history;
    double best_val = std::numeric_limits<double>::infinity();
    result.params = params;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        double loss_total = 0.0;
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            const auto task = sample_task(objective.task_weights, step_rng);
            const auto& pool = by_task[task];
            std::vector<const LabeledQuery*> batch;
            std::vector<std::size_t> rows;
            std::vector<std::vector<std::size_t>> panels;
            for (std::size_t b = 0; b < config.batch_size; ++b) {
                const std::size_t row = pool[step_rng.index(pool.size())];
                batch.push_back(&train[row]);
                rows.push_back(row);
                panels.push_back(
                    sample_panel_positions(populations[task], train[row].query, config.panel_size, step_rng));
            }
            const auto examples = routing_examples(world, batch, rows, train_outcomes, panels);

            Tape tape;
            tape.training = true;
            anp::SelectorGraph graph(tape, params, selector, &dropout_rng);
            const auto graphs = graph.build(examples);
            std::vector<objective::ExampleTerms> terms;
            for (std::size_t b = 0; b < graphs.size(); ++b) {
                terms.push_back({&graphs[b], panel_costs(train_outcomes, rows[b], panels[b]), task});
            }
            const Var loss = objective::batch_objective(objective, terms);
            try {
                tape.backward(loss);
                std::vector<Tensor> grads;
                for (const Tensor* p : params.tensors()) grads.push_back(tape.grad_of(*p));
                opt.step(grads);
            } catch (const NonFiniteError& e) {
                throw NonFiniteError("fit: epoch " + std::to_string(epoch) + " step " + std::to_string(s + 1) + ": " +
                                     e.what());
            }
            loss_total += loss.value()[0];
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_total / static_cast<double>(steps_per_epoch);
        rec.val_cost = routed_cost(params, selector, world, val, val_outcomes, val_panels);
        val_history.push_back(rec.val_cost);
        rec.best = epoch == 1 || rec.val_cost < best_val - config.min_delta;
        if (rec.best) {
            best_val = rec.val_cost;
            result.params = params;
            result.best_epoch = epoch;
        }
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (early_stop(val_history, config.patience, config.min_delta)) break;
    }
    result.steps = opt.steps();
    return result;
}

} // namespace toolselect::trainer
