#pragma once

// Reference routers. Every router picks a valid panel slot; a request with
// no valid slot raises NoValidCandidate.

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "toolselect/anp_selector.hpp"
#include "toolselect/diffcore.hpp"
#include "toolselect/domain.hpp"
#include "toolselect/rng.hpp"
#include "toolselect/simworld.hpp"

namespace toolselect::baselines {

using domain::ToolId;

struct RouteRequest {
    const domain::Query* query = nullptr;
    const domain::TaskInfo* task = nullptr;
    std::vector<const domain::Tool*> panel;
    std::vector<const domain::AlignedPrediction*> predictions;
    /// Realized slot costs; consumed by the Oracle only.
    const std::vector<double>* costs = nullptr;
};

/// Slot j is valid when its tool supports the task and its prediction is not null.
std::vector<bool> valid_slots(const RouteRequest& request);

class Router {
public:
    virtual ~Router() = default;
    virtual std::string name() const = 0;
    virtual std::size_t route(const RouteRequest& request, Rng& rng) const = 0;
    /// One decision per request; rngs[i] belongs to requests[i].
    virtual std::vector<std::size_t> route_batch(std::span<const RouteRequest> requests, std::span<Rng> rngs) const;
};

/// Training record: a query with the cost of every tool valid for it.
struct TrainRecord {
    const domain::Query* query = nullptr;
    std::map<ToolId, double> costs;
};

std::vector<TrainRecord> train_records(const simworld::SimWorld& world, std::span<const simworld::LabeledQuery> queries,
                                       const simworld::OutcomeTable& outcomes);

class RandomRouter final : public Router {
public:
    std::string name() const override { return "Random"; }
    std::size_t route(const RouteRequest& request, Rng& rng) const override;
};

/// Evaluation-only: reads realized costs.
class OracleRouter final : public Router {
public:
    std::string name() const override { return "Oracle"; }
    std::size_t route(const RouteRequest& request, Rng& rng) const override;
};

class GlobalBestRouter final : public Router {
public:
    explicit GlobalBestRouter(std::span<const TrainRecord> records);
    std::string name() const override { return "GlobalBest"; }
    std::size_t route(const RouteRequest& request, Rng& rng) const override;
    const std::map<ToolId, double>& mean_costs() const noexcept { return mean_cost_; }

private:
    std::map<ToolId, double> mean_cost_;
};

class KnnRouter final : public Router {
public:
    KnnRouter(std::span<const TrainRecord> records, std::size_t k = 5);
    std::string name() const override { return "KNN"; }
    std::size_t route(const RouteRequest& request, Rng& rng) const override;

private:
    struct Entry {
        domain::TaskId task;
        std::vector<double> features;
        std::map<ToolId, double> costs;
    };
    std::vector<Entry> bank_;
    std::size_t k_;
};

struct MlpIndexConfig {
    std::size_t hidden = 64;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    double lr = 3e-3;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;
};

/// Two-layer GELU classifier from concat(x, q) to tool-id logits, trained
/// with cross-entropy against each record's cheapest tool.
class MlpIndexRouter final : public Router {
public:
    MlpIndexRouter(std::span<const TrainRecord> records, const MlpIndexConfig& config = {});
    std::string name() const override { return "MLPIndex"; }
    std::size_t route(const RouteRequest& request, Rng& rng) const override;

    /// Logit per indexed tool (in index order) for one query.
    std::vector<double> logits(const domain::Query& query) const;
    const std::vector<ToolId>& indexed_tools() const noexcept { return tools_; }

private:
    std::vector<ToolId> tools_;
    std::map<ToolId, std::size_t> index_of_;
    std::vector<double> mean_, inv_sd_;
    diffcore::Tensor w1_, b1_, w2_, b2_;
};

class ToolSelectRouter final : public Router {
public:
    ToolSelectRouter(anp::SelectorParams params, anp::SelectorConfig config);
    std::string name() const override { return "ToolSelect"; }
    std::size_t route(const RouteRequest& request, Rng& rng) const override;
    std::vector<std::size_t> route_batch(std::span<const RouteRequest> requests, std::span<Rng> rngs) const override;

    const anp::SelectorParams& params() const noexcept { return params_; }
    const anp::SelectorConfig& config() const noexcept { return config_; }

private:
    anp::SelectorParams params_;
    anp::SelectorConfig config_;
};

/// Known router names: Random, Oracle, GlobalBest, KNN, MLPIndex, ToolSelect.
bool is_router_name(const std::string& name);

} // namespace toolselect::baselines
