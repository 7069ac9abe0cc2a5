#include "toolselect/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "toolselect/errors.hpp"
#include "toolselect/trainer.hpp"

namespace toolselect::baselines {

using diffcore::Tape;
using diffcore::Tensor;
using diffcore::Var;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kSelectChunk = 64;

std::vector<double> features(const domain::Query& q) {
    std::vector<double> f = q.x;
    f.insert(f.end(), q.q.begin(), q.q.end());
    return f;
}

std::vector<bool> require_valid(const RouteRequest& request) {
    auto mask = valid_slots(request);
    if (std::find(mask.begin(), mask.end(), true) == mask.end()) {
        throw NoValidCandidate("route: panel has no valid slot");
    }
    return mask;
}

/// Valid slot with the smallest key; ties to the lowest slot.
std::size_t argmin_valid(const std::vector<bool>& mask, const std::vector<double>& key) {
    std::size_t best = mask.size();
    for (std::size_t j = 0; j < mask.size(); ++j) {
        if (!mask[j]) continue;
        if (best == mask.size() || key[j] < key[best]) best = j;
    }
    return best;
}

Tensor glorot(std::size_t in, std::size_t out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor t({in, out});
    for (double& v : t.data()) v = rng.uniform(-a, a);
    return t;
}

} // namespace

std::vector<bool> valid_slots(const RouteRequest& request) {
    if (request.query == nullptr || request.task == nullptr) throw ContractViolation("route: request without query");
    if (request.predictions.size() != request.panel.size()) {
        throw DimensionError("route: one prediction per panel slot required");
    }
    std::vector<bool> mask(request.panel.size());
    for (std::size_t j = 0; j < mask.size(); ++j) {
        mask[j] = domain::validity(*request.panel[j], *request.query) && request.predictions[j] != nullptr &&
                  !request.predictions[j]->is_null;
    }
    return mask;
}

std::vector<std::size_t> Router::route_batch(std::span<const RouteRequest> requests, std::span<Rng> rngs) const {
    if (rngs.size() != requests.size()) throw DimensionError("route_batch: one rng per request required");
    std::vector<std::size_t> out;
    out.reserve(requests.size());
    for (std::size_t i = 0; i < requests.size(); ++i) out.push_back(route(requests[i], rngs[i]));
    return out;
}

std::vector<TrainRecord> train_records(const simworld::SimWorld& world, std::span<const simworld::LabeledQuery> queries,
                                       const simworld::OutcomeTable& outcomes) {
    if (outcomes.size() != queries.size()) throw DimensionError("train_records: one outcome row per query required");
    std::vector<TrainRecord> out;
    out.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        TrainRecord r{&queries[i].query, {}};
        const auto& pop = world.populations.at(queries[i].query.task);
        for (std::size_t p = 0; p < pop.size(); ++p)
            if (outcomes[i][p].valid) r.costs[pop[p]] = outcomes[i][p].cost;
        out.push_back(std::move(r));
    }
    return out;
}

std::size_t RandomRouter::route(const RouteRequest& request, Rng& rng) const {
    const auto mask = require_valid(request);
    std::vector<std::size_t> valid;
    for (std::size_t j = 0; j < mask.size(); ++j)
        if (mask[j]) valid.push_back(j);
    return valid[rng.index(valid.size())];
}

std::size_t OracleRouter::route(const RouteRequest& request, Rng&) const {
    const auto mask = require_valid(request);
    if (request.costs == nullptr || request.costs->size() != mask.size()) {
        throw ContractViolation("oracle: realized slot costs required");
    }
    return argmin_valid(mask, *request.costs);
}

GlobalBestRouter::GlobalBestRouter(std::span<const TrainRecord> records) {
    if (records.empty()) throw ContractViolation("GlobalBest: empty training set");
    std::map<ToolId, std::pair<double, std::size_t>> acc;
    for (const auto& r : records) {
        for (const auto& [tool, c] : r.costs) {
            acc[tool].first += c;
            acc[tool].second += 1;
        }
    }
    for (const auto& [tool, sc] : acc) mean_cost_[tool] = sc.first / static_cast<double>(sc.second);
}

std::size_t GlobalBestRouter::route(const RouteRequest& request, Rng&) const {
    const auto mask = require_valid(request);
    std::vector<double> key(mask.size(), kInf);
    for (std::size_t j = 0; j < mask.size(); ++j) {
        auto it = mean_cost_.find(request.panel[j]->id);
        if (it != mean_cost_.end()) key[j] = it->second;
    }
    return argmin_valid(mask, key);
}

KnnRouter::KnnRouter(std::span<const TrainRecord> records, std::size_t k) : k_(k) {
    if (records.empty()) throw ContractViolation("KNN: empty training set");
    if (k == 0) throw ContractViolation("KNN: k must be positive");
    for (const auto& r : records) bank_.push_back({r.query->task, features(*r.query), r.costs});
}

std::size_t KnnRouter::route(const RouteRequest& request, Rng&) const {
    const auto mask = require_valid(request);
    const auto f = features(*request.query);
    std::vector<std::pair<double, std::size_t>> dist;
    for (std::size_t i = 0; i < bank_.size(); ++i) {
        if (bank_[i].task != request.query->task) continue;
        double d = 0.0;
        for (std::size_t c = 0; c < f.size(); ++c) d += (f[c] - bank_[i].features[c]) * (f[c] - bank_[i].features[c]);
        dist.emplace_back(d, i);
    }
    const std::size_t k = std::min(k_, dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());

    std::vector<double> key(mask.size(), kInf);
    for (std::size_t j = 0; j < mask.size(); ++j) {
        double total = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < k; ++i) {
            const auto& costs = bank_[dist[i].second].costs;
            auto it = costs.find(request.panel[j]->id);
            if (it == costs.end()) continue;
            total += it->second;
            ++n;
        }
        if (n > 0) key[j] = total / static_cast<double>(n);
    }
    return argmin_valid(mask, key);
}

MlpIndexRouter::MlpIndexRouter(std::span<const TrainRecord> records, const MlpIndexConfig& config) {
    if (records.empty()) throw ContractViolation("MLPIndex: empty training set");
    if (config.hidden == 0 || config.epochs == 0 || config.batch_size == 0) {
        throw ContractViolation("MLPIndex: hidden, epochs and batch_size must be positive");
    }

    std::vector<std::vector<double>> inputs;
    std::vector<ToolId> targets;
    for (const auto& r : records) {
        if (r.costs.empty()) continue;
        ToolId best = r.costs.begin()->first;
        for (const auto& [tool, c] : r.costs)
            if (c < r.costs.at(best)) best = tool;
        inputs.push_back(features(*r.query));
        targets.push_back(best);
        for (const auto& [tool, c] : r.costs) index_of_.emplace(tool, 0);
    }
    if (inputs.empty()) throw ContractViolation("MLPIndex: no record has a valid tool");
    for (auto& [tool, idx] : index_of_) {
        idx = tools_.size();
        tools_.push_back(tool);
    }

    const std::size_t n = inputs.size();
    const std::size_t d = inputs[0].size();
    mean_.assign(d, 0.0);
    inv_sd_.assign(d, 0.0);
    for (const auto& f : inputs)
        for (std::size_t c = 0; c < d; ++c) mean_[c] += f[c] / static_cast<double>(n);
    for (const auto& f : inputs)
        for (std::size_t c = 0; c < d; ++c) inv_sd_[c] += (f[c] - mean_[c]) * (f[c] - mean_[c]) / static_cast<double>(n);
    for (double& v : inv_sd_) v = v > 0.0 ? 1.0 / std::sqrt(v) : 1.0;

    Rng rng(config.seed, {0x3195});
    const std::size_t k = tools_.size();
    w1_ = glorot(d, config.hidden, rng);
    b1_ = Tensor({1, config.hidden});
    w2_ = glorot(config.hidden, k, rng);
    b2_ = Tensor({1, k});
    trainer::AdamW opt({&w1_, &b1_, &w2_, &b2_}, config.lr, config.weight_decay);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + config.batch_size);
            const std::size_t b = end - start;
            Tensor x({b, d});
            Tensor onehot({b, k});
            for (std::size_t r = 0; r < b; ++r) {
                const std::size_t i = order[start + r];
                for (std::size_t c = 0; c < d; ++c) x.at(r, c) = (inputs[i][c] - mean_[c]) * inv_sd_[c];
                onehot.at(r, index_of_.at(targets[i])) = -1.0 / static_cast<double>(b);
            }
            Tape tape;
            Var h = diffcore::gelu(diffcore::add_row(diffcore::matmul(tape.constant(x), tape.parameter(w1_)),
                                                     tape.parameter(b1_)));
            Var logits = diffcore::add_row(diffcore::matmul(h, tape.parameter(w2_)), tape.parameter(b2_));
            Var loss = diffcore::sum(diffcore::mul_const(diffcore::log_clamped(diffcore::row_softmax(logits), 1e-12), onehot));
            tape.backward(loss);
            opt.step(std::vector<Tensor>{tape.grad_of(w1_), tape.grad_of(b1_), tape.grad_of(w2_), tape.grad_of(b2_)});
        }
    }
}

std::vector<double> MlpIndexRouter::logits(const domain::Query& query) const {
    const auto f = features(query);
    if (f.size() != mean_.size()) throw DimensionError("MLPIndex: feature width mismatch");
    const std::size_t hidden = w1_.cols();
    std::vector<double> h(hidden);
    for (std::size_t j = 0; j < hidden; ++j) {
        double s = b1_[j];
        for (std::size_t c = 0; c < f.size(); ++c) s += (f[c] - mean_[c]) * inv_sd_[c] * w1_.at(c, j);
        h[j] = s;
    }
    const Tensor act = diffcore::gelu_value(Tensor({hidden}, h));
    std::vector<double> out(tools_.size());
    for (std::size_t t = 0; t < out.size(); ++t) {
        double s = b2_[t];
        for (std::size_t j = 0; j < hidden; ++j) s += act[j] * w2_.at(j, t);
        out[t] = s;
    }
    return out;
}

std::size_t MlpIndexRouter::route(const RouteRequest& request, Rng&) const {
    const auto mask = require_valid(request);
    const auto z = logits(*request.query);
    std::vector<double> key(mask.size(), kInf);
    for (std::size_t j = 0; j < mask.size(); ++j) {
        auto it = index_of_.find(request.panel[j]->id);
        if (it != index_of_.end()) key[j] = -z[it->second];
    }
    return argmin_valid(mask, key);
}

ToolSelectRouter::ToolSelectRouter(anp::SelectorParams params, anp::SelectorConfig config)
    : params_(std::move(params)), config_(std::move(config)) {
    config_.validate();
}

namespace {

anp::RoutingExample to_example(const RouteRequest& r) {
    return anp::RoutingExample{r.query, r.task, r.panel, r.predictions};
}

} // namespace

std::size_t ToolSelectRouter::route(const RouteRequest& request, Rng&) const {
    require_valid(request);
    return anp::select(params_, config_, to_example(request)).selected;
}

std::vector<std::size_t> ToolSelectRouter::route_batch(std::span<const RouteRequest> requests, std::span<Rng>) const {
    std::vector<std::size_t> out;
    out.reserve(requests.size());
    for (std::size_t start = 0; start < requests.size(); start += kSelectChunk) {
        const std::size_t end = std::min(requests.size(), start + kSelectChunk);
        std::vector<anp::RoutingExample> batch;
        for (std::size_t i = start; i < end; ++i) {
            require_valid(requests[i]);
            batch.push_back(to_example(requests[i]));
        }
        for (const auto& d : anp::select_batch(params_, config_, batch)) out.push_back(d.selected);
    }
    return out;
}

bool is_router_name(const std::string& name) {
    static const char* const kNames[] = {"Random", "Oracle", "GlobalBest", "KNN", "MLPIndex", "ToolSelect"};
    return std::find(std::begin(kNames), std::end(kNames), name) != std::end(kNames);
}

} // namespace toolselect::baselines
