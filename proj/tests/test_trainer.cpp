#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "toolselect/errors.hpp"
#include "toolselect/trainer.hpp"

using namespace toolselect;
using namespace toolselect::trainer;
using diffcore::Tensor;

namespace {

simworld::WorldConfig tiny_world_config(std::uint64_t seed) {
    simworld::WorldConfig cfg;
    cfg.seed = seed;
    cfg.train_size = 240;
    cfg.val_size = 60;
    cfg.test_size = 20;
    cfg.ref_pool_size = 32;
    cfg.ref_size = 4;
    cfg.tools_per_task = 6;
    return cfg;
}

anp::SelectorConfig small_selector(const simworld::SimWorld& world) {
    anp::SelectorConfig base;
    base.hidden = 32;
    base.d_u = 16;
    base.d = 16;
    base.d_v = 16;
    base.d_k = 8;
    return selector_config_for(world, base);
}

// Tool 0 of every population is perfect everywhere; the rest sit at the floor.
simworld::SimWorld perfect_tool_world() {
    auto cfg = tiny_world_config(21);
    cfg.tools_per_task = 2;
    cfg.support_prob = 1.0;
    cfg.coarsen_prob = 0.0;
    cfg.train_size = 1000;
    auto world = simworld::generate_world(cfg);
    for (std::size_t t = 0; t < world.tasks.size(); ++t) {
        const auto& pop = world.populations[t];
        for (std::size_t i = 0; i < pop.size(); ++i) {
            auto& tool = world.tools[pop[i]];
            tool.sharpness = 0.0;
            tool.ceiling = i == 0 ? 1.0 : world.generators[t].p_floor;
        }
    }
    Rng rng(5);
    simworld::build_reference_sets(world, cfg.ref_size, rng);
    return world;
}

} // namespace

TEST_CASE("train config validation and epoch formatting") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.panel_size = 1;
    CHECK_THROWS_AS(cfg.validate(), ContractViolation);
    cfg = TrainConfig{};
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ContractViolation);
    CHECK(format_epoch({3, 0.5, 0.25, true}) == "epoch=3 train_loss=0.500000 val_cost=0.250000 best=1");
    CHECK(format_epoch({12, -1.0, 0.125, false}) == "epoch=12 train_loss=-1.000000 val_cost=0.125000 best=0");
}

TEST_CASE("sample_task frequencies") {
    const std::vector<double> w = {0.1, 0.6, 0.3, 0.0};
    Rng rng(31);
    constexpr int n = 100000;
    std::vector<int> counts(w.size(), 0);
    for (int i = 0; i < n; ++i) ++counts.at(sample_task(w, rng));
    for (std::size_t t = 0; t < w.size(); ++t) {
        const double sd = std::sqrt(n * w[t] * (1.0 - w[t]));
        CHECK(std::abs(counts[t] - n * w[t]) <= 3.0 * sd + 1e-9);
    }
    CHECK(counts[3] == 0);
}

TEST_CASE("sample_panel redraws panels with no valid tool") {
    std::vector<domain::Tool> tools(2);
    tools[0].supported_tasks = {0};
    tools[1].supported_tasks = {1};
    const std::vector<const domain::Tool*> pop = {&tools[0], &tools[1]};
    domain::Query q;
    q.task = 0;

    // Valid counts follow a Binomial(6, 1/2) conditioned on at least one success.
    Rng rng(32);
    constexpr int n = 100000;
    std::vector<int> hist(7, 0);
    for (int i = 0; i < n; ++i) {
        const auto panel = sample_panel(pop, q, 6, rng);
        REQUIRE(panel.tools.size() == 6);
        int valid = 0;
        for (const auto* t : panel.tools) valid += domain::validity(*t, q);
        ++hist[valid];
    }
    CHECK(hist[0] == 0);
    for (int k = 1; k <= 6; ++k) {
        const double binom = std::tgamma(7.0) / (std::tgamma(k + 1.0) * std::tgamma(7.0 - k));
        const double p = binom / 64.0 / (1.0 - 1.0 / 64.0);
        CHECK(std::abs(hist[k] - n * p) <= 4.0 * std::sqrt(n * p * (1 - p)));
    }

    q.task = 2;
    CHECK_THROWS_AS(sample_panel(pop, q, 6, rng), NoValidPanel);
}

TEST_CASE("panel positions follow the same draw sequence as panels") {
    std::vector<domain::Tool> tools(5);
    for (std::size_t i = 0; i < tools.size(); ++i) tools[i].supported_tasks = {static_cast<domain::TaskId>(i % 2)};
    std::vector<const domain::Tool*> pop;
    for (const auto& t : tools) pop.push_back(&t);
    domain::Query q;
    q.task = 1;
    Rng a(33), b(33);
    for (int i = 0; i < 50; ++i) {
        const auto panel = sample_panel(pop, q, 4, a);
        const auto pos = sample_panel_positions(pop, q, 4, b);
        for (std::size_t j = 0; j < 4; ++j) CHECK(panel.tools[j] == pop[pos[j]]);
    }
}

TEST_CASE("adamw first two steps match a hand computation") {
    Tensor p = Tensor::vector({1.0, -2.0});
    const double lr = 0.1, wd = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    AdamW opt({&p}, lr, wd, b1, b2, eps);
    const std::vector<Tensor> g1 = {Tensor::vector({0.5, -4.0})};
    opt.step(g1);
    // Step 1: m_hat = g, v_hat = g^2, so the moment ratio is sign(g) up to eps.
    double e0 = 1.0 - lr * 0.5 / (0.5 + eps) - lr * wd * 1.0;
    double e1 = -2.0 - lr * -4.0 / (4.0 + eps) - lr * wd * -2.0;
    CHECK(p[0] == doctest::Approx(e0).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(e1).epsilon(1e-14));

    const std::vector<Tensor> g2 = {Tensor::vector({1.0, 2.0})};
    opt.step(g2);
    const double m0 = b1 * (1 - b1) * 0.5 + (1 - b1) * 1.0, v0 = b2 * (1 - b2) * 0.25 + (1 - b2) * 1.0;
    const double m1 = b1 * (1 - b1) * -4.0 + (1 - b1) * 2.0, v1 = b2 * (1 - b2) * 16.0 + (1 - b2) * 4.0;
    const double c1 = 1 - b1 * b1, c2 = 1 - b2 * b2;
    const double n0 = e0 - lr * (m0 / c1) / (std::sqrt(v0 / c2) + eps) - lr * wd * e0;
    const double n1 = e1 - lr * (m1 / c1) / (std::sqrt(v1 / c2) + eps) - lr * wd * e1;
    CHECK(p[0] == doctest::Approx(n0).epsilon(1e-13));
    CHECK(p[1] == doctest::Approx(n1).epsilon(1e-13));
    CHECK(opt.steps() == 2);
    CHECK(opt.first_moments()[0][0] == doctest::Approx(m0).epsilon(1e-14));
    CHECK(opt.second_moments()[0][1] == doctest::Approx(v1).epsilon(1e-14));
}

TEST_CASE("adamw minimizes a quadratic") {
    Tensor p = Tensor::vector({5.0, -3.0, 0.0});
    const std::vector<double> target = {3.0, 1.0, -2.0};
    AdamW opt({&p}, 0.05, 0.0);
    auto loss = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < 3; ++i) s += (p[i] - target[i]) * (p[i] - target[i]);
        return s;
    };
    const double start = loss();
    for (int s = 0; s < 2000; ++s) {
        Tensor g(p.shape());
        for (std::size_t i = 0; i < 3; ++i) g[i] = 2.0 * (p[i] - target[i]);
        const std::vector<Tensor> grads = {g};
        opt.step(grads);
    }
    CHECK(loss() < 1e-4 * start);
}

TEST_CASE("adamw rejects non-finite and mis-shaped gradients without side effects") {
    Tensor p = Tensor::vector({1.0, 2.0});
    AdamW opt({&p}, 0.1, 0.0);
    const std::vector<Tensor> bad = {Tensor::vector({1.0, std::nan("")})};
    CHECK_THROWS_AS(opt.step(bad), NonFiniteError);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == 2.0);
    CHECK(opt.steps() == 0);
    CHECK(opt.first_moments()[0][0] == 0.0);
    const std::vector<Tensor> wrong = {Tensor::vector({1.0, 2.0, 3.0})};
    CHECK_THROWS_AS(opt.step(wrong), DimensionError);
    CHECK_THROWS_AS(opt.step(std::span<const Tensor>{}), DimensionError);
}

TEST_CASE("early_stop") {
    const double improving[] = {1.0, 0.9, 0.8, 0.7};
    CHECK_FALSE(early_stop(improving, 2, 1e-4));
    const double flat[] = {1.0, 0.9, 0.9, 0.9};
    CHECK(early_stop(flat, 2, 1e-4));
    CHECK_FALSE(early_stop(flat, 3, 1e-4));
    // An improvement of exactly min_delta does not count.
    const double exact[] = {1.0, 0.75, 0.75};
    CHECK(early_stop(exact, 2, 0.25));
    CHECK_FALSE(early_stop(exact, 3, 0.25));
    const double noisy[] = {0.5, 0.6, 0.4, 0.45, 0.41};
    CHECK_FALSE(early_stop(noisy, 3, 1e-4));
    CHECK(early_stop(noisy, 2, 1e-4));
    CHECK_THROWS_AS(early_stop(std::span<const double>{}, 2, 0.0), ContractViolation);
}

TEST_CASE("selector config follows the world") {
    const auto world = simworld::generate_world(tiny_world_config(3));
    const auto sel = selector_config_for(world);
    CHECK(sel.d_x == world.config.d_x);
    CHECK(sel.d_q == world.config.d_q);
    CHECK(sel.ref_size == 4);
    CHECK(sel.label_counts == world.label_counts());
    CHECK(sel.slot_width == world.slot_width());
}

TEST_CASE("fit on a world with a perfect tool drives validation cost to zero within two epochs") {
    const auto world = perfect_tool_world();
    TrainConfig cfg;
    cfg.lr = 1e-2;
    cfg.max_epochs = 2;
    cfg.seed = 4;
    const auto result = fit(cfg, world, small_selector(world), objective::ObjectiveConfig::uniform(world.tasks.size()));
    REQUIRE(result.history.size() == 2);

    // Panels lacking the perfect tool (probability 2^-6) bound the achievable cost.
    const auto& val = world.split("val");
    const auto outcomes = simworld::outcome_table(world, val);
    double oracle = 0.0;
    Rng rng(cfg.seed, {0x7A15});
    for (std::size_t i = 0; i < val.size(); ++i) {
        const auto pos = sample_panel_positions(world.population(val[i].query.task), val[i].query, 6, rng);
        double best = 1.0;
        for (std::size_t p : pos)
            if (outcomes[i][p].valid) best = std::min(best, outcomes[i][p].cost);
        oracle += best / static_cast<double>(val.size());
    }
    MESSAGE("val_cost=" << result.history.back().val_cost << " oracle=" << oracle);
    CHECK(result.history.back().val_cost <= oracle + 0.02);
    CHECK(result.history.back().val_cost <= 0.05);
}

TEST_CASE("fit is deterministic per seed and keeps the best snapshot") {
    const auto world = simworld::generate_world(tiny_world_config(9));
    const auto sel = small_selector(world);
    const auto obj = objective::ObjectiveConfig::uniform(world.tasks.size());
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.max_epochs = 3;
    cfg.seed = 11;
    std::vector<EpochRecord> seen;
    const auto a = fit(cfg, world, sel, obj, [&](const EpochRecord& r) { seen.push_back(r); });
    const auto b = fit(cfg, world, sel, obj);
    CHECK(a.history == b.history);
    CHECK(seen == a.history);
    CHECK(a.steps == b.steps);
    CHECK(a.steps == a.history.size() * ((world.split("train").size() + cfg.batch_size - 1) / cfg.batch_size));
    auto pa = a.params;
    auto pb = b.params;
    const auto ta = pa.tensors();
    const auto tb = pb.tensors();
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(std::ranges::equal(ta[i]->data(), tb[i]->data()));

    cfg.seed = 12;
    const auto c = fit(cfg, world, sel, obj);
    CHECK(c.history != a.history);

    // best flags mark strict improvements by more than min_delta; best_epoch is the last flag.
    double best = std::numeric_limits<double>::infinity();
    std::size_t last_best = 0;
    for (const auto& r : a.history) {
        CHECK(r.best == (r.epoch == 1 || r.val_cost < best - cfg.min_delta));
        if (r.best) {
            best = r.val_cost;
            last_best = r.epoch;
        }
    }
    CHECK(a.best_epoch == last_best);
}

TEST_CASE("fit contracts") {
    const auto world = simworld::generate_world(tiny_world_config(9));
    TrainConfig cfg;
    cfg.max_epochs = 1;
    CHECK_THROWS_AS(fit(cfg, world, small_selector(world), objective::ObjectiveConfig::uniform(2)), ContractViolation);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(fit(cfg, world, small_selector(world), objective::ObjectiveConfig::uniform(world.tasks.size())),
                    ContractViolation);
}
