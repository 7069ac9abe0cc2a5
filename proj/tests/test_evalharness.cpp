#include <doctest.h>

#include <cmath>
#include <sstream>

#include "toolselect/errors.hpp"
#include "toolselect/evalharness.hpp"

using namespace toolselect;
using namespace toolselect::eval;

namespace {

simworld::SimWorld eval_world(std::uint64_t seed, std::size_t test_size) {
    simworld::WorldConfig cfg;
    cfg.seed = seed;
    cfg.train_size = 300;
    cfg.val_size = 10;
    cfg.test_size = test_size;
    cfg.ref_pool_size = 32;
    cfg.ref_size = 4;
    return simworld::generate_world(cfg);
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

} // namespace

TEST_CASE("gap_closure") {
    CHECK(*gap_closure(0.2, 0.5, 0.1) == doctest::Approx(0.75));
    CHECK(*gap_closure(0.1, 0.5, 0.1) == 1.0);
    CHECK(*gap_closure(0.5, 0.5, 0.1) == 0.0);
    CHECK(*gap_closure(0.6, 0.5, 0.1) == doctest::Approx(-0.25));
    CHECK(*gap_closure(0.05, 0.5, 0.1) == doctest::Approx(1.125));
    CHECK_FALSE(gap_closure(0.2, 0.1, 0.1).has_value());
    CHECK_FALSE(gap_closure(0.2, 0.1, 0.3).has_value());
}

TEST_CASE("confusion summary closed form") {
    const auto s = summarize_confusion({{3, 1}, {0, 2}});
    CHECK(s.accuracy == doctest::Approx(5.0 / 6.0));
    CHECK(s.macro_precision == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
    CHECK(s.macro_recall == doctest::Approx((0.75 + 1.0) / 2.0));
    CHECK(s.macro_f1 == doctest::Approx((2.0 * 0.75 / 1.75 + 0.8) / 2.0));
    // A class never predicted contributes zero precision and zero F1.
    const auto z = summarize_confusion({{2, 0}, {2, 0}});
    CHECK(z.macro_precision == doctest::Approx(0.25));
    CHECK(z.macro_f1 == doctest::Approx((2.0 * 0.5 * 1.0 / 1.5) / 2.0));
    CHECK_THROWS_AS(summarize_confusion({{1, 2}, {3}}), DimensionError);
}

TEST_CASE("paired evaluation over a world") {
    const auto world = eval_world(31, 2000);
    const auto& test = world.split("test");
    const auto ctx = make_context(world, test, 6, 5);
    REQUIRE(ctx.queries.size() == 2000);
    for (std::size_t i = 1; i < ctx.queries.size(); ++i) CHECK(ctx.queries[i - 1].query.uid < ctx.queries[i].query.uid);

    const auto records = baselines::train_records(world, world.split("train"),
                                                  simworld::outcome_table(world, world.split("train")));
    const baselines::RandomRouter random;
    const baselines::OracleRouter oracle;
    const baselines::GlobalBestRouter global(records);
    const baselines::KnnRouter knn(records);
    std::vector<MetricsReport> reports = {evaluate(random, ctx), evaluate(oracle, ctx), evaluate(global, ctx),
                                          evaluate(knn, ctx)};
    attach_gap_closure(reports);

    SUBCASE("panels are identical across routers") {
        for (const auto& r : reports) CHECK(r.panel_digest == reports[0].panel_digest);
        CHECK(make_context(world, test, 6, 5).panel_digest() == ctx.panel_digest());
        CHECK(make_context(world, test, 6, 6).panel_digest() != ctx.panel_digest());
    }

    SUBCASE("oracle cost is the mean per-panel minimum and a lower bound") {
        double expected = 0.0;
        for (std::size_t i = 0; i < ctx.queries.size(); ++i) {
            double best = 2.0;
            for (std::size_t pos : ctx.panels[i])
                if (ctx.outcomes[i][pos].valid) best = std::min(best, ctx.outcomes[i][pos].cost);
            expected += best;
        }
        CHECK(reports[1].mean_cost == doctest::Approx(expected / 2000.0).epsilon(1e-12));
        for (const auto& r : reports) {
            CHECK(reports[1].mean_cost <= r.mean_cost);
            for (std::size_t i = 0; i < r.query_costs.size(); ++i) CHECK(reports[1].query_costs[i] <= r.query_costs[i]);
        }
        CHECK(*reports[1].gap_closure == 1.0);
        CHECK(*reports[0].gap_closure == 0.0);
    }

    SUBCASE("random lies within two standard errors of the valid-slot average") {
        double analytic = 0.0;
        for (std::size_t i = 0; i < ctx.queries.size(); ++i) {
            double sum = 0.0, n = 0.0;
            for (std::size_t pos : ctx.panels[i]) {
                if (!ctx.outcomes[i][pos].valid) continue;
                sum += ctx.outcomes[i][pos].cost;
                n += 1.0;
            }
            analytic += sum / n / 2000.0;
        }
        MESSAGE("random " << reports[0].mean_cost << " analytic " << analytic << " se " << reports[0].cost_stderr);
        CHECK(std::abs(reports[0].mean_cost - analytic) <= 2.0 * reports[0].cost_stderr);
    }

    SUBCASE("histograms and per-task metrics are consistent") {
        for (const auto& r : reports) {
            std::size_t total = 0;
            for (const auto& [tool, count] : r.histogram) {
                total += count;
                CHECK(tool < world.tools.size());
            }
            CHECK(total == r.query_count);
            std::size_t task_total = 0;
            for (const auto& t : r.tasks) {
                task_total += t.count;
                CHECK(t.metrics.size() == metric_names(t.family).size());
                for (const auto& [name, v] : t.metrics) {
                    CHECK(v >= 0.0);
                    CHECK(v <= 1.0);
                }
                // Every family metric is the complement of its cost, except macro P/R/F1.
                CHECK(t.metrics[0].second == doctest::Approx(1.0 - t.mean_cost).epsilon(1e-12));
            }
            CHECK(task_total == r.query_count);
        }
    }
}

TEST_CASE("full-population panels are supported") {
    const auto world = eval_world(32, 40);
    const auto ctx = make_context(world, world.split("test"), 12, 1);
    for (const auto& p : ctx.panels) CHECK(p.size() == 12);
    CHECK_NOTHROW(evaluate(baselines::RandomRouter{}, ctx));
    CHECK_THROWS_AS(make_context(world, std::span<const simworld::LabeledQuery>{}, 6, 1), ContractViolation);
}

TEST_CASE("report rendering is deterministic and records round-trip") {
    const auto world = eval_world(33, 120);
    const auto ctx = make_context(world, world.split("test"), 6, 2);
    std::vector<MetricsReport> reports = {evaluate(baselines::RandomRouter{}, ctx),
                                          evaluate(baselines::OracleRouter{}, ctx)};
    attach_gap_closure(reports);
    const std::string text = render_report(reports);
    CHECK(text == render_report(reports));

    std::size_t records = 0;
    for (const auto& line : lines_of(text)) {
        if (line.rfind("record ", 0) != 0) continue;
        ++records;
        const auto kv = parse_record(line);
        const auto& rep = kv.at("router") == "Random" ? reports[0] : reports[1];
        if (kv.at("task") == "all") {
            CHECK(std::stod(kv.at("cost")) == rep.mean_cost);
            CHECK(std::stod(kv.at("stderr")) == rep.cost_stderr);
            CHECK(std::stod(kv.at("gap_closure")) == *rep.gap_closure);
            CHECK(std::stoull(kv.at("panel_digest")) == rep.panel_digest);
            continue;
        }
        const auto task = static_cast<domain::TaskId>(std::stoul(kv.at("task")));
        const auto& tm = *std::find_if(rep.tasks.begin(), rep.tasks.end(), [&](const auto& t) { return t.task == task; });
        CHECK(std::stod(kv.at("cost")) == tm.mean_cost);
        for (const auto& [name, v] : tm.metrics) CHECK(std::stod(kv.at(name)) == v);
        // router, task, family, n, cost, then one column per metric.
        CHECK(kv.size() == 5 + metric_names(tm.family).size());
    }
    CHECK(records == 2 * (world.tasks.size() + 1));

    // Each per-task table has one column per metric after router and cost.
    const auto lines = lines_of(text);
    for (std::size_t i = 0; i + 1 < lines.size(); ++i) {
        if (lines[i].rfind("task ", 0) != 0) continue;
        std::istringstream header(lines[i + 1]);
        std::size_t cols = 0;
        for (std::string w; header >> w;) ++cols;
        const auto family = domain::parse_family(lines[i].substr(lines[i].find('(') + 1, lines[i].find(')') - lines[i].find('(') - 1));
        CHECK(cols == 2 + metric_names(family).size());
    }

    CHECK_THROWS_AS(parse_record("router=x"), ParseError);
    CHECK_THROWS_AS(parse_record("record router"), ParseError);
}
