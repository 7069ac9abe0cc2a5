// Acceptance run: one PASS/FAIL line per criterion. Exit status 1 when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "toolselect/baselines.hpp"
#include "toolselect/checkpoint.hpp"
#include "toolselect/cli.hpp"
#include "toolselect/dataset_io.hpp"
#include "toolselect/errors.hpp"
#include "toolselect/evalharness.hpp"
#include "toolselect/objective.hpp"
#include "toolselect/trainer.hpp"

using namespace toolselect;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Outcome& o) {
    std::printf("criterion %d: %s  %s  [%s]\n", id, o.pass ? "PASS" : "FAIL", title.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

void run_criterion(int id, const std::string& title, const std::function<Outcome()>& body) {
    try {
        report(id, title, body());
    } catch (const std::exception& e) {
        report(id, title, {false, std::string("exception: ") + e.what()});
    }
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("toolselect_acceptance_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// Criterion 1 ---------------------------------------------------------------

Outcome gradient_correctness() {
    const auto t0 = Clock::now();
    simworld::WorldConfig wc;
    wc.families = {domain::TaskFamily::Classification, domain::TaskFamily::Grounding,
                   domain::TaskFamily::ReportGeneration};
    wc.seed = 101;
    wc.train_size = 60;
    wc.val_size = 6;
    wc.test_size = 6;
    wc.ref_pool_size = 32;
    wc.ref_size = 16;
    const auto world = simworld::generate_world(wc);
    anp::SelectorConfig base;
    base.dropout = 0.0;
    const auto sel = trainer::selector_config_for(world, base);

    // Batch of 4 covering all three tasks, one m=4 panel each.
    const auto& train = world.split("train");
    const auto outcomes = simworld::outcome_table(world, train);
    Rng rng(102);
    std::vector<std::size_t> rows;
    for (domain::TaskId t = 0; t < 3; ++t)
        for (std::size_t i = 0; i < train.size(); ++i)
            if (train[i].query.task == t) {
                rows.push_back(i);
                break;
            }
    rows.push_back(rng.index(train.size()));

    std::vector<anp::RoutingExample> examples;
    std::vector<objective::PanelCosts> costs;
    for (std::size_t row : rows) {
        const auto& lq = train[row];
        const auto pos = trainer::sample_panel_positions(world.population(lq.query.task), lq.query, 4, rng);
        anp::RoutingExample ex{&lq.query, &world.tasks[lq.query.task], {}, {}};
        objective::PanelCosts pc;
        for (std::size_t p : pos) {
            const auto& o = outcomes[row][p];
            ex.panel.push_back(&world.tool(world.populations[lq.query.task][p]).tool);
            ex.predictions.push_back(&o.prediction);
            pc.costs.push_back(o.valid ? o.cost : 0.0);
            pc.valid.push_back(o.valid);
        }
        examples.push_back(ex);
        costs.push_back(pc);
    }

    auto params = anp::init_params(sel, 103);
    const auto obj = objective::ObjectiveConfig::uniform(3);
    auto f = [&](diffcore::Tape& tape, std::span<const diffcore::Var>) {
        anp::SelectorGraph graph(tape, params, sel);
        const auto graphs = graph.build(examples);
        std::vector<objective::ExampleTerms> terms;
        for (std::size_t i = 0; i < graphs.size(); ++i)
            terms.push_back({&graphs[i], costs[i], examples[i].query->task});
        return objective::batch_objective(obj, terms);
    };
    const auto tensors = params.tensors();
    const auto r = diffcore::grad_check(f, tensors, 1e-5, 64);
    const double secs = seconds_since(t0);
    return {r.max_rel_err < 1e-4 && secs < 30.0,
            fmt("max_rel_err=%.3g over %zu coordinates of %zu tensors, %.1fs; worst %s", r.max_rel_err, r.coordinates,
                tensors.size(), secs, r.worst.c_str())};
}

// Criterion 2 ---------------------------------------------------------------

Outcome masked_softmax_suite() {
    Rng rng(201);
    double worst_sum = 0.0, worst_shift = 0.0;
    bool masked_exact = true;
    int no_valid_raised = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t m = 1 + rng.index(10);
        std::vector<double> s(m);
        for (double& v : s) v = rng.normal(0.0, 1.0 + 20.0 * rng.uniform());
        std::vector<bool> mask(m);
        for (std::size_t j = 0; j < m; ++j) mask[j] = rng.bernoulli(0.7);
        mask[rng.index(m)] = true;
        const double shift = rng.normal(0.0, 100.0);

        diffcore::Tape tape;
        const auto p = diffcore::masked_softmax(tape.constant(diffcore::Tensor::vector(s)), mask).value();
        std::vector<double> shifted = s;
        for (double& v : shifted) v += shift;
        const auto q = diffcore::masked_softmax(tape.constant(diffcore::Tensor::vector(shifted)), mask).value();
        double total = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            total += p[j];
            if (!mask[j] && p[j] != 0.0) masked_exact = false;
            worst_shift = std::max(worst_shift, std::abs(p[j] - q[j]));
        }
        worst_sum = std::max(worst_sum, std::abs(total - 1.0));

        try {
            diffcore::masked_softmax(tape.constant(diffcore::Tensor::vector(s)), std::vector<bool>(m, false));
        } catch (const NoValidCandidate&) {
            ++no_valid_raised;
        }
    }
    return {worst_sum <= 1e-12 && masked_exact && worst_shift <= 1e-12 && no_valid_raised == 1000,
            fmt("max |sum-1|=%.2g, masked mass exactly 0: %s, max shift drift=%.2g, NoValidCandidate %d/1000", worst_sum,
                masked_exact ? "yes" : "no", worst_shift, no_valid_raised)};
}

// Criterion 3 ---------------------------------------------------------------

Outcome compsum_identity() {
    Rng rng(301);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const double c1 = rng.uniform(), c2 = rng.uniform();
        const double r1 = rng.normal(0.0, 4.0), r2 = rng.normal(0.0, 4.0);
        diffcore::Tape tape;
        const auto probs = diffcore::masked_softmax(tape.constant(diffcore::Tensor::vector({r1, r2})), {true, true});
        const auto w = objective::compsum_weights({{c1, c2}, {true, true}});
        const double general = objective::compsum_loss(probs, w, {true, true}).value()[0];
        auto softplus = [](double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); };
        worst = std::max(worst, std::abs(general - (c2 * softplus(r2 - r1) + c1 * softplus(r1 - r2))));
    }
    int range_violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t m = 2 + rng.index(7);
        objective::PanelCosts pc;
        for (std::size_t j = 0; j < m; ++j) {
            pc.costs.push_back(rng.uniform());
            pc.valid.push_back(rng.bernoulli(0.75));
        }
        std::size_t forced = rng.index(m);
        pc.valid[forced] = true;
        pc.valid[(forced + 1) % m] = true;
        const double mv = static_cast<double>(pc.valid_count());
        const auto w = objective::compsum_weights(pc);
        for (std::size_t j = 0; j < m; ++j)
            if (pc.valid[j] && (w[j] < 2.0 - mv - 1e-12 || w[j] > 1.0 + 1e-12)) ++range_violations;
    }
    return {worst <= 1e-9 && range_violations == 0,
            fmt("max identity error=%.2g over 1000 draws; weight-range violations %d over 1000 panels", worst,
                range_violations)};
}

// Shared default-world state for criteria 4-8 --------------------------------

struct DefaultRun {
    simworld::SimWorld world;
    std::vector<baselines::TrainRecord> records;
    std::unique_ptr<baselines::GlobalBestRouter> global;
    std::unique_ptr<baselines::KnnRouter> knn;
    std::unique_ptr<baselines::MlpIndexRouter> mlp;
    std::optional<eval::EvalContext> ctx;
    double setup_seconds = 0.0;
};

// Filled in place: the eval context points at run.world, so a DefaultRun must not move.
void make_default_run(DefaultRun& run, std::uint64_t seed) {
    const auto t0 = Clock::now();
    simworld::WorldConfig wc;
    wc.seed = seed;
    run.world = simworld::generate_world(wc);
    const auto& train = run.world.split("train");
    run.records = baselines::train_records(run.world, train, simworld::outcome_table(run.world, train));
    run.global = std::make_unique<baselines::GlobalBestRouter>(run.records);
    run.knn = std::make_unique<baselines::KnnRouter>(run.records);
    baselines::MlpIndexConfig mc;
    mc.seed = seed;
    run.mlp = std::make_unique<baselines::MlpIndexRouter>(run.records, mc);
    run.ctx = eval::make_context(run.world, run.world.split("test"), 6, seed);
    run.setup_seconds = seconds_since(t0);
}

double report_cost(const std::vector<eval::MetricsReport>& reps, const std::string& name) {
    for (const auto& r : reps)
        if (r.router == name) return r.mean_cost;
    throw ContractViolation("missing report " + name);
}

const eval::MetricsReport& find_report(const std::vector<eval::MetricsReport>& reps, const std::string& name) {
    for (const auto& r : reps)
        if (r.router == name) return r;
    throw ContractViolation("missing report " + name);
}

// Criterion 4 ---------------------------------------------------------------

Outcome baseline_sanity(const DefaultRun& run, double setup_seconds) {
    const auto t0 = Clock::now();
    const auto& ctx = *run.ctx;
    std::vector<eval::MetricsReport> reps;
    const baselines::RandomRouter random;
    const baselines::OracleRouter oracle;
    for (const baselines::Router* r : std::initializer_list<const baselines::Router*>{
             &random, &oracle, run.global.get(), run.knn.get(), run.mlp.get()})
        reps.push_back(eval::evaluate(*r, ctx));
    const double c_oracle = report_cost(reps, "Oracle");

    bool oracle_below_routers = true;
    for (const auto& r : reps) oracle_below_routers &= c_oracle <= r.mean_cost;

    // Each tool's mean cost over the test queries it can serve.
    std::map<domain::ToolId, std::pair<double, double>> per_tool;
    for (std::size_t i = 0; i < ctx.queries.size(); ++i) {
        const auto& pop = run.world.populations[ctx.queries[i].query.task];
        for (std::size_t p = 0; p < pop.size(); ++p) {
            const auto& o = ctx.outcomes[i][p];
            if (!o.valid) continue;
            per_tool[pop[p]].first += o.cost;
            per_tool[pop[p]].second += 1.0;
        }
    }
    double best_tool = 2.0;
    for (const auto& [id, acc] : per_tool) best_tool = std::min(best_tool, acc.first / acc.second);

    double analytic = 0.0;
    for (std::size_t i = 0; i < ctx.queries.size(); ++i) {
        double sum = 0.0, n = 0.0;
        for (std::size_t p : ctx.panels[i]) {
            if (!ctx.outcomes[i][p].valid) continue;
            sum += ctx.outcomes[i][p].cost;
            n += 1.0;
        }
        analytic += sum / n;
    }
    analytic /= static_cast<double>(ctx.queries.size());
    const auto& rnd = find_report(reps, "Random");
    const double z = std::abs(rnd.mean_cost - analytic) / rnd.cost_stderr;
    const double secs = setup_seconds + seconds_since(t0);

    std::ostringstream costs;
    for (const auto& r : reps) costs << r.router << '=' << fmt("%.4f", r.mean_cost) << ' ';
    return {oracle_below_routers && c_oracle <= best_tool && z <= 2.0 && secs < 60.0 && ctx.queries.size() == 1000,
            costs.str() + fmt("best single tool=%.4f; Random vs analytic %.4f is %.2f SE; %zu queries; %.1fs", best_tool,
                              analytic, z, ctx.queries.size(), secs)};
}

// Criterion 5 ---------------------------------------------------------------

struct TrainedModel {
    anp::SelectorConfig config;
    trainer::FitResult fit;
    double seconds = 0.0;
};

TrainedModel train_default(const simworld::SimWorld& world, std::uint64_t seed) {
    const auto t0 = Clock::now();
    TrainedModel m;
    m.config = trainer::selector_config_for(world);
    trainer::TrainConfig tc;
    tc.seed = seed;
    m.fit = trainer::fit(tc, world, m.config, objective::ObjectiveConfig::uniform(world.tasks.size()));
    m.seconds = seconds_since(t0);
    return m;
}

Outcome end_to_end(const DefaultRun& run, const TrainedModel& model) {
    const auto t0 = Clock::now();
    const baselines::RandomRouter random;
    const baselines::OracleRouter oracle;
    const baselines::ToolSelectRouter ts(model.fit.params, model.config);
    std::vector<eval::MetricsReport> reps;
    for (const baselines::Router* r : std::initializer_list<const baselines::Router*>{
             &random, &oracle, run.global.get(), run.mlp.get(), &ts})
        reps.push_back(eval::evaluate(*r, *run.ctx));
    eval::attach_gap_closure(reps);
    const auto& t = find_report(reps, "ToolSelect");
    const double total = run.setup_seconds + model.seconds + seconds_since(t0);
    const double gc = t.gap_closure.value_or(-1.0);
    const double gb = report_cost(reps, "GlobalBest"), mlp = report_cost(reps, "MLPIndex");
    return {gc >= 0.5 && t.mean_cost < gb && t.mean_cost < mlp && total < 600.0,
            fmt("ToolSelect cost=%.4f gap_closure=%.3f; GlobalBest=%.4f MLPIndex=%.4f Random=%.4f Oracle=%.4f; "
                "%zu epochs (best %zu); total %.0fs",
                t.mean_cost, gc, gb, mlp, report_cost(reps, "Random"), report_cost(reps, "Oracle"),
                model.fit.history.size(), model.fit.best_epoch, total)};
}

// Criterion 6 ---------------------------------------------------------------

Outcome unseen_tools(const DefaultRun& run, const TrainedModel& model, std::uint64_t seed) {
    const auto fresh = simworld::with_fresh_tools(run.world, 0.25, seed);
    const auto ctx = eval::make_context(fresh, fresh.split("test"), 6, seed);
    const baselines::RandomRouter random;
    const baselines::OracleRouter oracle;
    const baselines::ToolSelectRouter ts(model.fit.params, model.config);
    std::vector<eval::MetricsReport> reps;
    for (const baselines::Router* r :
         std::initializer_list<const baselines::Router*>{&random, &oracle, run.mlp.get(), &ts})
        reps.push_back(eval::evaluate(*r, ctx));
    eval::attach_gap_closure(reps);
    const double ts_gc = find_report(reps, "ToolSelect").gap_closure.value_or(-1.0);
    const double mlp_gc = find_report(reps, "MLPIndex").gap_closure.value_or(-1.0);
    std::size_t fresh_slots = 0, slots = 0;
    for (std::size_t i = 0; i < ctx.queries.size(); ++i)
        for (std::size_t p : ctx.panels[i]) {
            ++slots;
            fresh_slots += fresh.populations[ctx.queries[i].query.task][p] >= run.world.tools.size();
        }
    return {ts_gc >= 0.3 && mlp_gc < ts_gc,
            fmt("ToolSelect gap_closure=%.3f, MLPIndex gap_closure=%.3f; %.1f%% of panel slots hold fresh tools", ts_gc,
                mlp_gc, 100.0 * static_cast<double>(fresh_slots) / static_cast<double>(slots))};
}

// Criterion 7 ---------------------------------------------------------------

std::vector<double> slot_scores(const anp::SelectorParams& params, const anp::SelectorConfig& config,
                                const eval::EvalContext& ctx, std::size_t limit) {
    std::vector<double> out;
    for (std::size_t i = 0; i < std::min(limit, ctx.queries.size()); ++i) {
        const auto& lq = ctx.queries[i];
        anp::RoutingExample ex{&lq.query, &ctx.world->tasks[lq.query.task], {}, {}};
        for (std::size_t p : ctx.panels[i]) {
            ex.panel.push_back(&ctx.world->tool(ctx.world->populations[lq.query.task][p]).tool);
            ex.predictions.push_back(&ctx.outcomes[i][p].prediction);
        }
        const auto d = anp::select(params, config, ex);
        for (std::size_t j = 0; j < d.scores.size(); ++j)
            if (d.mask[j]) out.push_back(d.scores[j]);
    }
    return out;
}

Outcome determinism(const DefaultRun& run, const TrainedModel& model) {
    TempDir dir;
    const auto cfg = dir.path / "run.cfg";
    dataset_io::write_atomic(cfg,
                             "world.train_size = 600\nworld.val_size = 100\nworld.test_size = 100\n"
                             "train.max_epochs = 3\ntrain.lr = 0.001\n");
    std::ostringstream sink;
    int codes = 0;
    for (const char* out : {"a", "b"}) {
        codes += cli::run({"train", "--config", cfg.string(), "--seed", "17", "--out", (dir.path / out).string()}, sink,
                          sink);
    }
    const auto log_a = dataset_io::read_file(dir.path / "a" / "train.log");
    const bool logs_equal = codes == 0 && log_a == dataset_io::read_file(dir.path / "b" / "train.log") &&
                            std::count(log_a.begin(), log_a.end(), '\n') == 3;

    const auto path = dir.path / "model.ckpt";
    checkpoint::save(model.fit.params, path);
    const auto loaded = checkpoint::load(path, model.config);
    const auto before = slot_scores(anp::quantized_f32(model.fit.params), model.config, *run.ctx, 200);
    const auto after = slot_scores(loaded, model.config, *run.ctx, 200);
    const bool scores_equal = before == after;

    dataset_io::export_world(run.world, dir.path / "w1");
    dataset_io::export_world(run.world, dir.path / "w2");
    bool export_stable = true;
    for (const char* f : {"world.jsonl", "tools.jsonl", "train.jsonl", "val.jsonl", "test.jsonl", "refpool.jsonl"})
        export_stable &= dataset_io::read_file(dir.path / "w1" / f) == dataset_io::read_file(dir.path / "w2" / f);

    return {logs_equal && scores_equal && export_stable,
            fmt("epoch logs identical: %s; float32 scores after checkpoint round-trip identical over %zu slots: %s; "
                "dataset export byte-stable: %s",
                logs_equal ? "yes" : "no", before.size(), scores_equal ? "yes" : "no", export_stable ? "yes" : "no")};
}

// Criterion 8 ---------------------------------------------------------------

struct CoverageScore {
    double bce = 0.0;
    double constant = 0.0;
    std::size_t pairs = 0;
};

CoverageScore coverage_on_test(const simworld::SimWorld& world, const eval::EvalContext& ctx,
                               const anp::SelectorParams& params, const anp::SelectorConfig& config) {
    std::vector<std::pair<double, double>> rows;  // (s, c)
    for (std::size_t i = 0; i < ctx.queries.size(); ++i) {
        const auto& lq = ctx.queries[i];
        const auto& task = world.tasks[lq.query.task];
        const auto u = anp::encode_query(params, config, lq.query);
        for (std::size_t p : ctx.panels[i]) {
            const auto& o = ctx.outcomes[i][p];
            if (!o.valid) continue;
            const auto& tool = world.tool(world.populations[lq.query.task][p]).tool;
            const auto psi = anp::cross_attend(params, config, task, tool.references.at(task.id), u);
            rows.emplace_back(anp::coverage(params, config, u, psi), o.cost);
        }
    }
    CoverageScore out;
    out.pairs = rows.size();
    double success = 0.0;
    for (const auto& [s, c] : rows) {
        out.bce += objective::coverage_loss(s, c);
        success += 1.0 - c;
    }
    out.bce /= static_cast<double>(rows.size());
    const double rate = success / static_cast<double>(rows.size());
    out.constant = -(rate * std::log(rate) + (1.0 - rate) * std::log(1.0 - rate));
    return out;
}

Outcome coverage_utility(const std::vector<std::pair<std::uint64_t, CoverageScore>>& seeds) {
    bool pass = seeds.size() == 3;
    std::ostringstream s;
    for (const auto& [seed, c] : seeds) {
        pass &= c.bce < c.constant;
        s << fmt("seed %llu: BCE=%.4f vs constant %.4f over %zu pairs; ", static_cast<unsigned long long>(seed), c.bce,
                 c.constant, c.pairs);
    }
    return {pass, s.str()};
}

// Criterion 9 ---------------------------------------------------------------

Outcome early_stopping() {
    // Every tool is equally competent everywhere and fully correlated, so all
    // slots of a panel cost the same and validation cost cannot move.
    simworld::WorldConfig wc;
    wc.seed = 901;
    wc.train_size = 160;
    wc.val_size = 60;
    wc.test_size = 10;
    wc.ref_pool_size = 32;
    wc.ref_size = 4;
    wc.tools_per_task = 4;
    wc.support_prob = 1.0;
    wc.coarsen_prob = 0.0;
    wc.outcome_correlation = 1.0;
    auto world = simworld::generate_world(wc);
    for (auto& st : world.tools) st.sharpness = 1e-9;

    anp::SelectorConfig base;
    base.hidden = 32;
    const auto sel = trainer::selector_config_for(world, base);
    const auto obj = objective::ObjectiveConfig::uniform(world.tasks.size());
    trainer::TrainConfig tc;
    tc.seed = 902;
    tc.patience = 4;
    tc.max_epochs = 40;
    tc.lr = 1e-3;
    const auto result = trainer::fit(tc, world, sel, obj);

    // Replaying up to best_epoch must give the returned snapshot.
    trainer::TrainConfig replay = tc;
    replay.max_epochs = result.best_epoch;
    const auto prefix = trainer::fit(replay, world, sel, obj);
    const bool snapshot = anp::params_digest(prefix.params) == anp::params_digest(result.params) &&
                          prefix.best_epoch == result.best_epoch;
    const std::size_t epochs = result.history.size();
    return {epochs <= result.best_epoch + tc.patience + 1 && epochs < tc.max_epochs && snapshot,
            fmt("stopped after %zu of %zu epochs, best_epoch=%zu, patience=%zu, val_cost %.4f -> %.4f; "
                "best snapshot reproduced: %s",
                epochs, tc.max_epochs, result.best_epoch, tc.patience, result.history.front().val_cost,
                result.history.back().val_cost, snapshot ? "yes" : "no")};
}

} // namespace

int main(int argc, char** argv) {
    // Optional arguments select a subset of criteria; the default runs all nine.
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    auto wanted = [&](int id) { return selected.empty() || selected.contains(id); };
    auto criterion = [&](int id, const std::string& title, const std::function<Outcome()>& body) {
        if (wanted(id)) run_criterion(id, title, body);
    };

    const auto t0 = Clock::now();
    criterion(1, "gradient correctness of the full objective", gradient_correctness);
    criterion(2, "masked softmax suite", masked_softmax_suite);
    criterion(3, "comp-sum two-slot identity and weight range", compsum_identity);

    constexpr std::uint64_t kSeed = 1;
    std::optional<DefaultRun> run;
    std::optional<TrainedModel> model;
    auto ensure_run = [&]() -> DefaultRun& {
        if (!run) make_default_run(run.emplace(), kSeed);
        return *run;
    };
    auto ensure_model = [&]() -> TrainedModel& {
        if (!model) model = train_default(ensure_run().world, kSeed);
        return *model;
    };
    criterion(4, "baseline sanity on the default world", [&] {
        auto& r = ensure_run();
        return baseline_sanity(r, r.setup_seconds);
    });
    criterion(5, "end-to-end learning closes the Random-Oracle gap", [&] { return end_to_end(ensure_run(), ensure_model()); });
    criterion(6, "unseen-tool generalization with 25% fresh tools",
              [&] { return unseen_tools(ensure_run(), ensure_model(), kSeed); });
    criterion(7, "determinism and persistence", [&] { return determinism(ensure_run(), ensure_model()); });
    criterion(8, "coverage head beats the best constant predictor", [&] {
        std::vector<std::pair<std::uint64_t, CoverageScore>> seeds;
        seeds.emplace_back(kSeed, coverage_on_test(ensure_run().world, *ensure_run().ctx, ensure_model().fit.params,
                                                   ensure_model().config));
        run.reset();
        model.reset();
        for (std::uint64_t seed : {2u, 3u}) {
            simworld::WorldConfig wc;
            wc.seed = seed;
            const auto world = simworld::generate_world(wc);
            const auto m = train_default(world, seed);
            const auto ctx = eval::make_context(world, world.split("test"), 6, seed);
            seeds.emplace_back(seed, coverage_on_test(world, ctx, m.fit.params, m.config));
        }
        return coverage_utility(seeds);
    });
    criterion(9, "early stopping on a plateau world", early_stopping);

    std::printf("acceptance: %d failed, %.0fs\n", failures, seconds_since(t0));
    return failures == 0 ? 0 : 1;
}
