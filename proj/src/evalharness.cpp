#include "toolselect/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "toolselect/errors.hpp"
#include "toolselect/trainer.hpp"

namespace toolselect::eval {

using namespace domain;

namespace {

enum : std::uint64_t { kTagPanel = 0x9A7E, kTagRoute = 0x2A9D };

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fixed(double v, int prec = 4) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

/// Pairwise summation; the fixed split keeps results independent of thread count.
double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }
std::string lpad(const std::string& s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }

} // namespace

std::uint64_t EvalContext::panel_digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    for (std::size_t i = 0; i < queries.size(); ++i) {
        feed(queries[i].query.uid);
        const auto& pop = world->populations.at(queries[i].query.task);
        for (std::size_t pos : panels[i]) feed(pop[pos]);
    }
    return h;
}

EvalContext make_context(const simworld::SimWorld& world, std::span<const simworld::LabeledQuery> queries,
                         std::size_t panel_size, std::uint64_t seed) {
    if (queries.empty()) throw ContractViolation("evaluate: empty split");
    EvalContext ctx;
    ctx.world = &world;
    ctx.queries.assign(queries.begin(), queries.end());
    std::stable_sort(ctx.queries.begin(), ctx.queries.end(),
                     [](const auto& a, const auto& b) { return a.query.uid < b.query.uid; });
    ctx.outcomes = simworld::outcome_table(world, ctx.queries);
    ctx.panel_size = panel_size;
    ctx.seed = seed;
    std::vector<std::vector<const Tool*>> populations;
    for (const auto& task : world.tasks) populations.push_back(world.population(task.id));
    for (const auto& lq : ctx.queries) {
        Rng rng(seed, {kTagPanel, lq.query.uid});
        ctx.panels.push_back(
            trainer::sample_panel_positions(populations.at(lq.query.task), lq.query, panel_size, rng));
    }
    return ctx;
}

std::vector<std::string> metric_names(TaskFamily family) {
    switch (family) {
    case TaskFamily::Classification: return {"accuracy", "precision", "recall", "f1"};
    case TaskFamily::Grounding: return {"iou"};
    case TaskFamily::ReportGeneration: return {"findings_f1"};
    case TaskFamily::MultipleChoice: return {"accuracy"};
    }
    return {};
}

ConfusionSummary summarize_confusion(const std::vector<std::vector<std::size_t>>& confusion) {
    ConfusionSummary s;
    const std::size_t n = confusion.size();
    if (n == 0) return s;
    std::size_t total = 0, trace = 0;
    std::vector<std::size_t> row(n, 0), col(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (confusion[i].size() != n) throw DimensionError("confusion matrix must be square");
        for (std::size_t j = 0; j < n; ++j) {
            row[i] += confusion[i][j];
            col[j] += confusion[i][j];
            total += confusion[i][j];
        }
        trace += confusion[i][i];
    }
    for (std::size_t c = 0; c < n; ++c) {
        const double tp = static_cast<double>(confusion[c][c]);
        const double p = col[c] > 0 ? tp / static_cast<double>(col[c]) : 0.0;
        const double r = row[c] > 0 ? tp / static_cast<double>(row[c]) : 0.0;
        s.macro_precision += p;
        s.macro_recall += r;
        s.macro_f1 += p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    s.macro_precision /= static_cast<double>(n);
    s.macro_recall /= static_cast<double>(n);
    s.macro_f1 /= static_cast<double>(n);
    s.accuracy = total > 0 ? static_cast<double>(trace) / static_cast<double>(total) : 0.0;
    return s;
}

MetricsReport evaluate(const baselines::Router& router, const EvalContext& ctx) {
    const auto& world = *ctx.world;
    const std::size_t n = ctx.queries.size();

    std::vector<std::vector<double>> slot_costs(n);
    std::vector<baselines::RouteRequest> requests(n);
    std::vector<Rng> rngs;
    rngs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& lq = ctx.queries[i];
        const auto& pop = world.populations.at(lq.query.task);
        auto& req = requests[i];
        req.query = &lq.query;
        req.task = &world.tasks.at(lq.query.task);
        for (std::size_t pos : ctx.panels[i]) {
            const auto& o = ctx.outcomes[i][pos];
            req.panel.push_back(&world.tool(pop[pos]).tool);
            req.predictions.push_back(&o.prediction);
            slot_costs[i].push_back(o.valid ? o.cost : 1.0);
        }
        req.costs = &slot_costs[i];
        rngs.emplace_back(ctx.seed, std::initializer_list<std::uint64_t>{kTagRoute, lq.query.uid});
    }
    const auto selections = router.route_batch(requests, rngs);

    MetricsReport rep;
    rep.router = router.name();
    rep.seed = ctx.seed;
    rep.panel_size = ctx.panel_size;
    rep.query_count = n;
    rep.panel_digest = ctx.panel_digest();
    rep.selections = selections;

    struct Acc {
        std::size_t count = 0;
        std::vector<double> costs;
        std::vector<double> metric;
        std::vector<std::vector<std::size_t>> confusion;
    };
    std::vector<Acc> acc(world.tasks.size());
    for (const auto& t : world.tasks)
        if (t.family == TaskFamily::Classification)
            acc[t.id].confusion.assign(t.space.size(), std::vector<std::size_t>(t.space.size(), 0));

    for (std::size_t i = 0; i < n; ++i) {
        const auto& lq = ctx.queries[i];
        const std::size_t j = selections[i];
        const auto& pop = world.populations.at(lq.query.task);
        if (j >= ctx.panels[i].size()) throw ContractViolation(router.name() + " selected a slot outside the panel");
        const auto& o = ctx.outcomes[i][ctx.panels[i][j]];
        if (!o.valid) {
            throw ContractViolation(router.name() + " selected masked slot " + std::to_string(j) + " for query uid " +
                                    std::to_string(lq.query.uid));
        }
        rep.query_costs.push_back(o.cost);
        rep.histogram[pop[ctx.panels[i][j]]] += 1;

        Acc& a = acc[lq.query.task];
        a.count += 1;
        a.costs.push_back(o.cost);
        switch (world.tasks[lq.query.task].family) {
        case TaskFamily::Classification:
            a.confusion[std::get<ClassLabel>(lq.gt).index][argmax_lowest(o.prediction.probs())] += 1;
            break;
        case TaskFamily::MultipleChoice:
            a.metric.push_back(argmax_lowest(o.prediction.probs()) == std::get<OptionChoice>(lq.gt).index ? 1.0 : 0.0);
            break;
        case TaskFamily::Grounding: a.metric.push_back(iou(std::get<Box>(o.prediction.payload), std::get<Box>(lq.gt))); break;
        case TaskFamily::ReportGeneration:
            a.metric.push_back(findings_f1(std::get<FindingSet>(o.prediction.payload), std::get<FindingSet>(lq.gt)));
            break;
        }
    }

    rep.mean_cost = pairwise_sum(rep.query_costs) / static_cast<double>(n);
    std::vector<double> sq;
    sq.reserve(n);
    for (double c : rep.query_costs) sq.push_back((c - rep.mean_cost) * (c - rep.mean_cost));
    const double ss = pairwise_sum(sq);
    rep.cost_stderr = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;

    for (const auto& t : world.tasks) {
        const Acc& a = acc[t.id];
        if (a.count == 0) continue;
        TaskMetrics tm;
        tm.task = t.id;
        tm.family = t.family;
        tm.count = a.count;
        tm.mean_cost = pairwise_sum(a.costs) / static_cast<double>(a.count);
        const auto names = metric_names(t.family);
        if (t.family == TaskFamily::Classification) {
            const auto s = summarize_confusion(a.confusion);
            const double values[] = {s.accuracy, s.macro_precision, s.macro_recall, s.macro_f1};
            for (std::size_t k = 0; k < names.size(); ++k) tm.metrics.emplace_back(names[k], values[k]);
        } else {
            tm.metrics.emplace_back(names[0], pairwise_sum(a.metric) / static_cast<double>(a.count));
        }
        rep.tasks.push_back(std::move(tm));
    }
    return rep;
}

std::optional<double> gap_closure(double c_method, double c_random, double c_oracle) {
    if (!(c_random > c_oracle)) return std::nullopt;
    return (c_random - c_method) / (c_random - c_oracle);
}

void attach_gap_closure(std::vector<MetricsReport>& reports) {
    const MetricsReport* random = nullptr;
    const MetricsReport* oracle = nullptr;
    for (const auto& r : reports) {
        if (r.router == "Random") random = &r;
        if (r.router == "Oracle") oracle = &r;
    }
    if (random == nullptr || oracle == nullptr) return;
    const double cr = random->mean_cost, co = oracle->mean_cost;
    for (auto& r : reports) r.gap_closure = gap_closure(r.mean_cost, cr, co);
}

std::string render_report(std::span<const MetricsReport> reports) {
    std::ostringstream out;
    if (reports.empty()) return "";
    constexpr std::size_t kName = 12, kCol = 12;

    out << pad("router", kName) << lpad("cost", kCol) << lpad("stderr", kCol) << lpad("gap_closure", kCol)
        << lpad("queries", kCol) << '\n';
    for (const auto& r : reports) {
        out << pad(r.router, kName) << lpad(fixed(r.mean_cost), kCol) << lpad(fixed(r.cost_stderr), kCol)
            << lpad(r.gap_closure ? fixed(*r.gap_closure) : "-", kCol) << lpad(std::to_string(r.query_count), kCol)
            << '\n';
    }

    for (const auto& first_task : reports.front().tasks) {
        const auto names = metric_names(first_task.family);
        out << "\ntask " << first_task.task << " (" << family_name(first_task.family) << ")\n";
        out << pad("router", kName) << lpad("cost", kCol);
        for (const auto& name : names) out << lpad(name, kCol);
        out << '\n';
        for (const auto& r : reports) {
            auto it = std::find_if(r.tasks.begin(), r.tasks.end(),
                                   [&](const TaskMetrics& t) { return t.task == first_task.task; });
            if (it == r.tasks.end()) continue;
            out << pad(r.router, kName) << lpad(fixed(it->mean_cost), kCol);
            for (const auto& m : it->metrics) out << lpad(fixed(m.second), kCol);
            out << '\n';
        }
    }

    out << '\n';
    for (const auto& r : reports) {
        for (const auto& t : r.tasks) {
            out << "record router=" << r.router << " task=" << t.task << " family=" << family_name(t.family)
                << " n=" << t.count << " cost=" << fmt(t.mean_cost);
            for (const auto& m : t.metrics) out << ' ' << m.first << '=' << fmt(m.second);
            out << '\n';
        }
        out << "record router=" << r.router << " task=all n=" << r.query_count << " cost=" << fmt(r.mean_cost)
            << " stderr=" << fmt(r.cost_stderr) << " gap_closure=" << (r.gap_closure ? fmt(*r.gap_closure) : "absent")
            << " panel_size=" << r.panel_size << " seed=" << r.seed << " panel_digest=" << r.panel_digest
            << " histogram=";
        bool first = true;
        for (const auto& [tool, count] : r.histogram) {
            out << (first ? "" : ",") << tool << ':' << count;
            first = false;
        }
        out << '\n';
    }
    return out.str();
}

std::map<std::string, std::string> parse_record(const std::string& line) {
    std::istringstream in(line);
    std::string word;
    in >> word;
    if (word != "record") throw ParseError("not a record line: '" + line + "'");
    std::map<std::string, std::string> out;
    while (in >> word) {
        const auto eq = word.find('=');
        if (eq == std::string::npos) throw ParseError("record field without '=': '" + word + "'");
        out[word.substr(0, eq)] = word.substr(eq + 1);
    }
    return out;
}

} // namespace toolselect::eval
