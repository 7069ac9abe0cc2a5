#include "toolselect/cli.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "toolselect/baselines.hpp"
#include "toolselect/checkpoint.hpp"
#include "toolselect/dataset_io.hpp"
#include "toolselect/errors.hpp"
#include "toolselect/evalharness.hpp"
#include "toolselect/run_config.hpp"
#include "toolselect/simworld.hpp"
#include "toolselect/trainer.hpp"

namespace toolselect::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string data_dir;
    std::string checkpoint_path;
    std::string routers;
    std::string split;
    std::optional<double> fresh_tools;
    std::string input_path;
    std::string panel;
};

RunConfig resolve_config(const Options& o) {
    RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
    if (o.seed) cfg.set_seed(*o.seed);
    return cfg;
}

simworld::SimWorld obtain_world(const Options& o, const RunConfig& cfg) {
    if (!o.data_dir.empty()) return dataset_io::import_world(o.data_dir);
    return simworld::generate_world(cfg.world);
}

std::string hex(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << v;
    return s.str();
}

void require_out(const Options& o, const char* command) {
    if (o.out_dir.empty()) throw CLI::RequiredError(std::string(command) + " needs --out");
}

int cmd_simulate(const Options& o, std::ostream& out) {
    const RunConfig cfg = resolve_config(o);
    const auto world = simworld::generate_world(cfg.world);
    dataset_io::export_world(world, o.out_dir);
    out << "world_digest=" << hex(simworld::world_digest(world)) << " tasks=" << world.tasks.size()
        << " tools=" << world.tools.size() << '\n';
    return kOk;
}

int cmd_train(const Options& o, std::ostream& out) {
    const RunConfig cfg = resolve_config(o);
    const auto world = obtain_world(o, cfg);
    const auto selector = trainer::selector_config_for(world, cfg.selector);
    const fs::path dir = o.out_dir;
    fs::create_directories(dir);
    std::string log;
    const auto result = trainer::fit(cfg.train, world, selector, cfg.objective_for(world.tasks.size()),
                                     [&](const trainer::EpochRecord& r) {
                                         const auto line = trainer::format_epoch(r);
                                         out << line << '\n' << std::flush;
                                         log += line + '\n';
                                     });
    dataset_io::write_atomic(dir / "train.log", log);
    checkpoint::save(result.params, dir / "selector.ckpt");
    dataset_io::write_atomic(dir / "run.cfg", to_text(cfg));
    out << "best_epoch=" << result.best_epoch << " params_digest=" << hex(anp::params_digest(result.params)) << '\n';
    return kOk;
}

std::vector<std::string> split_names(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

int cmd_eval(const Options& o, std::ostream& out) {
    RunConfig cfg = resolve_config(o);
    if (!o.routers.empty()) cfg.eval.routers = split_names(o.routers);
    if (!o.split.empty()) cfg.eval.split = o.split;
    if (o.fresh_tools) cfg.eval.fresh_tools = *o.fresh_tools;
    for (const auto& name : cfg.eval.routers)
        if (!baselines::is_router_name(name)) throw CLI::ValidationError("--routers", "unknown router '" + name + "'");

    const auto world = obtain_world(o, cfg);
    const auto selector = trainer::selector_config_for(world, cfg.selector);
    const auto& train = world.split("train");
    const auto train_outcomes = simworld::outcome_table(world, train);
    const auto records = baselines::train_records(world, train, train_outcomes);

    std::vector<std::unique_ptr<baselines::Router>> routers;
    for (const auto& name : cfg.eval.routers) {
        if (name == "Random") routers.push_back(std::make_unique<baselines::RandomRouter>());
        else if (name == "Oracle") routers.push_back(std::make_unique<baselines::OracleRouter>());
        else if (name == "GlobalBest") routers.push_back(std::make_unique<baselines::GlobalBestRouter>(records));
        else if (name == "KNN") routers.push_back(std::make_unique<baselines::KnnRouter>(records));
        else if (name == "MLPIndex") {
            baselines::MlpIndexConfig mc;
            mc.seed = cfg.eval.seed;
            routers.push_back(std::make_unique<baselines::MlpIndexRouter>(records, mc));
        } else {
            if (o.checkpoint_path.empty()) throw CLI::RequiredError("router ToolSelect needs --checkpoint");
            routers.push_back(
                std::make_unique<baselines::ToolSelectRouter>(checkpoint::load(o.checkpoint_path, selector), selector));
        }
    }

    const simworld::SimWorld eval_world =
        cfg.eval.fresh_tools > 0.0 ? simworld::with_fresh_tools(world, cfg.eval.fresh_tools, cfg.eval.seed) : world;
    const auto ctx = eval::make_context(eval_world, eval_world.split(cfg.eval.split), cfg.train.panel_size, cfg.eval.seed);
    std::vector<eval::MetricsReport> reports;
    for (const auto& r : routers) reports.push_back(eval::evaluate(*r, ctx));
    eval::attach_gap_closure(reports);
    const std::string text = eval::render_report(reports);
    if (!o.out_dir.empty()) {
        fs::create_directories(o.out_dir);
        dataset_io::write_atomic(fs::path(o.out_dir) / "report.txt", text);
    }
    out << text;
    return kOk;
}

int cmd_route(const Options& o, std::ostream& out) {
    const RunConfig cfg = resolve_config(o);
    const auto world = obtain_world(o, cfg);
    const auto selector = trainer::selector_config_for(world, cfg.selector);
    const auto params = checkpoint::load(o.checkpoint_path, selector);

    std::istringstream lines(dataset_io::read_file(o.input_path));
    std::string line;
    while (std::getline(lines, line) && line.empty()) {
    }
    if (line.empty()) throw ParseError(o.input_path + ": no query record");
    const auto lq = dataset_io::parse_query_record(line);
    if (lq.query.task >= world.tasks.size()) throw UnknownTask("query task " + std::to_string(lq.query.task));

    std::vector<domain::ToolId> ids;
    if (!o.panel.empty()) {
        for (const auto& item : split_names(o.panel)) {
            const auto id = static_cast<domain::ToolId>(std::stoul(item));
            if (id >= world.tools.size()) throw ContractViolation("unknown tool id " + item);
            ids.push_back(id);
        }
        if (ids.size() < 2) throw ContractViolation("--panel needs at least two tools");
    } else {
        const auto population = world.population(lq.query.task);
        Rng rng(cfg.eval.seed, {lq.query.uid});
        for (std::size_t pos : trainer::sample_panel_positions(population, lq.query, cfg.train.panel_size, rng)) {
            ids.push_back(world.populations[lq.query.task][pos]);
        }
    }

    std::vector<domain::AlignedPrediction> predictions;
    for (auto id : ids) predictions.push_back(simworld::frozen_prediction(world, world.tool(id), lq));
    anp::RoutingExample ex{&lq.query, &world.tasks[lq.query.task], {}, {}};
    for (std::size_t j = 0; j < ids.size(); ++j) {
        ex.panel.push_back(&world.tool(ids[j]).tool);
        ex.predictions.push_back(&predictions[j]);
    }
    const auto dist = anp::select(params, selector, ex);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", dist.probs[dist.selected]);
    out << "tool=" << ids[dist.selected] << " slot=" << dist.selected << " pi=" << buf << '\n';
    out << "panel=";
    for (std::size_t j = 0; j < ids.size(); ++j) {
        std::snprintf(buf, sizeof buf, "%.6f", dist.probs[j]);
        out << (j ? "," : "") << ids[j] << ':' << buf;
    }
    out << '\n';
    return kOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Query-conditioned tool selection: simulate worlds, train and evaluate routers", "toolselect"};
    app.fallthrough();
    app.require_subcommand(1);
    Options o;
    std::uint64_t seed = 0;
    double fresh = 0.0;
    app.add_option("--config", o.config_path, "run configuration file (key = value)");
    auto* seed_opt = app.add_option("--seed", seed, "seed for world, training and evaluation");
    app.add_option("--out", o.out_dir, "output directory");

    auto* simulate = app.add_subcommand("simulate", "generate a world and export its dataset files");
    auto* train = app.add_subcommand("train", "fit the selector; writes selector.ckpt, train.log, run.cfg");
    auto* evaluate = app.add_subcommand("eval", "evaluate routers on paired panels; writes report.txt");
    auto* route = app.add_subcommand("route", "route one query record with a trained selector");
    for (auto* sub : {train, evaluate, route}) sub->add_option("--data", o.data_dir, "world directory from simulate");
    evaluate->add_option("--checkpoint", o.checkpoint_path, "selector checkpoint");
    evaluate->add_option("--routers", o.routers, "comma-separated router names");
    evaluate->add_option("--split", o.split, "split to evaluate (train, val, test)");
    auto* fresh_opt = evaluate->add_option("--fresh-tools", fresh, "fraction of each population replaced by new tools");
    route->add_option("--checkpoint", o.checkpoint_path, "selector checkpoint")->required();
    route->add_option("--input", o.input_path, "file holding one query record")->required();
    route->add_option("--panel", o.panel, "comma-separated tool ids");

    std::vector<const char*> argv{"toolselect"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
        if (seed_opt->count() > 0) o.seed = seed;
        if (fresh_opt->count() > 0) o.fresh_tools = fresh;
        if (simulate->parsed()) {
            require_out(o, "simulate");
            return cmd_simulate(o, out);
        }
        if (train->parsed()) {
            require_out(o, "train");
            return cmd_train(o, out);
        }
        if (evaluate->parsed()) return cmd_eval(o, out);
        return cmd_route(o, out);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n' << app.help();
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntime;
    }
}

} // namespace toolselect::cli
