#include "toolselect/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include "toolselect/dataset_io.hpp"
#include "toolselect/errors.hpp"

namespace toolselect {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ParseError("'" + s + "' is not a number");
    }
    if (used != s.size()) throw ParseError("'" + s + "' is not a number");
    return v;
}

std::uint64_t to_u64(const std::string& s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError("'" + s + "' is not a non-negative integer");
    return v;
}

std::string show(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
    return out;
}

struct Field {
    const char* key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
Field size_field(const char* key, T RunConfig::*group, std::size_t T::*member) {
    return {key, [=](const RunConfig& c) { return std::to_string(c.*group.*member); },
            [=](RunConfig& c, const std::string& v) { c.*group.*member = static_cast<std::size_t>(to_u64(v)); }};
}

template <typename T>
Field double_field(const char* key, T RunConfig::*group, double T::*member) {
    return {key, [=](const RunConfig& c) { return show(c.*group.*member); },
            [=](RunConfig& c, const std::string& v) { c.*group.*member = to_double(v); }};
}

template <typename T>
Field u64_field(const char* key, T RunConfig::*group, std::uint64_t T::*member) {
    return {key, [=](const RunConfig& c) { return std::to_string(c.*group.*member); },
            [=](RunConfig& c, const std::string& v) { c.*group.*member = to_u64(v); }};
}

const std::vector<Field>& fields() {
    using simworld::WorldConfig;
    using anp::SelectorConfig;
    using trainer::TrainConfig;
    using objective::ObjectiveConfig;
    static const std::vector<Field> kFields = {
        {"world.families",
         [](const RunConfig& c) {
             std::vector<std::string> names;
             for (auto f : c.world.families) names.emplace_back(domain::family_name(f));
             return join(names);
         },
         [](RunConfig& c, const std::string& v) {
             c.world.families.clear();
             for (const auto& name : split_list(v)) c.world.families.push_back(domain::parse_family(name));
         }},
        size_field("world.tasks_per_family", &RunConfig::world, &WorldConfig::tasks_per_family),
        size_field("world.d_x", &RunConfig::world, &WorldConfig::d_x),
        size_field("world.d_q", &RunConfig::world, &WorldConfig::d_q),
        size_field("world.tools_per_task", &RunConfig::world, &WorldConfig::tools_per_task),
        size_field("world.labels_per_task", &RunConfig::world, &WorldConfig::labels_per_task),
        size_field("world.mcq_options", &RunConfig::world, &WorldConfig::mcq_options),
        size_field("world.report_vocab", &RunConfig::world, &WorldConfig::report_vocab),
        double_field("world.p_max", &RunConfig::world, &WorldConfig::p_max),
        double_field("world.p_floor", &RunConfig::world, &WorldConfig::p_floor),
        double_field("world.sharpness", &RunConfig::world, &WorldConfig::sharpness),
        double_field("world.support_prob", &RunConfig::world, &WorldConfig::support_prob),
        double_field("world.coarsen_prob", &RunConfig::world, &WorldConfig::coarsen_prob),
        double_field("world.anchor_jitter", &RunConfig::world, &WorldConfig::anchor_jitter),
        double_field("world.feature_noise", &RunConfig::world, &WorldConfig::feature_noise),
        double_field("world.hint_noise", &RunConfig::world, &WorldConfig::hint_noise),
        double_field("world.outcome_correlation", &RunConfig::world, &WorldConfig::outcome_correlation),
        size_field("world.train_size", &RunConfig::world, &WorldConfig::train_size),
        size_field("world.val_size", &RunConfig::world, &WorldConfig::val_size),
        size_field("world.test_size", &RunConfig::world, &WorldConfig::test_size),
        size_field("world.ref_pool_size", &RunConfig::world, &WorldConfig::ref_pool_size),
        size_field("world.ref_size", &RunConfig::world, &WorldConfig::ref_size),
        u64_field("world.seed", &RunConfig::world, &WorldConfig::seed),
        size_field("selector.d_xp", &RunConfig::selector, &SelectorConfig::d_xp),
        size_field("selector.d_qp", &RunConfig::selector, &SelectorConfig::d_qp),
        size_field("selector.d_u", &RunConfig::selector, &SelectorConfig::d_u),
        size_field("selector.d", &RunConfig::selector, &SelectorConfig::d),
        size_field("selector.d_k", &RunConfig::selector, &SelectorConfig::d_k),
        size_field("selector.d_v", &RunConfig::selector, &SelectorConfig::d_v),
        size_field("selector.hidden", &RunConfig::selector, &SelectorConfig::hidden),
        double_field("selector.dropout", &RunConfig::selector, &SelectorConfig::dropout),
        size_field("selector.label_embed_dim", &RunConfig::selector, &SelectorConfig::label_embed_dim),
        size_field("selector.rho_dim", &RunConfig::selector, &SelectorConfig::rho_dim),
        double_field("train.lr", &RunConfig::train, &TrainConfig::lr),
        double_field("train.weight_decay", &RunConfig::train, &TrainConfig::weight_decay),
        size_field("train.max_epochs", &RunConfig::train, &TrainConfig::max_epochs),
        size_field("train.patience", &RunConfig::train, &TrainConfig::patience),
        double_field("train.min_delta", &RunConfig::train, &TrainConfig::min_delta),
        size_field("train.batch_size", &RunConfig::train, &TrainConfig::batch_size),
        size_field("train.panel_size", &RunConfig::train, &TrainConfig::panel_size),
        double_field("train.beta1", &RunConfig::train, &TrainConfig::beta1),
        double_field("train.beta2", &RunConfig::train, &TrainConfig::beta2),
        double_field("train.adam_eps", &RunConfig::train, &TrainConfig::adam_eps),
        u64_field("train.seed", &RunConfig::train, &TrainConfig::seed),
        {"objective.task_weights",
         [](const RunConfig& c) {
             if (c.task_weights.empty()) return std::string("uniform");
             std::vector<std::string> items;
             for (double w : c.task_weights) items.push_back(show(w));
             return join(items);
         },
         [](RunConfig& c, const std::string& v) {
             c.task_weights.clear();
             if (v == "uniform") return;
             for (const auto& item : split_list(v)) c.task_weights.push_back(to_double(item));
         }},
        double_field("objective.entropy_weight", &RunConfig::objective, &ObjectiveConfig::entropy_weight),
        double_field("objective.score_l2", &RunConfig::objective, &ObjectiveConfig::score_l2),
        double_field("objective.coverage_weight", &RunConfig::objective, &ObjectiveConfig::coverage_weight),
        double_field("objective.eps", &RunConfig::objective, &ObjectiveConfig::eps),
        {"eval.routers", [](const RunConfig& c) { return join(c.eval.routers); },
         [](RunConfig& c, const std::string& v) { c.eval.routers = split_list(v); }},
        {"eval.split", [](const RunConfig& c) { return c.eval.split; },
         [](RunConfig& c, const std::string& v) { c.eval.split = v; }},
        double_field("eval.fresh_tools", &RunConfig::eval, &EvalConfig::fresh_tools),
        u64_field("eval.seed", &RunConfig::eval, &EvalConfig::seed),
    };
    return kFields;
}

} // namespace

void RunConfig::set_seed(std::uint64_t seed) {
    world.seed = seed;
    train.seed = seed;
    eval.seed = seed;
}

objective::ObjectiveConfig RunConfig::objective_for(std::size_t task_count) const {
    objective::ObjectiveConfig out = objective;
    if (task_weights.empty()) {
        out.task_weights = objective::ObjectiveConfig::uniform(task_count).task_weights;
    } else {
        if (task_weights.size() != task_count) {
            throw ContractViolation("objective.task_weights lists " + std::to_string(task_weights.size()) +
                                    " weights for " + std::to_string(task_count) + " tasks");
        }
        out.task_weights = task_weights;
    }
    out.validate();
    return out;
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig config;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = "config line " + std::to_string(number) + ": ";
        if (eq == std::string::npos) throw ParseError(where + "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const Field* field = nullptr;
        for (const auto& f : fields())
            if (key == f.key) field = &f;
        if (field == nullptr) throw ParseError(where + "unknown key '" + key + "'");
        if (!seen.insert(key).second) throw ParseError(where + "repeated key '" + key + "'");
        try {
            field->set(config, value);
        } catch (const Error& e) {
            throw ParseError(where + key + ": " + e.what());
        }
    }
    return config;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(dataset_io::read_file(path)); }

std::string to_text(const RunConfig& config) {
    std::string out;
    for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(config) + '\n';
    return out;
}

std::vector<std::string> run_config_keys() {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.emplace_back(f.key);
    return out;
}

} // namespace toolselect
