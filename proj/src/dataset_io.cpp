#include "toolselect/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "toolselect/errors.hpp"

namespace toolselect::dataset_io {

using json = nlohmann::json;
using namespace domain;
using simworld::LabeledQuery;
using simworld::SimWorld;

namespace {

const char* const kSplits[] = {"train", "val", "test"};

json box_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

Box box_from(const json& j) {
    if (!j.is_array() || j.size() != 4) throw ParseError("box must be a 4-element array");
    return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json pairs_json(const FindingSet& s) {
    json out = json::array();
    for (const auto& p : s) out.push_back(json::array({p.finding, p.location}));
    return out;
}

FindingSet pairs_from(const json& j) {
    FindingSet s;
    for (const auto& p : j) {
        if (!p.is_array() || p.size() != 2) throw ParseError("finding pair must be a 2-element array");
        s.insert(FindingPair{p[0].get<std::string>(), p[1].get<std::string>()});
    }
    return s;
}

json truth_json(const GroundTruth& gt) {
    return std::visit(
        [](const auto& v) -> json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, ClassLabel>) return {{"type", "class"}, {"index", v.index}};
            else if constexpr (std::is_same_v<T, OptionChoice>) return {{"type", "option"}, {"index", v.index}};
            else if constexpr (std::is_same_v<T, Box>) return {{"type", "box"}, {"box", box_json(v)}};
            else return {{"type", "findings"}, {"pairs", pairs_json(v)}};
        },
        gt);
}

GroundTruth truth_from(const json& j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "class") return ClassLabel{j.at("index").get<std::size_t>()};
    if (type == "option") return OptionChoice{j.at("index").get<std::size_t>()};
    if (type == "box") return box_from(j.at("box"));
    if (type == "findings") return pairs_from(j.at("pairs"));
    throw ParseError("unknown ground-truth type '" + type + "'");
}

json prediction_json(const AlignedPrediction& p) {
    json out = {{"null", p.is_null}};
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::vector<double>>) out["probs"] = v;
            else if constexpr (std::is_same_v<T, Box>) out["box"] = box_json(v);
            else out["pairs"] = pairs_json(v);
        },
        p.payload);
    return out;
}

AlignedPrediction prediction_from(const json& j) {
    AlignedPrediction p;
    p.is_null = j.at("null").get<bool>();
    if (j.contains("probs")) p.payload = j["probs"].get<std::vector<double>>();
    else if (j.contains("box")) p.payload = box_from(j["box"]);
    else if (j.contains("pairs")) p.payload = pairs_from(j["pairs"]);
    else throw ParseError("prediction without payload");
    return p;
}

json query_json(const LabeledQuery& lq) {
    return {{"uid", lq.query.uid}, {"task", lq.query.task}, {"x", lq.query.x}, {"q", lq.query.q}, {"gt", truth_json(lq.gt)}};
}

LabeledQuery query_from(const json& j) {
    LabeledQuery lq;
    lq.query.uid = j.at("uid").get<std::uint64_t>();
    lq.query.task = j.at("task").get<TaskId>();
    lq.query.x = j.at("x").get<std::vector<double>>();
    lq.query.q = j.at("q").get<std::vector<double>>();
    lq.gt = truth_from(j.at("gt"));
    return lq;
}

json config_json(const simworld::WorldConfig& c) {
    json families = json::array();
    for (auto f : c.families) families.push_back(std::string(family_name(f)));
    return {{"record", "config"},
            {"families", families},
            {"tasks_per_family", c.tasks_per_family},
            {"d_x", c.d_x},
            {"d_q", c.d_q},
            {"tools_per_task", c.tools_per_task},
            {"labels_per_task", c.labels_per_task},
            {"mcq_options", c.mcq_options},
            {"report_vocab", c.report_vocab},
            {"p_max", c.p_max},
            {"p_floor", c.p_floor},
            {"sharpness", c.sharpness},
            {"support_prob", c.support_prob},
            {"coarsen_prob", c.coarsen_prob},
            {"anchor_jitter", c.anchor_jitter},
            {"feature_noise", c.feature_noise},
            {"hint_noise", c.hint_noise},
            {"outcome_correlation", c.outcome_correlation},
            {"train_size", c.train_size},
            {"val_size", c.val_size},
            {"test_size", c.test_size},
            {"ref_pool_size", c.ref_pool_size},
            {"ref_size", c.ref_size},
            {"seed", c.seed}};
}

simworld::WorldConfig config_from(const json& j) {
    simworld::WorldConfig c;
    c.families.clear();
    for (const auto& f : j.at("families")) c.families.push_back(parse_family(f.get<std::string>()));
    c.tasks_per_family = j.at("tasks_per_family").get<std::size_t>();
    c.d_x = j.at("d_x").get<std::size_t>();
    c.d_q = j.at("d_q").get<std::size_t>();
    c.tools_per_task = j.at("tools_per_task").get<std::size_t>();
    c.labels_per_task = j.at("labels_per_task").get<std::size_t>();
    c.mcq_options = j.at("mcq_options").get<std::size_t>();
    c.report_vocab = j.at("report_vocab").get<std::size_t>();
    c.p_max = j.at("p_max").get<double>();
    c.p_floor = j.at("p_floor").get<double>();
    c.sharpness = j.at("sharpness").get<double>();
    c.support_prob = j.at("support_prob").get<double>();
    c.coarsen_prob = j.at("coarsen_prob").get<double>();
    c.anchor_jitter = j.at("anchor_jitter").get<double>();
    c.feature_noise = j.at("feature_noise").get<double>();
    c.hint_noise = j.at("hint_noise").get<double>();
    c.outcome_correlation = j.at("outcome_correlation").get<double>();
    c.train_size = j.at("train_size").get<std::size_t>();
    c.val_size = j.at("val_size").get<std::size_t>();
    c.test_size = j.at("test_size").get<std::size_t>();
    c.ref_pool_size = j.at("ref_pool_size").get<std::size_t>();
    c.ref_size = j.at("ref_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

json tool_json(const simworld::SimTool& st) {
    json alignment = json::array();
    for (const auto& [t, rho] : st.tool.alignment) alignment.push_back({{"task", t}, {"preimage", rho.preimage_of}});
    json refs = json::array();
    for (const auto& [t, set] : st.tool.references) {
        json elements = json::array();
        for (const auto& el : set.elements) {
            elements.push_back(
                {{"uid", el.uid}, {"x", el.x}, {"y", truth_json(el.y)}, {"prediction", prediction_json(el.prediction)}});
        }
        refs.push_back({{"task", t}, {"elements", elements}});
    }
    return {{"id", st.tool.id},
            {"home_task", st.home_task},
            {"centroid", st.centroid},
            {"sharpness", st.sharpness},
            {"ceiling", st.ceiling},
            {"variant", st.variant},
            {"noise_stream", st.noise_stream},
            {"supported", st.tool.supported_tasks},
            {"alignment", alignment},
            {"metadata", st.tool.metadata},
            {"references", refs}};
}

simworld::SimTool tool_from(const json& j) {
    simworld::SimTool st;
    st.tool.id = j.at("id").get<ToolId>();
    st.home_task = j.at("home_task").get<TaskId>();
    st.centroid = j.at("centroid").get<std::vector<double>>();
    st.sharpness = j.at("sharpness").get<double>();
    st.ceiling = j.at("ceiling").get<double>();
    st.variant = j.at("variant").get<std::uint32_t>();
    st.noise_stream = j.at("noise_stream").get<std::uint64_t>();
    st.tool.supported_tasks = j.at("supported").get<std::set<TaskId>>();
    for (const auto& a : j.at("alignment")) {
        st.tool.alignment.emplace(a.at("task").get<TaskId>(),
                                  LabelAlignment{a.at("preimage").get<std::vector<std::vector<std::size_t>>>()});
    }
    st.tool.metadata = j.at("metadata").get<std::vector<double>>();
    for (const auto& r : j.at("references")) {
        ReferenceSet set{r.at("task").get<TaskId>(), {}};
        for (const auto& el : r.at("elements")) {
            set.elements.push_back(ReferenceElement{el.at("uid").get<std::uint64_t>(), el.at("x").get<std::vector<double>>(),
                                                    truth_from(el.at("y")), prediction_from(el.at("prediction"))});
        }
        st.tool.references.emplace(set.task, std::move(set));
    }
    return st;
}

template <typename Fn>
void for_each_line(const std::filesystem::path& file, Fn&& fn) {
    std::istringstream in(read_file(file));
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        try {
            fn(json::parse(line));
        } catch (const json::exception& e) {
            throw ParseError(file.string() + ":" + std::to_string(number) + ": " + e.what());
        } catch (const Error& e) {
            throw ParseError(file.string() + ":" + std::to_string(number) + ": " + e.what());
        }
    }
}

std::string lines_of(const std::vector<LabeledQuery>& queries) {
    std::string out;
    for (const auto& lq : queries) out += query_record(lq) + '\n';
    return out;
}

} // namespace

std::string query_record(const LabeledQuery& lq) { return query_json(lq).dump(); }

LabeledQuery parse_query_record(const std::string& line) {
    try {
        return query_from(json::parse(line));
    } catch (const json::exception& e) {
        throw ParseError(std::string("query record: ") + e.what());
    }
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw Error("write to " + tmp.string() + " failed");
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string export_split(const SimWorld& world, const std::string& split) { return lines_of(world.split(split)); }

std::vector<LabeledQuery> import_queries(const std::filesystem::path& file) {
    std::vector<LabeledQuery> out;
    for_each_line(file, [&](const json& j) { out.push_back(query_from(j)); });
    return out;
}

void export_world(const SimWorld& world, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string meta = config_json(world.config).dump() + '\n';
    for (const auto& t : world.tasks) {
        const auto& g = world.generators.at(t.id);
        json pairs = json::array();
        for (const auto& p : g.component_pairs) pairs.push_back(json::array({p.finding, p.location}));
        json rec = {{"record", "task"},
                    {"id", t.id},
                    {"family", std::string(family_name(t.family))},
                    {"labels", t.space.labels},
                    {"centroids", g.centroids},
                    {"task_code", g.task_code},
                    {"hint_codes", g.hint_codes},
                    {"box_map", g.box_map},
                    {"pairs", pairs},
                    {"p_floor", g.p_floor},
                    {"population", world.populations.at(t.id)}};
        meta += rec.dump() + '\n';
    }
    meta += json{{"record", "calibration"}, {"kappa", world.iou_calibration.kappa}, {"sigma", world.iou_calibration.sigma}}
                .dump() +
            '\n';
    meta += json{{"record", "meta"}, {"next_uid", world.next_uid}}.dump() + '\n';
    write_atomic(dir / "world.jsonl", meta);

    std::string tools;
    for (const auto& st : world.tools) tools += tool_json(st).dump() + '\n';
    write_atomic(dir / "tools.jsonl", tools);

    for (const char* split : kSplits) write_atomic(dir / (std::string(split) + ".jsonl"), export_split(world, split));
    std::vector<LabeledQuery> pool;
    for (const auto& p : world.reference_pools) pool.insert(pool.end(), p.begin(), p.end());
    write_atomic(dir / "refpool.jsonl", lines_of(pool));
}

SimWorld import_world(const std::filesystem::path& dir) {
    SimWorld world;
    bool have_config = false;
    for_each_line(dir / "world.jsonl", [&](const json& j) {
        const auto kind = j.at("record").get<std::string>();
        if (kind == "config") {
            world.config = config_from(j);
            have_config = true;
        } else if (kind == "task") {
            const auto id = j.at("id").get<TaskId>();
            if (id != world.tasks.size()) throw ParseError("task records out of order");
            const auto family = parse_family(j.at("family").get<std::string>());
            world.tasks.push_back(TaskInfo{id, family, CanonicalLabelSpace{family, j.at("labels").get<std::vector<std::string>>()}});
            simworld::TaskGenerator g;
            g.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
            g.task_code = j.at("task_code").get<std::vector<double>>();
            g.hint_codes = j.at("hint_codes").get<std::vector<std::vector<double>>>();
            g.box_map = j.at("box_map").get<std::vector<double>>();
            for (const auto& p : j.at("pairs")) g.component_pairs.push_back({p.at(0).get<std::string>(), p.at(1).get<std::string>()});
            g.p_floor = j.at("p_floor").get<double>();
            world.generators.push_back(std::move(g));
            world.populations.push_back(j.at("population").get<std::vector<ToolId>>());
        } else if (kind == "calibration") {
            world.iou_calibration.kappa = j.at("kappa").get<std::vector<double>>();
            world.iou_calibration.sigma = j.at("sigma").get<std::vector<double>>();
        } else if (kind == "meta") {
            world.next_uid = j.at("next_uid").get<std::uint64_t>();
        } else {
            throw ParseError("unknown record kind '" + kind + "'");
        }
    });
    if (!have_config) throw ParseError((dir / "world.jsonl").string() + ": missing config record");

    for_each_line(dir / "tools.jsonl", [&](const json& j) {
        auto st = tool_from(j);
        if (st.tool.id != world.tools.size()) throw ParseError("tool records out of order");
        world.tools.push_back(std::move(st));
    });
    for (const auto& pop : world.populations)
        for (ToolId id : pop)
            if (id >= world.tools.size()) throw ParseError("population references unknown tool " + std::to_string(id));

    for (const char* split : kSplits) world.splits[split] = import_queries(dir / (std::string(split) + ".jsonl"));
    world.reference_pools.assign(world.tasks.size(), {});
    for (auto& lq : import_queries(dir / "refpool.jsonl")) {
        if (lq.query.task >= world.tasks.size()) throw ParseError("reference pool query with unknown task");
        world.reference_pools[lq.query.task].push_back(std::move(lq));
    }
    return world;
}

} // namespace toolselect::dataset_io
