#include "toolselect/simworld.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "toolselect/errors.hpp"

namespace toolselect::simworld {

using namespace domain;

namespace {

// Stream tags for Rng derivation.
enum : std::uint64_t {
    kTagGenerator = 1,
    kTagTool = 2,
    kTagSplit = 3,
    kTagPool = 4,
    kTagReferences = 5,
    kTagFreshTool = 6,
    kTagFreshRefs = 7,
    kTagCalibration = 8,
    kTagFrozen = 0xF0,
    kTagDifficulty = 0xF1,
};

const char* const kFindings[] = {"opacity", "nodule", "effusion", "cardiomegaly", "atelectasis", "pneumothorax"};
const char* const kLocations[] = {"left", "right", "bilateral"};

CanonicalLabelSpace make_space(TaskFamily family, const WorldConfig& cfg, const std::vector<FindingPair>& pairs) {
    CanonicalLabelSpace space{family, {}};
    switch (family) {
    case TaskFamily::Classification:
        for (std::size_t i = 0; i < cfg.labels_per_task; ++i) space.labels.push_back("class_" + std::to_string(i));
        break;
    case TaskFamily::MultipleChoice:
        for (std::size_t i = 0; i < cfg.mcq_options; ++i) space.labels.push_back(std::string(1, static_cast<char>('A' + i)));
        break;
    case TaskFamily::Grounding: space.labels = {"x1", "y1", "x2", "y2"}; break;
    case TaskFamily::ReportGeneration:
        for (const auto& p : pairs) space.labels.push_back(pair_label(p));
        break;
    }
    return space;
}

std::size_t component_count(TaskFamily family, const WorldConfig& cfg) {
    switch (family) {
    case TaskFamily::MultipleChoice: return cfg.mcq_options;
    case TaskFamily::ReportGeneration: return cfg.report_vocab;
    default: return cfg.labels_per_task;
    }
}

std::vector<double> uniform_vector(std::size_t n, double lo, double hi, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

std::vector<double> normal_vector(std::size_t n, double sd, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal(0.0, sd);
    return v;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

Box clip_box(double cx, double cy, double w, double h) {
    return Box{std::clamp(cx - w / 2, 0.0, 1.0), std::clamp(cy - h / 2, 0.0, 1.0), std::clamp(cx + w / 2, 0.0, 1.0),
               std::clamp(cy + h / 2, 0.0, 1.0)};
}

/// Standard normals: correlated with `shared` when given, else independent.
class NoiseSource {
public:
    NoiseSource(Rng& rng, const QueryDifficulty* shared, double rho)
        : rng_(rng), shared_(shared), a_(std::sqrt(rho)), b_(std::sqrt(1.0 - rho)) {}

    double normal() {
        const double own = rng_.normal();
        if (shared_ == nullptr) return own;
        return a_ * shared_->z.at(next_++) + b_ * own;
    }
    bool bernoulli(double p) { return 0.5 * std::erfc(-normal() / std::sqrt(2.0)) < p; }

private:
    Rng& rng_;
    const QueryDifficulty* shared_;
    double a_, b_;
    std::size_t next_ = 0;
};

Box perturb_box(const Box& gt, double sigma, NoiseSource& noise) {
    const double w = gt.x2 - gt.x1;
    const double h = gt.y2 - gt.y1;
    const double cx = 0.5 * (gt.x1 + gt.x2) + sigma * w * noise.normal();
    const double cy = 0.5 * (gt.y1 + gt.y2) + sigma * h * noise.normal();
    const double nw = w * std::exp(0.5 * sigma * noise.normal());
    const double nh = h * std::exp(0.5 * sigma * noise.normal());
    return clip_box(cx, cy, nw, nh);
}

IouCalibration calibrate_iou(std::uint64_t seed) {
    constexpr std::size_t kSamples = 2000;
    Rng rng(seed, {kTagCalibration});
    std::vector<Box> truth;
    for (std::size_t i = 0; i < kSamples; ++i) {
        const double w = rng.uniform(0.1, 0.3);
        const double h = rng.uniform(0.1, 0.3);
        truth.push_back(clip_box(rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75), w, h));
    }
    const std::uint64_t noise_seed = rng.next_u64();
    // Common random numbers across sigma keep mean IoU monotone in sigma.
    auto mean_iou = [&](double sigma) {
        Rng rng_noise(noise_seed);
        NoiseSource noise(rng_noise, nullptr, 0.0);
        double total = 0.0;
        for (const Box& b : truth) total += iou(perturb_box(b, sigma, noise), b);
        return total / kSamples;
    };

    IouCalibration cal;
    constexpr double kSigmaMax = 8.0;
    for (int k = 2; k <= 19; ++k) {
        const double kappa = 0.05 * k;
        double lo = 0.0, hi = kSigmaMax;
        if (mean_iou(hi) > kappa) {
            lo = hi;
        } else {
            for (int it = 0; it < 40; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (mean_iou(mid) > kappa) lo = mid;
                else hi = mid;
            }
        }
        cal.kappa.push_back(kappa);
        cal.sigma.push_back(0.5 * (lo + hi));
    }
    cal.kappa.push_back(1.0);
    cal.sigma.push_back(0.0);
    return cal;
}

SimTool make_tool(const SimWorld& world, TaskId home, ToolId id, Rng& rng) {
    const WorldConfig& cfg = world.config;
    SimTool st;
    st.tool.id = id;
    st.home_task = home;
    st.centroid = uniform_vector(cfg.d_x, -1.0, 1.0, rng);
    st.sharpness = cfg.sharpness;
    st.ceiling = cfg.p_max;
    st.noise_stream = rng.next_u64();
    for (const auto& task : world.tasks)
        if (rng.bernoulli(cfg.support_prob)) st.tool.supported_tasks.insert(task.id);
    if (st.tool.supported_tasks.empty()) st.tool.supported_tasks.insert(home);
    st.variant = rng.bernoulli(cfg.coarsen_prob) ? 1u : 0u;
    for (TaskId t : st.tool.supported_tasks) {
        const TaskInfo& task = world.tasks[t];
        if (!is_categorical(task.family)) continue;
        const std::size_t n = task.space.size();
        if (st.variant == 1 && task.family == TaskFamily::Classification && n >= 3) {
            // Merge canonical labels a and b into one tool label.
            const std::size_t a = rng.index(n);
            std::size_t b = rng.index(n - 1);
            if (b >= a) ++b;
            const std::size_t lo = std::min(a, b), hi = std::max(a, b);
            LabelAlignment rho;
            for (std::size_t y = 0; y < n; ++y) {
                if (y == hi) continue;
                if (y == lo) rho.preimage_of.push_back({lo, hi});
                else rho.preimage_of.push_back({y});
            }
            st.tool.alignment.emplace(t, std::move(rho));
        } else {
            st.tool.alignment.emplace(t, LabelAlignment::identity(n));
        }
    }
    st.tool.metadata = {static_cast<double>(st.tool.supported_tasks.size()) / static_cast<double>(world.tasks.size()),
                        rng.uniform()};
    return st;
}

void fill_references(SimWorld& world, SimTool& st, std::size_t ref_size, Rng& rng) {
    st.tool.references.clear();
    for (TaskId t : st.tool.supported_tasks) {
        const auto& pool = world.reference_pools[t];
        if (pool.empty()) throw ContractViolation("reference pool of task " + std::to_string(t) + " is empty");
        std::vector<std::size_t> order(pool.size());
        std::iota(order.begin(), order.end(), 0);
        ReferenceSet refs{t, {}};
        for (std::size_t b = 0; b < ref_size; ++b) {
            std::size_t pick;
            if (pool.size() >= ref_size) {
                const std::size_t j = b + rng.index(pool.size() - b);
                std::swap(order[b], order[j]);
                pick = order[b];
            } else {
                pick = rng.index(pool.size());
            }
            const LabeledQuery& lq = pool[pick];
            refs.elements.push_back(ReferenceElement{lq.query.uid, lq.query.x, lq.gt, frozen_prediction(world, st, lq)});
        }
        st.tool.references.emplace(t, std::move(refs));
    }
}

} // namespace

void WorldConfig::validate() const {
    if (families.empty() || tasks_per_family == 0) throw ContractViolation("world config: no tasks");
    if (d_x == 0 || d_q == 0) throw ContractViolation("world config: feature widths must be positive");
    if (tools_per_task == 0) throw ContractViolation("world config: tools_per_task must be positive");
    if (labels_per_task < 2 || mcq_options < 2) throw ContractViolation("world config: need at least two labels");
    if (report_vocab == 0 || report_vocab > std::size(kFindings) * std::size(kLocations)) {
        throw ContractViolation("world config: report_vocab out of range");
    }
    if (!(p_max > 0.0 && p_max <= 1.0)) throw ContractViolation("world config: p_max must lie in (0, 1]");
    if (p_floor >= 0.0 && !(p_floor < p_max)) throw ContractViolation("world config: need p_floor < p_max");
    if (!(sharpness > 0.0)) throw ContractViolation("world config: sharpness must be positive");
    if (!(support_prob >= 0.0 && support_prob <= 1.0)) throw ContractViolation("world config: support_prob outside [0, 1]");
    if (!(outcome_correlation >= 0.0 && outcome_correlation <= 1.0)) {
        throw ContractViolation("world config: outcome_correlation must lie in [0, 1]");
    }
    if (!(anchor_jitter >= 0.0) || !(feature_noise >= 0.0) || !(hint_noise >= 0.0)) {
        throw ContractViolation("world config: noise scales must be non-negative");
    }
    if (ref_size == 0 || ref_pool_size == 0) throw ContractViolation("world config: reference sizes must be positive");
}

double IouCalibration::sigma_for(double k) const {
    if (kappa.empty()) return 0.0;
    if (k <= kappa.front()) return sigma.front();
    if (k >= kappa.back()) return sigma.back();
    const auto it = std::upper_bound(kappa.begin(), kappa.end(), k);
    const std::size_t hi = static_cast<std::size_t>(it - kappa.begin());
    const std::size_t lo = hi - 1;
    const double t = (k - kappa[lo]) / (kappa[hi] - kappa[lo]);
    return sigma[lo] + t * (sigma[hi] - sigma[lo]);
}

const std::vector<LabeledQuery>& SimWorld::split(const std::string& name) const {
    auto it = splits.find(name);
    if (it == splits.end()) throw ContractViolation("unknown split '" + name + "'");
    return it->second;
}

std::size_t SimWorld::slot_width() const {
    std::size_t w = 0;
    for (const auto& t : tasks) w = std::max(w, t.space.size());
    return w;
}

std::vector<std::size_t> SimWorld::label_counts() const {
    std::vector<std::size_t> out;
    for (const auto& t : tasks) out.push_back(is_categorical(t.family) ? t.space.size() : 0);
    return out;
}

std::vector<const Tool*> SimWorld::population(TaskId task) const {
    std::vector<const Tool*> out;
    for (ToolId id : populations.at(task)) out.push_back(&tools.at(id).tool);
    return out;
}

SimWorld generate_world(const WorldConfig& cfg) {
    cfg.validate();
    SimWorld world;
    world.config = cfg;

    TaskId next_task = 0;
    for (TaskFamily family : cfg.families) {
        for (std::size_t k = 0; k < cfg.tasks_per_family; ++k) {
            const TaskId id = next_task++;
            Rng rng(cfg.seed, {kTagGenerator, id});
            TaskGenerator gen;
            const std::size_t n_comp = component_count(family, cfg);
            gen.task_code = normal_vector(cfg.d_q, 1.0, rng);
            for (std::size_t c = 0; c < n_comp; ++c) gen.hint_codes.push_back(normal_vector(cfg.d_q, 1.0, rng));
            if (family == TaskFamily::Grounding) {
                gen.box_map = normal_vector(2 * cfg.d_x, 0.26 / std::sqrt(static_cast<double>(cfg.d_x)), rng);
            }
            if (family == TaskFamily::ReportGeneration) {
                std::vector<FindingPair> all;
                for (const char* f : kFindings)
                    for (const char* l : kLocations) all.push_back({f, l});
                for (std::size_t c = 0; c < n_comp; ++c) {
                    const std::size_t j = c + rng.index(all.size() - c);
                    std::swap(all[c], all[j]);
                    gen.component_pairs.push_back(all[c]);
                }
            }
            TaskInfo info{id, family, make_space(family, cfg, gen.component_pairs)};
            gen.p_floor = cfg.p_floor >= 0.0 ? cfg.p_floor : 1.0 / static_cast<double>(info.space.size());
            world.tasks.push_back(std::move(info));
            world.generators.push_back(std::move(gen));
        }
    }

    world.populations.resize(world.tasks.size());
    for (const auto& task : world.tasks) {
        for (std::size_t i = 0; i < cfg.tools_per_task; ++i) {
            const auto id = static_cast<ToolId>(world.tools.size());
            Rng rng(cfg.seed, {kTagTool, id});
            world.tools.push_back(make_tool(world, task.id, id, rng));
            world.populations[task.id].push_back(id);
        }
    }

    // Each class / component region is centred on the expertise centroid of a
    // distinct population tool, so every region has a specialist.
    for (const auto& task : world.tasks) {
        Rng rng(cfg.seed, {kTagGenerator, task.id, 1});
        const auto& pop = world.populations[task.id];
        std::vector<std::size_t> order(pop.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
        auto& gen = world.generators[task.id];
        for (std::size_t c = 0; c < gen.hint_codes.size(); ++c) {
            const auto& anchor = world.tools[pop[order[c % order.size()]]].centroid;
            std::vector<double> centroid(cfg.d_x);
            for (std::size_t i = 0; i < cfg.d_x; ++i) centroid[i] = anchor[i] + rng.normal(0.0, cfg.anchor_jitter);
            gen.centroids.push_back(std::move(centroid));
        }
    }

    world.iou_calibration = calibrate_iou(cfg.seed);

    const std::size_t n_tasks = world.tasks.size();
    const std::pair<const char*, std::size_t> splits[] = {
        {"train", cfg.train_size}, {"val", cfg.val_size}, {"test", cfg.test_size}};
    std::uint64_t split_index = 0;
    for (const auto& [name, size] : splits) {
        Rng rng(cfg.seed, {kTagSplit, split_index++});
        auto& out = world.splits[name];
        for (std::size_t i = 0; i < size; ++i) {
            out.push_back(sample_query(world, static_cast<TaskId>(i % n_tasks), rng, world.next_uid++));
        }
    }
    world.reference_pools.resize(n_tasks);
    for (TaskId t = 0; t < n_tasks; ++t) {
        Rng rng(cfg.seed, {kTagPool, t});
        for (std::size_t i = 0; i < cfg.ref_pool_size; ++i) {
            world.reference_pools[t].push_back(sample_query(world, t, rng, world.next_uid++));
        }
    }

    Rng ref_rng(cfg.seed, {kTagReferences});
    build_reference_sets(world, cfg.ref_size, ref_rng);
    return world;
}

LabeledQuery sample_query(const SimWorld& world, TaskId task, Rng& rng, std::uint64_t uid) {
    const WorldConfig& cfg = world.config;
    const TaskInfo& info = world.tasks.at(task);
    const TaskGenerator& gen = world.generators.at(task);
    const std::size_t n_comp = gen.centroids.size();

    const std::size_t k = rng.index(n_comp);
    LabeledQuery lq;
    lq.query.uid = uid;
    lq.query.task = task;
    lq.query.x.resize(cfg.d_x);
    for (std::size_t i = 0; i < cfg.d_x; ++i) lq.query.x[i] = gen.centroids[k][i] + rng.normal(0.0, cfg.feature_noise);
    lq.query.q.resize(cfg.d_q);
    for (std::size_t i = 0; i < cfg.d_q; ++i) {
        lq.query.q[i] = gen.task_code[i] + gen.hint_codes[k][i] + rng.normal(0.0, cfg.hint_noise);
    }

    switch (info.family) {
    case TaskFamily::Classification: lq.gt = ClassLabel{k}; break;
    case TaskFamily::MultipleChoice: lq.gt = OptionChoice{k}; break;
    case TaskFamily::Grounding: {
        const double w = rng.uniform(0.1, 0.3);
        const double h = rng.uniform(0.1, 0.3);
        double cx = 0.5, cy = 0.5;
        for (std::size_t i = 0; i < cfg.d_x; ++i) {
            cx += gen.box_map[i] * lq.query.x[i];
            cy += gen.box_map[cfg.d_x + i] * lq.query.x[i];
        }
        cx = std::clamp(cx, w / 2, 1.0 - w / 2);
        cy = std::clamp(cy, h / 2, 1.0 - h / 2);
        lq.gt = Box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
        break;
    }
    case TaskFamily::ReportGeneration: {
        const std::size_t n = 1 + rng.index(3);
        std::vector<std::pair<double, std::size_t>> dist;
        for (std::size_t c = 0; c < n_comp; ++c) dist.emplace_back(squared_distance(lq.query.x, gen.centroids[c]), c);
        std::sort(dist.begin(), dist.end());
        FindingSet pairs;
        for (std::size_t i = 0; i < std::min(n, n_comp); ++i) pairs.insert(gen.component_pairs[dist[i].second]);
        lq.gt = std::move(pairs);
        break;
    }
    }
    return lq;
}

double competence(const SimWorld& world, const SimTool& tool, TaskId task, std::span<const double> x) {
    const double floor = world.generators.at(task).p_floor;
    const double d2 = squared_distance(x, tool.centroid) / static_cast<double>(x.size());
    return floor + (tool.ceiling - floor) * std::exp(-tool.sharpness * d2);
}

QueryDifficulty query_difficulty(const SimWorld& world, const LabeledQuery& lq) {
    Rng rng(world.config.seed, {kTagDifficulty, lq.query.uid});
    QueryDifficulty d;
    for (double& z : d.z) z = rng.normal();
    return d;
}

RawPrediction tool_predict(const SimWorld& world, const SimTool& tool, const LabeledQuery& lq, Rng& rng,
                           const QueryDifficulty* shared) {
    const TaskId task = lq.query.task;
    if (!tool.tool.supports(task)) return Abstain{};
    const TaskInfo& info = world.tasks.at(task);
    const double kappa = competence(world, tool, task, lq.query.x);
    NoiseSource noise(rng, shared, world.config.outcome_correlation);

    switch (info.family) {
    case TaskFamily::Classification:
    case TaskFamily::MultipleChoice: {
        const std::size_t n = info.space.size();
        const std::size_t y = info.family == TaskFamily::Classification ? std::get<ClassLabel>(lq.gt).index
                                                                          : std::get<OptionChoice>(lq.gt).index;
        std::size_t chosen = y;
        if (!noise.bernoulli(kappa)) {
            const std::size_t w = rng.index(n - 1);
            chosen = w < y ? w : w + 1;
        }
        auto it = tool.tool.alignment.find(task);
        const LabelAlignment rho = it != tool.tool.alignment.end() ? it->second : LabelAlignment::identity(n);
        const std::size_t labels = rho.tool_label_count();
        std::size_t tool_label = 0;
        for (std::size_t l = 0; l < labels; ++l) {
            const auto& pre = rho.preimage_of[l];
            if (std::find(pre.begin(), pre.end(), chosen) != pre.end()) {
                tool_label = l;
                break;
            }
        }
        std::vector<double> probs(labels, labels > 1 ? 0.1 / static_cast<double>(labels - 1) : 0.0);
        probs[tool_label] = labels > 1 ? 0.9 : 1.0;
        return CategoricalScores{std::move(probs)};
    }
    case TaskFamily::Grounding:
        return perturb_box(std::get<Box>(lq.gt), world.iou_calibration.sigma_for(kappa), noise);
    case TaskFamily::ReportGeneration: {
        const auto& truth = std::get<FindingSet>(lq.gt);
        FindingSet out;
        for (const auto& p : truth)
            if (noise.bernoulli(kappa)) out.insert(p);
        // Spurious pairs appear when the shared draw is high, i.e. on hard queries.
        if (!noise.bernoulli(kappa)) {
            std::vector<FindingPair> spurious;
            for (const auto& p : world.generators.at(task).component_pairs)
                if (!truth.contains(p)) spurious.push_back(p);
            if (!spurious.empty()) out.insert(spurious[rng.index(spurious.size())]);
        }
        return out;
    }
    }
    return Abstain{};
}

AlignedPrediction frozen_prediction(const SimWorld& world, const SimTool& tool, const LabeledQuery& lq) {
    Rng rng(world.config.seed, {kTagFrozen, tool.noise_stream, lq.query.uid});
    const QueryDifficulty shared = query_difficulty(world, lq);
    return align(tool.tool, world.tasks.at(lq.query.task), tool_predict(world, tool, lq, rng, &shared));
}

Outcome outcome(const SimWorld& world, const SimTool& tool, const LabeledQuery& lq) {
    Outcome o;
    o.prediction = frozen_prediction(world, tool, lq);
    o.valid = validity(tool.tool, lq.query) && !o.prediction.is_null;
    if (o.valid) o.cost = cost(world.tasks.at(lq.query.task).family, o.prediction, lq.gt).value();
    return o;
}

OutcomeTable outcome_table(const SimWorld& world, std::span<const LabeledQuery> queries) {
    OutcomeTable table;
    table.reserve(queries.size());
    for (const auto& lq : queries) {
        std::vector<Outcome> row;
        for (ToolId id : world.populations.at(lq.query.task)) row.push_back(outcome(world, world.tool(id), lq));
        table.push_back(std::move(row));
    }
    return table;
}

std::vector<std::map<ToolId, std::size_t>> population_positions(const SimWorld& world) {
    std::vector<std::map<ToolId, std::size_t>> out(world.populations.size());
    for (std::size_t t = 0; t < world.populations.size(); ++t)
        for (std::size_t i = 0; i < world.populations[t].size(); ++i) out[t].emplace(world.populations[t][i], i);
    return out;
}

void build_reference_sets(SimWorld& world, std::size_t ref_size, Rng& rng) {
    if (ref_size == 0) throw ContractViolation("reference set size must be at least 1");
    world.config.ref_size = ref_size;
    for (SimTool& st : world.tools) fill_references(world, st, ref_size, rng);
}

SimWorld with_fresh_tools(const SimWorld& world, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ContractViolation("fresh tool fraction outside [0, 1]");
    SimWorld out = world;
    Rng pick(seed, {kTagFreshTool});
    Rng refs(seed, {kTagFreshRefs});
    for (TaskId t = 0; t < out.populations.size(); ++t) {
        auto& pop = out.populations[t];
        const auto n_new = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pop.size())));
        std::vector<std::size_t> positions(pop.size());
        std::iota(positions.begin(), positions.end(), 0);
        for (std::size_t i = 0; i < n_new; ++i) {
            const std::size_t j = i + pick.index(positions.size() - i);
            std::swap(positions[i], positions[j]);
        }
        std::sort(positions.begin(), positions.begin() + static_cast<std::ptrdiff_t>(n_new));
        for (std::size_t i = 0; i < n_new; ++i) {
            const auto id = static_cast<ToolId>(out.tools.size());
            Rng rng(seed, {kTagFreshTool, id});
            SimTool st = make_tool(out, t, id, rng);
            const auto& centroids = out.generators[t].centroids;
            const auto& anchor = centroids[rng.index(centroids.size())];
            for (std::size_t k = 0; k < st.centroid.size(); ++k) {
                st.centroid[k] = anchor[k] + rng.normal(0.0, out.config.anchor_jitter);
            }
            fill_references(out, st, out.config.ref_size, refs);
            out.tools.push_back(std::move(st));
            pop[positions[i]] = id;
        }
    }
    return out;
}

namespace {

struct Hasher {
    std::uint64_t h = 0xcbf29ce484222325ULL;

    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    void vec(const std::vector<double>& v) {
        u64(v.size());
        for (double x : v) f64(x);
    }
    void pairs(const FindingSet& s) {
        u64(s.size());
        for (const auto& p : s) {
            str(p.finding);
            str(p.location);
        }
    }
    void truth(const GroundTruth& gt) {
        u64(gt.index());
        std::visit(
            [&](const auto& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, ClassLabel> || std::is_same_v<T, OptionChoice>) u64(v.index);
                else if constexpr (std::is_same_v<T, Box>) {
                    f64(v.x1), f64(v.y1), f64(v.x2), f64(v.y2);
                } else pairs(v);
            },
            gt);
    }
    void prediction(const AlignedPrediction& p) {
        u64(p.is_null);
        u64(p.payload.index());
        std::visit(
            [&](const auto& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, std::vector<double>>) vec(v);
                else if constexpr (std::is_same_v<T, Box>) {
                    f64(v.x1), f64(v.y1), f64(v.x2), f64(v.y2);
                } else pairs(v);
            },
            p.payload);
    }
    void query(const LabeledQuery& lq) {
        u64(lq.query.uid);
        u64(lq.query.task);
        vec(lq.query.x);
        vec(lq.query.q);
        truth(lq.gt);
    }
};

} // namespace

std::uint64_t world_digest(const SimWorld& world) {
    Hasher h;
    for (const auto& t : world.tasks) {
        h.u64(t.id);
        h.str(std::string(family_name(t.family)));
        for (const auto& l : t.space.labels) h.str(l);
    }
    for (const auto& g : world.generators) {
        for (const auto& c : g.centroids) h.vec(c);
        h.vec(g.task_code);
        for (const auto& c : g.hint_codes) h.vec(c);
        h.vec(g.box_map);
        for (const auto& p : g.component_pairs) {
            h.str(p.finding);
            h.str(p.location);
        }
        h.f64(g.p_floor);
    }
    for (const auto& st : world.tools) {
        h.u64(st.tool.id);
        h.u64(st.home_task);
        h.vec(st.centroid);
        h.f64(st.sharpness);
        h.f64(st.ceiling);
        h.u64(st.variant);
        h.u64(st.noise_stream);
        for (TaskId t : st.tool.supported_tasks) h.u64(t);
        for (const auto& [t, rho] : st.tool.alignment) {
            h.u64(t);
            for (const auto& pre : rho.preimage_of) {
                h.u64(pre.size());
                for (auto y : pre) h.u64(y);
            }
        }
        h.vec(st.tool.metadata);
        for (const auto& [t, refs] : st.tool.references) {
            h.u64(t);
            for (const auto& el : refs.elements) {
                h.u64(el.uid);
                h.vec(el.x);
                h.truth(el.y);
                h.prediction(el.prediction);
            }
        }
    }
    for (const auto& pop : world.populations) {
        h.u64(pop.size());
        for (auto id : pop) h.u64(id);
    }
    for (const auto& [name, queries] : world.splits) {
        h.str(name);
        for (const auto& lq : queries) h.query(lq);
    }
    for (const auto& pool : world.reference_pools)
        for (const auto& lq : pool) h.query(lq);
    h.vec(world.iou_calibration.kappa);
    h.vec(world.iou_calibration.sigma);
    h.u64(world.next_uid);
    return h.h;
}

} // namespace toolselect::simworld
