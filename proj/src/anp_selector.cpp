#include "toolselect/anp_selector.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <map>

#include "toolselect/errors.hpp"

namespace toolselect::anp {

using namespace diffcore;

void SelectorConfig::validate() const {
    const std::size_t dims[] = {d_x, d_q, d_xp, d_qp, d_u, d, d_k, d_v, hidden, ref_size, label_embed_dim, rho_dim,
                                slot_width};
    for (std::size_t v : dims)
        if (v == 0) throw ContractViolation("selector config: every dimension must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractViolation("selector config: dropout must lie in [0, 1)");
    if (label_counts.empty()) throw ContractViolation("selector config: no tasks");
}

std::vector<std::pair<std::string, Tensor*>> SelectorParams::named() {
    std::vector<std::pair<std::string, Tensor*>> out;
    auto lin = [&](const std::string& name, Linear& l) {
        out.emplace_back(name + ".w", &l.w);
        out.emplace_back(name + ".b", &l.b);
    };
    lin("phi_x", phi_x);
    lin("phi_q", phi_q);
    lin("fuse", fuse);
    for (std::size_t t = 0; t < label_embed.size(); ++t)
        if (label_embed[t].size() > 0) out.emplace_back("label_embed." + std::to_string(t), &label_embed[t]);
    lin("rho_m", rho_m);
    lin("ref_proj", ref_proj);
    out.emplace_back("self.q", &self_q);
    out.emplace_back("self.k", &self_k);
    out.emplace_back("self.v", &self_v);
    out.emplace_back("cross.q", &cross_q);
    out.emplace_back("cross.k", &cross_k);
    out.emplace_back("cross.v", &cross_v);
    lin("head.hidden", head_hidden);
    lin("head.out", head_out);
    lin("cov.hidden", cov_hidden);
    lin("cov.out", cov_out);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> SelectorParams::named() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (auto& [name, t] : const_cast<SelectorParams*>(this)->named()) out.emplace_back(name, t);
    return out;
}

std::vector<Tensor*> SelectorParams::tensors() {
    std::vector<Tensor*> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
}

std::size_t SelectorParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : named()) n += t->size();
    return n;
}

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w({fan_in, fan_out});
    for (double& v : w.data()) v = rng.uniform(-a, a);
    return w;
}

Linear make_linear(std::size_t in, std::size_t out, Rng& rng) {
    return Linear{glorot(in, out, rng), Tensor({1, out})};
}

} // namespace

SelectorParams init_params(const SelectorConfig& c, std::uint64_t seed) {
    c.validate();
    Rng rng(seed, {0x5e1ec7});
    SelectorParams p;
    p.phi_x = make_linear(c.d_x, c.d_xp, rng);
    p.phi_q = make_linear(c.d_q, c.d_qp, rng);
    p.fuse = make_linear(c.d_xp + c.d_qp, c.d_u, rng);
    for (std::size_t count : c.label_counts)
        p.label_embed.push_back(count > 0 ? glorot(count, c.label_embed_dim, rng) : Tensor());
    p.rho_m = make_linear(c.slot_width, c.rho_dim, rng);
    p.ref_proj = make_linear(c.d_xp + c.label_embed_dim + c.rho_dim, c.d, rng);
    p.self_q = glorot(c.d, c.d, rng);
    p.self_k = glorot(c.d, c.d, rng);
    p.self_v = glorot(c.d, c.d, rng);
    p.cross_q = glorot(c.d_u, c.d_k, rng);
    p.cross_k = glorot(c.d_xp, c.d_k, rng);
    p.cross_v = glorot(c.d, c.d_v, rng);
    p.head_hidden = make_linear(c.d_u + c.d_v + c.slot_width + c.metadata_dim, c.hidden, rng);
    p.head_out = make_linear(c.hidden, 1, rng);
    p.cov_hidden = make_linear(c.d_u + c.d_v, c.hidden, rng);
    p.cov_out = make_linear(c.hidden, 1, rng);
    return p;
}

SelectorParams quantized_f32(const SelectorParams& params) {
    SelectorParams q = params;
    for (auto& [name, t] : q.named())
        for (double& v : t->data()) v = static_cast<double>(static_cast<float>(v));
    return q;
}

std::uint64_t params_digest(const SelectorParams& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&](const void* data, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [name, t] : params.named()) {
        feed(name.data(), name.size());
        for (double v : t->data()) {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            feed(&bits, sizeof bits);
        }
    }
    return h;
}

SelectorGraph::SelectorGraph(Tape& tape, const SelectorParams& params, const SelectorConfig& config, Rng* dropout_rng)
    : tape_(tape), params_(params), config_(config), dropout_rng_(dropout_rng) {}

Var SelectorGraph::linear(Var x, const Linear& layer) {
    return add_row(matmul(x, param(layer.w)), param(layer.b));
}

Var SelectorGraph::maybe_dropout(Var x) {
    if (!tape_.training || dropout_rng_ == nullptr || config_.dropout <= 0.0) return x;
    return mul_const(x, dropout_mask(x.shape(), config_.dropout, *dropout_rng_));
}

Var SelectorGraph::phi_x(Var x) { return linear(x, params_.phi_x); }

Var SelectorGraph::encode_queries(std::span<const domain::Query* const> queries) {
    const std::size_t n = queries.size();
    Tensor xs({n, config_.d_x});
    Tensor qs({n, config_.d_q});
    for (std::size_t i = 0; i < n; ++i) {
        const auto& query = *queries[i];
        if (query.x.size() != config_.d_x || query.q.size() != config_.d_q) {
            throw DimensionError("query " + std::to_string(query.uid) + " has feature widths (" +
                                 std::to_string(query.x.size()) + ", " + std::to_string(query.q.size()) +
                                 "), selector expects (" + std::to_string(config_.d_x) + ", " +
                                 std::to_string(config_.d_q) + ")");
        }
        std::copy(query.x.begin(), query.x.end(), xs.data().begin() + static_cast<std::ptrdiff_t>(i * config_.d_x));
        std::copy(query.q.begin(), query.q.end(), qs.data().begin() + static_cast<std::ptrdiff_t>(i * config_.d_q));
    }
    const Var parts[] = {phi_x(tape_.constant(std::move(xs))), linear(tape_.constant(std::move(qs)), params_.phi_q)};
    return linear(hcat(parts), params_.fuse);
}

ReferenceEncoding SelectorGraph::encode_reference_set(const domain::TaskInfo& task, const domain::ReferenceSet& refs) {
    const std::size_t b = refs.size();
    if (b == 0) throw EmptyReferenceSet("tool has an empty reference set for task " + std::to_string(task.id));
    if (task.id >= config_.label_counts.size()) throw ContractViolation("task id outside selector config");

    Tensor xs({b, config_.d_x});
    Tensor slots({b, config_.slot_width});
    for (std::size_t i = 0; i < b; ++i) {
        const auto& el = refs.elements[i];
        if (el.x.size() != config_.d_x) throw DimensionError("reference element has wrong feature width");
        std::copy(el.x.begin(), el.x.end(), xs.data().begin() + static_cast<std::ptrdiff_t>(i * config_.d_x));
        const auto s = domain::prediction_slot(el.prediction, task.space, config_.slot_width);
        std::copy(s.begin(), s.end(), slots.data().begin() + static_cast<std::ptrdiff_t>(i * config_.slot_width));
    }

    Var label_rows;
    if (domain::is_categorical(task.family)) {
        const Tensor& table = params_.label_embed.at(task.id);
        if (table.size() == 0) throw ContractViolation("no label embedding for task " + std::to_string(task.id));
        std::vector<long> labels(b);
        for (std::size_t i = 0; i < b; ++i) {
            const auto& y = refs.elements[i].y;
            std::size_t idx;
            if (const auto* c = std::get_if<domain::ClassLabel>(&y)) idx = c->index;
            else if (const auto* o = std::get_if<domain::OptionChoice>(&y)) idx = o->index;
            else throw ContractViolation("reference ground truth does not match a categorical task");
            if (idx >= table.rows()) {
                throw ContractViolation("reference label " + std::to_string(idx) + " outside canonical space of task " +
                                        std::to_string(task.id));
            }
            labels[i] = static_cast<long>(idx);
        }
        label_rows = gather_rows(param(table), labels);
    } else {
        Tensor enc({b, config_.label_embed_dim});
        for (std::size_t i = 0; i < b; ++i) {
            const auto e = domain::truth_encoding(refs.elements[i].y, task.space, config_.label_embed_dim);
            std::copy(e.begin(), e.end(), enc.data().begin() + static_cast<std::ptrdiff_t>(i * config_.label_embed_dim));
        }
        label_rows = tape_.constant(std::move(enc));
    }

    Var fx = phi_x(tape_.constant(std::move(xs)));
    Var rho = linear(tape_.constant(std::move(slots)), params_.rho_m);
    const Var parts[] = {fx, label_rows, rho};
    return ReferenceEncoding{linear(hcat(parts), params_.ref_proj), fx};
}

Var SelectorGraph::self_attend(Var embeddings) {
    Var q = matmul(embeddings, param(params_.self_q));
    Var k = matmul(embeddings, param(params_.self_k));
    Var v = matmul(embeddings, param(params_.self_v));
    return maybe_dropout(attend(q, k, v));
}

ToolDescriptor SelectorGraph::describe_tool(const domain::TaskInfo& task, const domain::ReferenceSet& refs) {
    ReferenceEncoding enc = encode_reference_set(task, refs);
    Var mixed = self_attend(enc.embeddings);
    return ToolDescriptor{matmul(enc.key_inputs, param(params_.cross_k)), matmul(mixed, param(params_.cross_v))};
}

Var SelectorGraph::cross_attend(Var u_rows, const ToolDescriptor& tool) {
    return attend(matmul(u_rows, param(params_.cross_q)), tool.keys, tool.values);
}

Var SelectorGraph::score(Var u_rows, Var psi_rows, Var slot_rows, Var metadata_rows) {
    const Var parts[] = {u_rows, psi_rows, slot_rows, metadata_rows};
    Var hidden = maybe_dropout(gelu(linear(hcat(parts), params_.head_hidden)));
    return linear(hidden, params_.head_out);
}

Var SelectorGraph::coverage(Var u_rows, Var psi_rows) {
    const Var parts[] = {u_rows, psi_rows};
    Var hidden = gelu(linear(hcat(parts), params_.cov_hidden));
    return sigmoid(linear(hidden, params_.cov_out));
}

std::vector<ExampleGraph> SelectorGraph::build(std::span<const RoutingExample> batch) {
    const std::size_t n = batch.size();
    if (n == 0) return {};

    std::vector<const domain::Query*> queries;
    for (const auto& ex : batch) {
        if (ex.panel.size() < 2) throw ContractViolation("panel must hold at least two slots");
        if (ex.predictions.size() != ex.panel.size()) throw ContractViolation("one prediction per panel slot required");
        queries.push_back(ex.query);
    }
    Var u = encode_queries(queries);
    Var query_proj = matmul(u, param(params_.cross_q));

    // One scored row per distinct (example, tool); rows grouped by (tool, task)
    // so each tool's references are encoded once per batch.
    using GroupKey = std::pair<const domain::Tool*, domain::TaskId>;
    std::map<GroupKey, std::size_t> group_index;
    std::vector<GroupKey> groups;
    std::vector<std::vector<std::size_t>> group_examples;
    std::vector<std::vector<const domain::AlignedPrediction*>> group_predictions;
    // (group, position) for each valid slot of each example; group == npos for invalid slots.
    constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> slot_rows(n);

    for (std::size_t i = 0; i < n; ++i) {
        const auto& ex = batch[i];
        std::map<const domain::Tool*, std::pair<std::size_t, std::size_t>> seen;
        for (std::size_t j = 0; j < ex.panel.size(); ++j) {
            const domain::Tool* tool = ex.panel[j];
            const bool valid = tool->supports(ex.query->task) && !ex.predictions[j]->is_null;
            if (!valid) {
                slot_rows[i].emplace_back(npos, npos);
                continue;
            }
            if (auto it = seen.find(tool); it != seen.end()) {
                slot_rows[i].push_back(it->second);
                continue;
            }
            const GroupKey key{tool, ex.task->id};
            auto [git, inserted] = group_index.emplace(key, groups.size());
            if (inserted) {
                groups.push_back(key);
                group_examples.emplace_back();
                group_predictions.emplace_back();
            }
            const std::size_t g = git->second;
            const std::pair<std::size_t, std::size_t> row{g, group_examples[g].size()};
            group_examples[g].push_back(i);
            group_predictions[g].push_back(ex.predictions[j]);
            seen.emplace(tool, row);
            slot_rows[i].push_back(row);
        }
    }
    if (groups.empty()) throw NoValidCandidate("no valid tool in any panel of the batch");

    std::vector<std::size_t> group_offset(groups.size());
    std::size_t total_rows = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        group_offset[g] = total_rows;
        total_rows += group_examples[g].size();
    }

    std::vector<Var> psi_blocks;
    std::vector<long> row_example;
    Tensor slots({total_rows, config_.slot_width});
    Tensor metadata({total_rows, config_.metadata_dim});
    std::size_t r = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto [tool, task_id] = groups[g];
        const domain::TaskInfo& task = *batch[group_examples[g].front()].task;
        auto ref_it = tool->references.find(task_id);
        if (ref_it == tool->references.end()) {
            throw EmptyReferenceSet("tool " + std::to_string(tool->id) + " has no reference set for task " +
                                    std::to_string(task_id));
        }
        ToolDescriptor desc = describe_tool(task, ref_it->second);
        std::vector<long> rows(group_examples[g].begin(), group_examples[g].end());
        psi_blocks.push_back(attend(gather_rows(query_proj, rows), desc.keys, desc.values));
        for (std::size_t k = 0; k < group_examples[g].size(); ++k, ++r) {
            row_example.push_back(static_cast<long>(group_examples[g][k]));
            const auto s = domain::prediction_slot(*group_predictions[g][k], task.space, config_.slot_width);
            std::copy(s.begin(), s.end(), slots.data().begin() + static_cast<std::ptrdiff_t>(r * config_.slot_width));
            for (std::size_t m = 0; m < std::min(config_.metadata_dim, tool->metadata.size()); ++m)
                metadata.at(r, m) = tool->metadata[m];
        }
    }

    Var psi = vcat(psi_blocks);
    Var u_rows = gather_rows(u, row_example);
    Var scores = score(u_rows, psi, tape_.constant(std::move(slots)), tape_.constant(std::move(metadata)));
    Var cover = coverage(u_rows, psi);

    std::vector<ExampleGraph> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t m = batch[i].panel.size();
        ExampleGraph eg;
        std::vector<long> idx(m, -1);
        std::vector<long> cover_idx;
        eg.mask.assign(m, false);
        for (std::size_t j = 0; j < m; ++j) {
            const auto [g, pos] = slot_rows[i][j];
            if (g == npos) continue;
            idx[j] = static_cast<long>(group_offset[g] + pos);
            eg.mask[j] = true;
            eg.valid_slots.push_back(j);
            cover_idx.push_back(idx[j]);
        }
        eg.scores = reshape(gather_rows(scores, idx), {m});
        eg.probs = masked_softmax(eg.scores, eg.mask);
        if (!cover_idx.empty()) eg.coverage = gather_rows(cover, cover_idx);
        out.push_back(std::move(eg));
    }
    return out;
}

std::vector<double> encode_query(const SelectorParams& params, const SelectorConfig& config, const domain::Query& query) {
    Tape tape;
    SelectorGraph graph(tape, params, config);
    const domain::Query* qs[] = {&query};
    const Tensor& u = graph.encode_queries(qs).value();
    return {u.data().begin(), u.data().end()};
}

std::vector<double> cross_attend(const SelectorParams& params, const SelectorConfig& config,
                                 const domain::TaskInfo& task, const domain::ReferenceSet& refs,
                                 std::span<const double> u) {
    Tape tape;
    SelectorGraph graph(tape, params, config);
    ToolDescriptor desc = graph.describe_tool(task, refs);
    Var u_row = tape.constant(Tensor::matrix(1, u.size(), {u.begin(), u.end()}));
    const Tensor& psi = graph.cross_attend(u_row, desc).value();
    return {psi.data().begin(), psi.data().end()};
}

double score(const SelectorParams& params, const SelectorConfig& config, std::span<const double> u,
             std::span<const double> psi, std::span<const double> slot, std::span<const double> metadata) {
    if (slot.size() != config.slot_width) {
        throw DimensionError("prediction slot has width " + std::to_string(slot.size()) + ", expected " +
                             std::to_string(config.slot_width));
    }
    Tape tape;
    SelectorGraph graph(tape, params, config);
    auto row = [&](std::span<const double> v) { return tape.constant(Tensor::matrix(1, v.size(), {v.begin(), v.end()})); };
    return graph.score(row(u), row(psi), row(slot), row(metadata)).value()[0];
}

double coverage(const SelectorParams& params, const SelectorConfig& config, std::span<const double> u,
                std::span<const double> psi) {
    Tape tape;
    SelectorGraph graph(tape, params, config);
    auto row = [&](std::span<const double> v) { return tape.constant(Tensor::matrix(1, v.size(), {v.begin(), v.end()})); };
    return graph.coverage(row(u), row(psi)).value()[0];
}

std::vector<SelectionDistribution> select_batch(const SelectorParams& params, const SelectorConfig& config,
                                                std::span<const RoutingExample> batch) {
    Tape tape;
    SelectorGraph graph(tape, params, config);
    auto graphs = graph.build(batch);
    std::vector<SelectionDistribution> out;
    out.reserve(graphs.size());
    for (auto& eg : graphs) {
        SelectionDistribution d;
        const Tensor& s = eg.scores.value();
        const Tensor& p = eg.probs.value();
        d.scores.assign(s.data().begin(), s.data().end());
        d.probs.assign(p.data().begin(), p.data().end());
        d.mask = eg.mask;
        // Masked slots carry probability 0 and never win against a valid slot.
        std::size_t best = eg.valid_slots.front();
        for (std::size_t j : eg.valid_slots)
            if (d.probs[j] > d.probs[best]) best = j;
        d.selected = best;
        out.push_back(std::move(d));
    }
    return out;
}

SelectionDistribution select(const SelectorParams& params, const SelectorConfig& config, const RoutingExample& example) {
    return select_batch(params, config, std::span(&example, 1)).front();
}

} // namespace toolselect::anp
