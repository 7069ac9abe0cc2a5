#pragma once

// Attentive-neural-process tool selector.
//
// A query is fused into u = U[phi_x(x) || phi_q(q)]. Each candidate tool is
// described by its reference set: every element (x_b, y_b, m_b) becomes
// t_b = W_c[phi_x(x_b) || e_t(y_b) || rho_m(m_b)], the rows are mixed by
// self-attention, and the query attends over them with keys W_K phi_x(x_b)
// and values W_V t~_b. The resulting descriptor psi is scored together with
// u, the tool's aligned prediction on the query and the tool metadata by a
// two-layer GELU MLP. Scores become a masked softmax over the panel.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "toolselect/diffcore.hpp"
#include "toolselect/domain.hpp"
#include "toolselect/rng.hpp"

namespace toolselect::anp {

using diffcore::Tape;
using diffcore::Tensor;
using diffcore::Var;

struct SelectorConfig {
    std::size_t d_x = 16;  // raw image-feature width
    std::size_t d_q = 8;   // raw instruction-feature width
    std::size_t d_xp = 16; // phi_x output
    std::size_t d_qp = 8;  // phi_q output
    std::size_t d_u = 32;
    std::size_t d = 32;    // reference embedding
    std::size_t d_k = 16;
    std::size_t d_v = 32;
    std::size_t hidden = 512;
    double dropout = 0.1;
    std::size_t ref_size = 16;
    std::size_t label_embed_dim = 8;
    std::size_t rho_dim = 8;
    std::size_t slot_width = 6;
    std::size_t metadata_dim = 2;
    /// Canonical label count per task; 0 marks a non-categorical task.
    std::vector<std::size_t> label_counts;

    /// Throws ContractViolation when a dimension is zero or dropout is out of range.
    void validate() const;
};

struct Linear {
    Tensor w;  // [in x out]
    Tensor b;  // [1 x out]
};

struct SelectorParams {
    Linear phi_x;
    Linear phi_q;
    Linear fuse;                     // U
    std::vector<Tensor> label_embed; // per task, empty for non-categorical tasks
    Linear rho_m;
    Linear ref_proj;                 // W_c
    Tensor self_q, self_k, self_v;
    Tensor cross_q, cross_k, cross_v;
    Linear head_hidden, head_out;    // g_theta
    Linear cov_hidden, cov_out;      // coverage head h

    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;
    std::vector<Tensor*> tensors();
    std::size_t parameter_count() const;
};

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
SelectorParams init_params(const SelectorConfig& config, std::uint64_t seed);

/// Parameters rounded to float32 precision (the checkpoint precision).
SelectorParams quantized_f32(const SelectorParams& params);

/// Digest of every parameter bit pattern, in declaration order.
std::uint64_t params_digest(const SelectorParams& params);

struct SelectionDistribution {
    std::vector<double> scores;
    std::vector<bool> mask;
    std::vector<double> probs;
    std::size_t selected = 0;
};

/// One routing decision: query, its task, the panel and each panel tool's
/// aligned prediction on the query.
struct RoutingExample {
    const domain::Query* query = nullptr;
    const domain::TaskInfo* task = nullptr;
    std::vector<const domain::Tool*> panel;
    std::vector<const domain::AlignedPrediction*> predictions;
};

/// Reference set encoded for one (tool, task): T, the raw key features
/// phi_x(x_b) and, after attention, the value rows.
struct ReferenceEncoding {
    Var embeddings;  // T   [B x d]
    Var key_inputs;  // phi_x(x_b) [B x d_xp]
};

struct ToolDescriptor {
    Var keys;    // W_K phi_x(x_b)  [B x d_k]
    Var values;  // W_V T~          [B x d_v]
};

struct ExampleGraph {
    Var scores;                       // [m]
    Var probs;                        // [m]
    std::vector<bool> mask;
    std::vector<std::size_t> valid_slots;
    Var coverage;                     // [valid x 1], aligned with valid_slots
};

/// Builds selector graphs on a tape. `dropout_rng` is consulted only when
/// the tape is in training mode.
class SelectorGraph {
public:
    SelectorGraph(Tape& tape, const SelectorParams& params, const SelectorConfig& config, Rng* dropout_rng = nullptr);

    Var linear(Var x, const Linear& layer);
    Var phi_x(Var x);
    Var encode_queries(std::span<const domain::Query* const> queries);

    ReferenceEncoding encode_reference_set(const domain::TaskInfo& task, const domain::ReferenceSet& refs);
    Var self_attend(Var embeddings);
    ToolDescriptor describe_tool(const domain::TaskInfo& task, const domain::ReferenceSet& refs);
    /// psi rows for each query row: attention of W_Q u over the tool's references.
    Var cross_attend(Var u_rows, const ToolDescriptor& tool);
    Var score(Var u_rows, Var psi_rows, Var slot_rows, Var metadata_rows);
    Var coverage(Var u_rows, Var psi_rows);

    std::vector<ExampleGraph> build(std::span<const RoutingExample> batch);

    Tape& tape() { return tape_; }

private:
    Var param(const Tensor& t) { return tape_.parameter(t); }
    Var maybe_dropout(Var x);

    Tape& tape_;
    const SelectorParams& params_;
    const SelectorConfig& config_;
    Rng* dropout_rng_;
};

// Inference helpers on plain values (dropout off).
std::vector<double> encode_query(const SelectorParams& params, const SelectorConfig& config, const domain::Query& query);
std::vector<double> cross_attend(const SelectorParams& params, const SelectorConfig& config,
                                 const domain::TaskInfo& task, const domain::ReferenceSet& refs,
                                 std::span<const double> u);
double score(const SelectorParams& params, const SelectorConfig& config, std::span<const double> u,
             std::span<const double> psi, std::span<const double> slot, std::span<const double> metadata);
double coverage(const SelectorParams& params, const SelectorConfig& config, std::span<const double> u,
                std::span<const double> psi);

/// Scores every panel slot and returns the masked selection distribution.
/// Throws NoValidCandidate when no slot is valid.
SelectionDistribution select(const SelectorParams& params, const SelectorConfig& config, const RoutingExample& example);

/// Batched inference; one distribution per example.
std::vector<SelectionDistribution> select_batch(const SelectorParams& params, const SelectorConfig& config,
                                                std::span<const RoutingExample> batch);

} // namespace toolselect::anp
