#pragma once

// Dense float64 tensors and a tape-based reverse-mode differentiation engine.
//
// Every op records its output on a Tape together with a closure that pushes
// the output gradient back to its inputs. Shapes are always explicit; the
// only broadcast is a row-vector bias added to every row of a matrix.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "toolselect/rng.hpp"

namespace toolselect::diffcore {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Tensor vector(std::vector<double> data);
    static Tensor scalar(double value);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    /// Rows/cols of a rank-2 tensor. A rank-1 tensor is treated as one row.
    std::size_t rows() const;
    std::size_t cols() const;

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }

    bool requires_grad = false;

    bool all_finite() const noexcept;
    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

class Tape;

/// Handle to a node on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    struct Node {
        const char* op = "";
        Tensor value;
        Tensor grad;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool needs_grad = false;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Records a value that is never differentiated.
    Var constant(Tensor value);

    /// Records a trainable tensor. Registering the same tensor twice returns
    /// the existing leaf so gradients from every use accumulate in one place.
    Var parameter(const Tensor& param);

    /// Appends an op node. `backward` receives the tape and this node's id.
    Var push(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

    void backward(Var root);

    const Node& node(std::size_t id) const { return nodes_[id]; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Gradient buffer of `id`, allocated (zeroed) on first access.
    Tensor& grad_buffer(std::size_t id);
    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

    /// Gradient of a registered parameter after backward(). Tensors that were
    /// never registered or never reached from the root get zeros.
    Tensor grad_of(const Tensor& param) const;

    bool training = false;

private:
    std::vector<Node> nodes_;
    std::unordered_map<const Tensor*, std::size_t> params_;
    bool backward_done_ = false;
};

// Linear algebra.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Adds a [1 x c] row to every row of an [r x c] matrix.
Var add_row(Var a, Var bias);

// Structure.
Var hcat(std::span<const Var> parts);
Var vcat(std::span<const Var> parts);
/// Row gather. Index -1 yields a row of zeros.
Var gather_rows(Var a, std::span<const long> rows);
Var reshape(Var a, Shape shape);

// Elementwise.
Var gelu(Var a);
Var sigmoid(Var a);
Var square(Var a);
/// log(max(a, eps)); the gradient is zero where the clamp is active.
Var log_clamped(Var a, double eps);
/// Elementwise product with a constant tensor (dropout masks, loss weights).
Var mul_const(Var a, const Tensor& c);

// Reductions.
Var sum(Var a);
Var mean(Var a);

// Normalizations.
Var row_softmax(Var a);
/// Softmax over the flattened entries of `scores`, restricted to `mask`.
/// Masked entries are exactly zero. Throws NoValidCandidate when no entry is valid.
Var masked_softmax(Var scores, const std::vector<bool>& mask);

/// Single-head scaled dot-product attention:
/// row i of the result is softmax(query_rows[i] . keys^T / sqrt(dk)) . values.
Var attend(Var query_rows, Var keys, Var values);

/// Inverted dropout mask with keep probability 1-rate, scaled by 1/(1-rate).
Tensor dropout_mask(const Shape& shape, double rate, Rng& rng);

Tensor gelu_value(const Tensor& x);

/// Objective evaluated on a fresh tape; `leaves` are the registered params in order.
using ScalarFn = std::function<Var(Tape&, std::span<const Var> leaves)>;

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t coordinates = 0;
    std::string worst;
};

/// Central finite-difference check of the analytic gradient of `f`.
/// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
/// `max_coords_per_tensor` = 0 checks every coordinate; otherwise an evenly
/// strided subset of that size is checked in each tensor.
GradCheckResult grad_check(const ScalarFn& f, std::span<Tensor* const> params, double h,
                           std::size_t max_coords_per_tensor = 0);

} // namespace toolselect::diffcore
