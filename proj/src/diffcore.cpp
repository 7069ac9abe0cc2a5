#include "toolselect/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "toolselect/errors.hpp"

namespace toolselect::diffcore {

namespace {

std::size_t product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + shape_string(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

Tape& tape_of(Var a) {
    if (a.tape == nullptr) throw ContractViolation("Var is not attached to a tape");
    return *a.tape;
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[m x k] += a[m x n] * b[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            c[i * k + p] += acc;
        }
    }
}

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class Fwd, class Deriv>
Var unary(const char* op, Var a, Fwd fwd, Deriv deriv) {
    Tape& tape = tape_of(a);
    const Tensor& x = a.value();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
    return tape.push(op, std::move(out), {a.id}, [deriv](Tape& t, std::size_t self) {
        const std::size_t in = t.node(self).inputs[0];
        if (!t.needs_grad(in)) return;
        const Tensor& x = t.node(in).value;
        const Tensor& y = t.node(self).value;
        const Tensor& g = t.node(self).grad;
        Tensor& gx = t.grad_buffer(in);
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * deriv(x[i], y[i]);
    });
}

} // namespace

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (product(shape_) != data_.size()) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_string(shape_));
    }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::vector(std::vector<double> data) {
    const std::size_t n = data.size();
    return Tensor({n}, std::move(data));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

std::size_t Tensor::rows() const { return rank() == 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const { return rank() == 2 ? shape_[1] : data_.size(); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

const Tensor& Var::value() const { return tape->node(id).value; }

Var Tape::constant(Tensor value) {
    Node n;
    n.op = "const";
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(const Tensor& param) {
    if (auto it = params_.find(&param); it != params_.end()) return Var{this, it->second};
    Node n;
    n.op = "param";
    n.value = param;
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    params_.emplace(&param, nodes_.size() - 1);
    return Var{this, nodes_.size() - 1};
}

Var Tape::push(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.needs_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].needs_grad; });
    n.inputs = std::move(inputs);
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

void Tape::backward(Var root) {
    if (root.tape != this) throw ContractViolation("backward: root belongs to another tape");
    const Tensor& v = nodes_[root.id].value;
    if (v.size() != 1) {
        throw ContractViolation("backward: root must be scalar, got shape " + shape_string(v.shape()));
    }
    if (!std::isfinite(v[0])) throw NonFiniteError("backward: root value is not finite");
    if (backward_done_) throw ContractViolation("backward: tape already consumed");
    backward_done_ = true;
    grad_buffer(root.id)[0] = 1.0;
    for (std::size_t id = root.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.needs_grad || !n.backward || n.grad.size() == 0) continue;
        n.backward(*this, id);
    }
}

Tensor Tape::grad_of(const Tensor& param) const {
    auto it = params_.find(&param);
    if (it == params_.end()) return Tensor(param.shape());
    const Node& n = nodes_[it->second];
    if (n.grad.size() != n.value.size()) return Tensor(param.shape());
    return n.grad;
}

Var matmul(Var a, Var b) {
    Tape& tape = tape_of(a);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    require_matrix(x, "matmul");
    require_matrix(y, "matmul");
    const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
    if (y.rows() != k) {
        throw DimensionError("matmul: inner dimensions disagree " + shape_string(x.shape()) + " x " +
                             shape_string(y.shape()));
    }
    Tensor out({m, n});
    gemm_nn(x.data().data(), y.data().data(), out.data().data(), m, k, n);
    return tape.push("matmul", std::move(out), {a.id, b.id}, [m, k, n](Tape& t, std::size_t self) {
        const auto ia = t.node(self).inputs[0];
        const auto ib = t.node(self).inputs[1];
        const double* g = t.node(self).grad.data().data();
        if (t.needs_grad(ia)) {
            // dA = dC . B^T
            gemm_nt(g, t.node(ib).value.data().data(), t.grad_buffer(ia).data().data(), m, n, k);
        }
        if (t.needs_grad(ib)) {
            // dB = A^T . dC
            gemm_tn(t.node(ia).value.data().data(), g, t.grad_buffer(ib).data().data(), m, k, n);
        }
    });
}

Var transpose(Var a) {
    Tape& tape = tape_of(a);
    const Tensor& x = a.value();
    require_matrix(x, "transpose");
    const std::size_t r = x.rows(), c = x.cols();
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(j, i) = x.at(i, j);
    return tape.push("transpose", std::move(out), {a.id}, [r, c](Tape& t, std::size_t self) {
        const auto in = t.node(self).inputs[0];
        const Tensor& g = t.node(self).grad;
        Tensor& gx = t.grad_buffer(in);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gx.at(i, j) += g.at(j, i);
    });
}

namespace {

Var binary_elementwise(const char* op, Var a, Var b, double sign_b, bool product) {
    Tape& tape = tape_of(a);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    require_same_shape(x, y, op);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = product ? x[i] * y[i] : x[i] + sign_b * y[i];
    return tape.push(op, std::move(out), {a.id, b.id}, [sign_b, product](Tape& t, std::size_t self) {
        const auto ia = t.node(self).inputs[0];
        const auto ib = t.node(self).inputs[1];
        const Tensor& g = t.node(self).grad;
        if (t.needs_grad(ia)) {
            Tensor& ga = t.grad_buffer(ia);
            const Tensor& yb = t.node(ib).value;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += product ? g[i] * yb[i] : g[i];
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            const Tensor& xa = t.node(ia).value;
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += product ? g[i] * xa[i] : sign_b * g[i];
        }
    });
}

} // namespace

Var add(Var a, Var b) { return binary_elementwise("add", a, b, 1.0, false); }
Var sub(Var a, Var b) { return binary_elementwise("sub", a, b, -1.0, false); }
Var mul(Var a, Var b) { return binary_elementwise("mul", a, b, 0.0, true); }

Var scale(Var a, double s) {
    return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_row(Var a, Var bias) {
    Tape& tape = tape_of(a);
    const Tensor& x = a.value();
    const Tensor& b = bias.value();
    require_matrix(x, "add_row");
    const std::size_t r = x.rows(), c = x.cols();
    if (b.size() != c || b.rows() != 1) {
        throw DimensionError("add_row: bias " + shape_string(b.shape()) + " does not match rows of " +
                             shape_string(x.shape()));
    }
    Tensor out = x;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) += b[j];
    return tape.push("add_row", std::move(out), {a.id, bias.id}, [r, c](Tape& t, std::size_t self) {
        const auto ia = t.node(self).inputs[0];
        const auto ib = t.node(self).inputs[1];
        const Tensor& g = t.node(self).grad;
        if (t.needs_grad(ia)) {
            Tensor& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.needs_grad(ib)) {
            Tensor& gb = t.grad_buffer(ib);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gb[j] += g.at(i, j);
        }
    });
}

Var hcat(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("hcat: no inputs");
    Tape& tape = tape_of(parts[0]);
    const std::size_t r = parts[0].value().rows();
    std::vector<std::size_t> widths;
    std::vector<std::size_t> ids;
    std::size_t total = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        if (v.rows() != r) {
            throw DimensionError("hcat: row count mismatch " + shape_string(parts[0].shape()) + " vs " +
                                 shape_string(v.shape()));
        }
        widths.push_back(v.cols());
        ids.push_back(p.id);
        total += v.cols();
    }
    Tensor out({r, total});
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = parts[k].value();
        for (std::size_t i = 0; i < r; ++i)
            std::copy_n(v.data().data() + i * widths[k], widths[k], out.data().data() + i * total + off);
        off += widths[k];
    }
    return tape.push("hcat", std::move(out), std::move(ids), [widths, r, total](Tape& t, std::size_t self) {
        const Tensor& g = t.node(self).grad;
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
            const auto in = t.node(self).inputs[k];
            if (t.needs_grad(in)) {
                Tensor& gi = t.grad_buffer(in);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < widths[k]; ++j) gi[i * widths[k] + j] += g[i * total + off + j];
            }
            off += widths[k];
        }
    });
}

Var vcat(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("vcat: no inputs");
    Tape& tape = tape_of(parts[0]);
    const std::size_t c = parts[0].value().cols();
    std::vector<std::size_t> ids;
    std::vector<std::size_t> sizes;
    std::size_t rows = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        if (v.cols() != c) {
            throw DimensionError("vcat: column count mismatch " + shape_string(parts[0].shape()) + " vs " +
                                 shape_string(v.shape()));
        }
        ids.push_back(p.id);
        sizes.push_back(v.size());
        rows += v.rows();
    }
    Tensor out({rows, c});
    std::size_t off = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
        off += v.size();
    }
    return tape.push("vcat", std::move(out), std::move(ids), [sizes](Tape& t, std::size_t self) {
        const Tensor& g = t.node(self).grad;
        std::size_t off = 0;
        for (std::size_t k = 0; k < sizes.size(); ++k) {
            const auto in = t.node(self).inputs[k];
            if (t.needs_grad(in)) {
                Tensor& gi = t.grad_buffer(in);
                for (std::size_t i = 0; i < sizes[k]; ++i) gi[i] += g[off + i];
            }
            off += sizes[k];
        }
    });
}

Var gather_rows(Var a, std::span<const long> rows) {
    Tape& tape = tape_of(a);
    const Tensor& x = a.value();
    require_matrix(x, "gather_rows");
    const std::size_t c = x.cols();
    const long n = static_cast<long>(x.rows());
    std::vector<long> idx(rows.begin(), rows.end());
    Tensor out({idx.size(), c});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < -1 || idx[i] >= n) {
            throw DimensionError("gather_rows: index " + std::to_string(idx[i]) + " out of range for " +
                                 shape_string(x.shape()));
        }
        if (idx[i] >= 0) std::copy_n(x.data().data() + idx[i] * static_cast<long>(c), c, out.data().data() + i * c);
    }
    return tape.push("gather_rows", std::move(out), {a.id}, [idx, c](Tape& t, std::size_t self) {
        const auto in = t.node(self).inputs[0];
        const Tensor& g = t.node(self).grad;
        Tensor& gx = t.grad_buffer(in);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0) continue;
            for (std::size_t j = 0; j < c; ++j) gx[static_cast<std::size_t>(idx[i]) * c + j] += g[i * c + j];
        }
    });
}

Var reshape(Var a, Shape shape) {
    Tape& tape = tape_of(a);
    const Tensor& x = a.value();
    if (product(shape) != x.size()) {
        throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
    }
    Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
    return tape.push("reshape", std::move(out), {a.id}, [](Tape& t, std::size_t self) {
        const auto in = t.node(self).inputs[0];
        const Tensor& g = t.node(self).grad;
        Tensor& gx = t.grad_buffer(in);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_deriv(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double sigmoid_scalar(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

Tensor gelu_value(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = gelu_scalar(x[i]);
    return out;
}

Var gelu(Var a) {
    return unary("gelu", a, gelu_scalar, [](double x, double) { return gelu_deriv(x); });
}

Var sigmoid(Var a) {
    return unary("sigmoid", a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var square(Var a) {
    return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var log_clamped(Var a, double eps) {
    return unary(
        "log", a, [eps](double x) { return std::log(std::max(x, eps)); },
        [eps](double x, double) { return x > eps ? 1.0 / x : 0.0; });
}

Var mul_const(Var a, const Tensor& c) {
    Tape& tape = tape_of(a);
    const Tensor& x = a.value();
    require_same_shape(x, c, "mul_const");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * c[i];
    return tape.push("mul_const", std::move(out), {a.id}, [c](Tape& t, std::size_t self) {
        const auto in = t.node(self).inputs[0];
        const Tensor& g = t.node(self).grad;
        Tensor& gx = t.grad_buffer(in);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * c[i];
    });
}

Var sum(Var a) {
    Tape& tape = tape_of(a);
    const Tensor& x = a.value();
    double s = 0.0;
    for (double v : x.data()) s += v;
    return tape.push("sum", Tensor::scalar(s), {a.id}, [](Tape& t, std::size_t self) {
        const auto in = t.node(self).inputs[0];
        const double g = t.node(self).grad[0];
        for (double& v : t.grad_buffer(in).data()) v += g;
    });
}

Var mean(Var a) {
    const double n = static_cast<double>(a.value().size());
    return scale(sum(a), 1.0 / n);
}

Var row_softmax(Var a) {
    Tape& tape = tape_of(a);
    const Tensor& x = a.value();
    require_matrix(x, "row_softmax");
    const std::size_t r = x.rows(), c = x.cols();
    Tensor out({r, c});
    for (std::size_t i = 0; i < r; ++i) {
        double mx = x.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += (out.at(i, j) = std::exp(x.at(i, j) - mx));
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) /= z;
    }
    return tape.push("row_softmax", std::move(out), {a.id}, [r, c](Tape& t, std::size_t self) {
        const auto in = t.node(self).inputs[0];
        const Tensor& y = t.node(self).value;
        const Tensor& g = t.node(self).grad;
        Tensor& gx = t.grad_buffer(in);
        for (std::size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += g.at(i, j) * y.at(i, j);
            for (std::size_t j = 0; j < c; ++j) gx.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
        }
    });
}

Var masked_softmax(Var scores, const std::vector<bool>& mask) {
    Tape& tape = tape_of(scores);
    const Tensor& x = scores.value();
    if (mask.size() != x.size()) {
        throw DimensionError("masked_softmax: mask length " + std::to_string(mask.size()) +
                             " does not match scores " + shape_string(x.shape()));
    }
    if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
        throw NoValidCandidate("masked_softmax: every entry is masked");
    }
    double mx = -INFINITY;
    for (std::size_t j = 0; j < x.size(); ++j)
        if (mask[j]) mx = std::max(mx, x[j]);
    Tensor out(x.shape());
    double z = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j)
        if (mask[j]) z += (out[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = mask[j] ? out[j] / z : 0.0;
    return tape.push("masked_softmax", std::move(out), {scores.id}, [mask](Tape& t, std::size_t self) {
        const auto in = t.node(self).inputs[0];
        const Tensor& y = t.node(self).value;
        const Tensor& g = t.node(self).grad;
        Tensor& gx = t.grad_buffer(in);
        double dot = 0.0;
        for (std::size_t j = 0; j < y.size(); ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < y.size(); ++j)
            if (mask[j]) gx[j] += y[j] * (g[j] - dot);
    });
}

Var attend(Var query_rows, Var keys, Var values) {
    const Tensor& q = query_rows.value();
    const Tensor& k = keys.value();
    const Tensor& v = values.value();
    require_matrix(q, "attend");
    require_matrix(k, "attend");
    require_matrix(v, "attend");
    if (k.rows() == 0 || v.rows() == 0) throw EmptyReferenceSet("attend: no keys to attend over");
    if (k.rows() != v.rows()) {
        throw DimensionError("attend: keys " + shape_string(k.shape()) + " and values " + shape_string(v.shape()) +
                             " disagree on row count");
    }
    if (q.cols() != k.cols()) {
        throw DimensionError("attend: query " + shape_string(q.shape()) + " and keys " + shape_string(k.shape()) +
                             " disagree on key dimension");
    }
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(k.cols()));
    Var logits = scale(matmul(query_rows, transpose(keys)), inv_sqrt_dk);
    return matmul(row_softmax(logits), values);
}

Tensor dropout_mask(const Shape& shape, double rate, Rng& rng) {
    Tensor m(shape, 1.0);
    if (rate <= 0.0) return m;
    const double keep = 1.0 - rate;
    for (double& v : m.data()) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
    return m;
}

GradCheckResult grad_check(const ScalarFn& f, std::span<Tensor* const> params, double h,
                           std::size_t max_coords_per_tensor) {
    if (!(h > 0.0)) throw ContractViolation("grad_check: step must be positive");

    auto evaluate = [&](bool with_grad, std::vector<Tensor>* grads) {
        Tape tape;
        std::vector<Var> leaves;
        leaves.reserve(params.size());
        for (Tensor* p : params) leaves.push_back(tape.parameter(*p));
        Var out = f(tape, leaves);
        const double value = out.value()[0];
        if (with_grad) {
            tape.backward(out);
            for (Tensor* p : params) grads->push_back(tape.grad_of(*p));
        }
        return value;
    };

    std::vector<Tensor> analytic;
    evaluate(true, &analytic);

    GradCheckResult result;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = *params[pi];
        const std::size_t n = p.size();
        std::size_t stride = 1;
        if (max_coords_per_tensor > 0 && n > max_coords_per_tensor) stride = (n + max_coords_per_tensor - 1) / max_coords_per_tensor;
        for (std::size_t i = 0; i < n; i += stride) {
            const double orig = p[i];
            p[i] = orig + h;
            const double fp = evaluate(false, nullptr);
            p[i] = orig - h;
            const double fm = evaluate(false, nullptr);
            p[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[pi][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double err = std::abs(a - numeric) / denom;
            ++result.coordinates;
            if (err > result.max_rel_err) {
                result.max_rel_err = err;
                std::ostringstream os;
                os << "param " << pi << " coord " << i << " analytic " << a << " numeric " << numeric;
                result.worst = os.str();
            }
        }
    }
    return result;
}

} // namespace toolselect::diffcore
