#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tensor.hpp"

namespace varsep {

// Define-by-run reverse-mode automatic differentiation. Values are computed
// eagerly as nodes are recorded; every result is checked for finiteness so a
// numerical blow-up is reported at the op that produced it.

struct ValueId {
    std::uint32_t index = 0;
};

enum class OpKind {
    Leaf,
    Affine,   // x * W + b with the bias broadcast across rows
    Add,
    Sub,
    Mul,
    MatMul,
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Square,
    Concat,   // along the last axis
    Slice,    // along the last axis
    Sum,
    Mean,
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Affine: return "affine";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::MatMul: return "matmul";
        case OpKind::Relu: return "relu";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Tanh: return "tanh";
        case OpKind::Exp: return "exp";
        case OpKind::Square: return "square";
        case OpKind::Concat: return "concat";
        case OpKind::Slice: return "slice";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
    }
    return "?";
}

// Gradients of a scalar output with respect to the tape's leaves.
class GradientSet {
  public:
    bool contains(ValueId id) const { return grads_.count(id.index) != 0; }

    const Tensor& at(ValueId id) const {
        auto it = grads_.find(id.index);
        if (it == grads_.end())
            throw ContractError("GradientSet: no gradient recorded for node " +
                                std::to_string(id.index));
        return it->second;
    }

    void insert(ValueId id, Tensor g) { grads_.emplace(id.index, std::move(g)); }

    std::size_t size() const { return grads_.size(); }

  private:
    std::unordered_map<std::uint32_t, Tensor> grads_;
};

namespace detail {

// c (m,n) += a (m,k) * b (k,n)
inline void matmul_nn(const double* a, const double* b, double* c, std::size_t m,
                      std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c (m,k) += a (m,n) * b^T where b is (k,n)
inline void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
                      std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        double* crow = c + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

// c (k,n) += a^T * b where a is (m,k), b is (m,n)
inline void matmul_tn(const double* a, const double* b, double* c, std::size_t m,
                      std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            double av = arow[p];
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

class Tape {
  public:
    ValueId leaf(Tensor value, bool requires_grad = true) {
        return push(OpKind::Leaf, {}, std::move(value), requires_grad);
    }

    ValueId constant(Tensor value) { return leaf(std::move(value), false); }

    ValueId constant(double v) { return constant(Tensor::scalar(v)); }

    // x (rows..., in) * W (in, out) + b (numel out), bias broadcast per row.
    ValueId affine(ValueId x, ValueId w, ValueId b) {
        const Tensor& xv = val(x);
        const Tensor& wv = val(w);
        const Tensor& bv = val(b);
        if (wv.rank() != 2)
            fail_shape("affine: weight must be rank 2, got " + shape_str(wv.shape));
        std::size_t in = wv.shape[0], out = wv.shape[1];
        if (xv.rank() < 1 || xv.last_extent() != in)
            fail_shape("affine: input " + shape_str(xv.shape) + " does not end in " +
                       std::to_string(in));
        if (bv.numel() != out)
            fail_shape("affine: bias has " + std::to_string(bv.numel()) +
                       " elements, expected " + std::to_string(out));
        std::size_t rows = xv.leading();
        Shape oshape = xv.shape;
        oshape.back() = out;
        Tensor y(oshape);
        for (std::size_t r = 0; r < rows; ++r) {
            double* yrow = y.data.data() + r * out;
            for (std::size_t j = 0; j < out; ++j) yrow[j] = bv.data[j];
        }
        detail::matmul_nn(xv.data.data(), wv.data.data(), y.data.data(), rows, in, out);
        return push(OpKind::Affine, {x.index, w.index, b.index}, std::move(y),
                    any_grad({x, w, b}));
    }

    ValueId add(ValueId a, ValueId b) { return binary(OpKind::Add, a, b); }
    ValueId sub(ValueId a, ValueId b) { return binary(OpKind::Sub, a, b); }
    ValueId mul(ValueId a, ValueId b) { return binary(OpKind::Mul, a, b); }

    ValueId matmul(ValueId a, ValueId b) {
        const Tensor& av = val(a);
        const Tensor& bv = val(b);
        if (av.rank() != 2 || bv.rank() != 2)
            fail_shape("matmul: need rank-2 operands, got " + shape_str(av.shape) +
                       " and " + shape_str(bv.shape));
        if (av.shape[1] != bv.shape[0])
            fail_shape("matmul: inner extents differ, " + shape_str(av.shape) + " vs " +
                       shape_str(bv.shape));
        Tensor c(Shape{av.shape[0], bv.shape[1]});
        detail::matmul_nn(av.data.data(), bv.data.data(), c.data.data(), av.shape[0],
                          av.shape[1], bv.shape[1]);
        return push(OpKind::MatMul, {a.index, b.index}, std::move(c), any_grad({a, b}));
    }

    ValueId relu(ValueId x) {
        return unary(OpKind::Relu, x, [](double v) { return v > 0.0 ? v : 0.0; });
    }

    ValueId sigmoid(ValueId x) {
        return unary(OpKind::Sigmoid, x,
                     [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    }

    ValueId tanh(ValueId x) {
        return unary(OpKind::Tanh, x, [](double v) { return std::tanh(v); });
    }

    ValueId exp(ValueId x) {
        return unary(OpKind::Exp, x, [](double v) { return std::exp(v); });
    }

    ValueId square(ValueId x) {
        return unary(OpKind::Square, x, [](double v) { return v * v; });
    }

    ValueId concat(const std::vector<ValueId>& parts) {
        if (parts.empty()) fail_contract("concat: no inputs");
        const Tensor& first = val(parts[0]);
        std::size_t total_last = 0;
        for (ValueId p : parts) {
            const Tensor& tv = val(p);
            if (tv.rank() != first.rank())
                fail_shape("concat: rank mismatch, " + shape_str(first.shape) + " vs " +
                           shape_str(tv.shape));
            for (std::size_t d = 0; d + 1 < first.rank(); ++d)
                if (tv.shape[d] != first.shape[d])
                    fail_shape("concat: leading extents differ, " +
                               shape_str(first.shape) + " vs " + shape_str(tv.shape));
            total_last += tv.last_extent();
        }
        Shape oshape = first.shape;
        oshape.back() = total_last;
        Tensor out(oshape);
        std::size_t rows = first.leading();
        std::size_t offset = 0;
        for (ValueId p : parts) {
            const Tensor& tv = val(p);
            std::size_t width = tv.last_extent();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < width; ++j)
                    out.data[r * total_last + offset + j] = tv.data[r * width + j];
            offset += width;
        }
        std::vector<std::uint32_t> ins;
        bool rg = false;
        for (ValueId p : parts) {
            ins.push_back(p.index);
            rg = rg || node(p).requires_grad;
        }
        return push(OpKind::Concat, std::move(ins), std::move(out), rg);
    }

    // Keeps columns [lo, hi) of the last axis.
    ValueId slice(ValueId x, std::size_t lo, std::size_t hi) {
        const Tensor& xv = val(x);
        std::size_t width = xv.last_extent();
        if (lo >= hi || hi > width)
            fail_shape("slice: range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                       ") invalid for last extent " + std::to_string(width));
        Shape oshape = xv.shape;
        oshape.back() = hi - lo;
        Tensor out(oshape);
        std::size_t rows = xv.leading();
        std::size_t w = hi - lo;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < w; ++j)
                out.data[r * w + j] = xv.data[r * width + lo + j];
        ValueId id = push(OpKind::Slice, {x.index}, std::move(out), node(x).requires_grad);
        nodes_[id.index].lo = lo;
        nodes_[id.index].hi = hi;
        return id;
    }

    ValueId sum(ValueId x) {
        const Tensor& xv = val(x);
        double acc = 0.0;
        for (double v : xv.data) acc += v;
        return push(OpKind::Sum, {x.index}, Tensor::scalar(acc), node(x).requires_grad);
    }

    ValueId mean(ValueId x) {
        const Tensor& xv = val(x);
        double acc = 0.0;
        for (double v : xv.data) acc += v;
        acc /= static_cast<double>(xv.numel());
        return push(OpKind::Mean, {x.index}, Tensor::scalar(acc), node(x).requires_grad);
    }

    const Tensor& value(ValueId id) const { return val(id); }

    std::size_t size() const { return nodes_.size(); }

    // Values feeding every relu node, in recording order. Two evaluations of
    // the same graph can be compared entry by entry to detect an activation
    // kink crossing between them.
    std::vector<double> relu_input_values() const {
        std::vector<double> out;
        for (const Node& n : nodes_)
            if (n.kind == OpKind::Relu)
                for (double v : nodes_[n.inputs[0]].value.data) out.push_back(v);
        return out;
    }

    // Reverse sweep from a scalar output. Returns a gradient for every leaf
    // recorded with requires_grad, zero-filled when the leaf does not reach
    // the output.
    GradientSet gradients(ValueId output) {
        const Tensor& ov = val(output);
        if (ov.numel() != 1)
            fail_contract("gradients: output must be scalar, got shape " +
                          shape_str(ov.shape));
        std::vector<std::optional<Tensor>> grads(nodes_.size());
        grads[output.index] = Tensor::full(ov.shape, 1.0);
        for (std::size_t i = output.index + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!grads[i].has_value() || !n.requires_grad) continue;
            backward_node(n, *grads[i], grads);
        }
        GradientSet set;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const Node& n = nodes_[i];
            if (n.kind != OpKind::Leaf || !n.requires_grad) continue;
            ValueId id{static_cast<std::uint32_t>(i)};
            if (grads[i].has_value())
                set.insert(id, std::move(*grads[i]));
            else
                set.insert(id, Tensor::zeros(n.value.shape));
        }
        return set;
    }

  private:
    struct Node {
        OpKind kind;
        std::vector<std::uint32_t> inputs;
        Tensor value;
        bool requires_grad;
        std::size_t lo = 0, hi = 0;  // slice payload
    };

    std::vector<Node> nodes_;

    const Node& node(ValueId id) const {
        if (id.index >= nodes_.size())
            throw ContractError("tape: node " + std::to_string(id.index) +
                                " out of range");
        return nodes_[id.index];
    }

    const Tensor& val(ValueId id) const { return node(id).value; }

    bool any_grad(std::initializer_list<ValueId> ids) const {
        for (ValueId id : ids)
            if (node(id).requires_grad) return true;
        return false;
    }

    [[noreturn]] void fail_shape(const std::string& msg) const {
        throw ShapeError(msg + " (at node " + std::to_string(nodes_.size()) + ")");
    }

    [[noreturn]] void fail_contract(const std::string& msg) const {
        throw ContractError(msg);
    }

    ValueId push(OpKind kind, std::vector<std::uint32_t> inputs, Tensor value,
                 bool requires_grad) {
        if (!value.all_finite())
            throw NumericError(std::string("non-finite value produced by ") +
                               op_name(kind) + " at node " +
                               std::to_string(nodes_.size()));
        nodes_.push_back(Node{kind, std::move(inputs), std::move(value), requires_grad});
        return ValueId{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    template <typename F>
    ValueId unary(OpKind kind, ValueId x, F&& f) {
        const Tensor& xv = val(x);
        Tensor out(xv.shape);
        for (std::size_t i = 0; i < xv.numel(); ++i) out.data[i] = f(xv.data[i]);
        return push(kind, {x.index}, std::move(out), node(x).requires_grad);
    }

    // Elementwise op; shapes must match exactly (no broadcasting).
    ValueId binary(OpKind kind, ValueId a, ValueId b) {
        const Tensor& av = val(a);
        const Tensor& bv = val(b);
        if (!av.same_shape(bv))
            fail_shape(std::string(op_name(kind)) + ": shape mismatch " +
                       shape_str(av.shape) + " vs " + shape_str(bv.shape));
        Tensor out(av.shape);
        std::size_t n = av.numel();
        for (std::size_t i = 0; i < n; ++i) {
            double x = av.data[i];
            double y = bv.data[i];
            switch (kind) {
                case OpKind::Add: out.data[i] = x + y; break;
                case OpKind::Sub: out.data[i] = x - y; break;
                case OpKind::Mul: out.data[i] = x * y; break;
                default: fail_contract("binary: bad op");
            }
        }
        return push(kind, {a.index, b.index}, std::move(out), any_grad({a, b}));
    }

    Tensor& accum(std::size_t idx, std::vector<std::optional<Tensor>>& grads) {
        if (!grads[idx].has_value()) grads[idx] = Tensor::zeros(nodes_[idx].value.shape);
        return *grads[idx];
    }

    void backward_node(const Node& n, const Tensor& g,
                       std::vector<std::optional<Tensor>>& grads) {
        switch (n.kind) {
            case OpKind::Leaf:
                return;
            case OpKind::Affine: {
                const Node& xn = nodes_[n.inputs[0]];
                const Node& wn = nodes_[n.inputs[1]];
                const Node& bn = nodes_[n.inputs[2]];
                std::size_t in = wn.value.shape[0], out = wn.value.shape[1];
                std::size_t rows = xn.value.leading();
                if (xn.requires_grad) {
                    Tensor& dx = accum(n.inputs[0], grads);
                    detail::matmul_nt(g.data.data(), wn.value.data.data(), dx.data.data(),
                                      rows, out, in);
                }
                if (wn.requires_grad) {
                    Tensor& dw = accum(n.inputs[1], grads);
                    detail::matmul_tn(xn.value.data.data(), g.data.data(), dw.data.data(),
                                      rows, in, out);
                }
                if (bn.requires_grad) {
                    Tensor& db = accum(n.inputs[2], grads);
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < out; ++j)
                            db.data[j] += g.data[r * out + j];
                }
                return;
            }
            case OpKind::Add:
            case OpKind::Sub: {
                if (nodes_[n.inputs[0]].requires_grad) {
                    Tensor& da = accum(n.inputs[0], grads);
                    for (std::size_t i = 0; i < g.numel(); ++i) da.data[i] += g.data[i];
                }
                if (nodes_[n.inputs[1]].requires_grad) {
                    Tensor& db = accum(n.inputs[1], grads);
                    double sign = n.kind == OpKind::Sub ? -1.0 : 1.0;
                    for (std::size_t i = 0; i < g.numel(); ++i)
                        db.data[i] += sign * g.data[i];
                }
                return;
            }
            case OpKind::Mul: {
                const Tensor& av = nodes_[n.inputs[0]].value;
                const Tensor& bv = nodes_[n.inputs[1]].value;
                if (nodes_[n.inputs[0]].requires_grad) {
                    Tensor& da = accum(n.inputs[0], grads);
                    for (std::size_t i = 0; i < g.numel(); ++i)
                        da.data[i] += g.data[i] * bv.data[i];
                }
                if (nodes_[n.inputs[1]].requires_grad) {
                    Tensor& db = accum(n.inputs[1], grads);
                    for (std::size_t i = 0; i < g.numel(); ++i)
                        db.data[i] += g.data[i] * av.data[i];
                }
                return;
            }
            case OpKind::MatMul: {
                const Node& an = nodes_[n.inputs[0]];
                const Node& bn = nodes_[n.inputs[1]];
                std::size_t m = an.value.shape[0], k = an.value.shape[1],
                            p = bn.value.shape[1];
                if (an.requires_grad) {
                    Tensor& da = accum(n.inputs[0], grads);
                    detail::matmul_nt(g.data.data(), bn.value.data.data(), da.data.data(),
                                      m, p, k);
                }
                if (bn.requires_grad) {
                    Tensor& db = accum(n.inputs[1], grads);
                    detail::matmul_tn(an.value.data.data(), g.data.data(), db.data.data(),
                                      m, k, p);
                }
                return;
            }
            case OpKind::Relu: {
                const Tensor& xv = nodes_[n.inputs[0]].value;
                Tensor& dx = accum(n.inputs[0], grads);
                for (std::size_t i = 0; i < xv.numel(); ++i)
                    if (xv.data[i] > 0.0) dx.data[i] += g.data[i];
                return;
            }
            case OpKind::Sigmoid: {
                Tensor& dx = accum(n.inputs[0], grads);
                for (std::size_t i = 0; i < n.value.numel(); ++i) {
                    double s = n.value.data[i];
                    dx.data[i] += g.data[i] * s * (1.0 - s);
                }
                return;
            }
            case OpKind::Tanh: {
                Tensor& dx = accum(n.inputs[0], grads);
                for (std::size_t i = 0; i < n.value.numel(); ++i) {
                    double t = n.value.data[i];
                    dx.data[i] += g.data[i] * (1.0 - t * t);
                }
                return;
            }
            case OpKind::Exp: {
                Tensor& dx = accum(n.inputs[0], grads);
                for (std::size_t i = 0; i < n.value.numel(); ++i)
                    dx.data[i] += g.data[i] * n.value.data[i];
                return;
            }
            case OpKind::Square: {
                const Tensor& xv = nodes_[n.inputs[0]].value;
                Tensor& dx = accum(n.inputs[0], grads);
                for (std::size_t i = 0; i < xv.numel(); ++i)
                    dx.data[i] += g.data[i] * 2.0 * xv.data[i];
                return;
            }
            case OpKind::Concat: {
                std::size_t total_last = n.value.last_extent();
                std::size_t rows = n.value.leading();
                std::size_t offset = 0;
                for (std::uint32_t in_idx : n.inputs) {
                    const Node& part = nodes_[in_idx];
                    std::size_t width = part.value.last_extent();
                    if (part.requires_grad) {
                        Tensor& dp = accum(in_idx, grads);
                        for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t j = 0; j < width; ++j)
                                dp.data[r * width + j] +=
                                    g.data[r * total_last + offset + j];
                    }
                    offset += width;
                }
                return;
            }
            case OpKind::Slice: {
                const Node& xn = nodes_[n.inputs[0]];
                if (!xn.requires_grad) return;
                std::size_t width = xn.value.last_extent();
                std::size_t w = n.hi - n.lo;
                std::size_t rows = xn.value.leading();
                Tensor& dx = accum(n.inputs[0], grads);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < w; ++j)
                        dx.data[r * width + n.lo + j] += g.data[r * w + j];
                return;
            }
            case OpKind::Sum: {
                const Node& xn = nodes_[n.inputs[0]];
                if (!xn.requires_grad) return;
                Tensor& dx = accum(n.inputs[0], grads);
                for (double& v : dx.data) v += g.data[0];
                return;
            }
            case OpKind::Mean: {
                const Node& xn = nodes_[n.inputs[0]];
                if (!xn.requires_grad) return;
                double scale = g.data[0] / static_cast<double>(xn.value.numel());
                Tensor& dx = accum(n.inputs[0], grads);
                for (double& v : dx.data) v += scale;
                return;
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Finite-difference gradient verification.

// Builds a scalar output from leaves created for `inputs`, in order.
using GraphBuilder = std::function<ValueId(Tape&, const std::vector<ValueId>&)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    bool pass = false;
    std::size_t checked = 0;  // coordinates compared against central differences
    std::size_t flagged = 0;  // coordinates skipped: a relu input changed sign
};

namespace detail {

inline double eval_scalar(const GraphBuilder& build, const std::vector<Tensor>& inputs,
                          std::vector<double>* relu_inputs) {
    Tape tape;
    std::vector<ValueId> ids;
    ids.reserve(inputs.size());
    for (const Tensor& t : inputs) ids.push_back(tape.leaf(t, false));
    ValueId out = build(tape, ids);
    const Tensor& ov = tape.value(out);
    if (ov.numel() != 1)
        throw ContractError("grad_check: builder must produce a scalar");
    if (relu_inputs) *relu_inputs = tape.relu_input_values();
    return ov.data[0];
}

// A coordinate's central difference is unreliable when the perturbation moved
// some relu input across (or onto) zero: the two probes then straddle a kink.
// Relu inputs the perturbation does not move are harmless even at exactly 0.
inline bool crossed_kink(const std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i]) continue;
        double sa = a[i] > 0.0 ? 1.0 : (a[i] < 0.0 ? -1.0 : 0.0);
        double sb = b[i] > 0.0 ? 1.0 : (b[i] < 0.0 ? -1.0 : 0.0);
        if (sa * sb <= 0.0) return true;
    }
    return false;
}

}  // namespace detail

// Compares analytic gradients with central differences at step h. Coordinates
// whose perturbation pushes any relu input across zero are reported as flagged
// and excluded from the error maximum: the derivative is genuinely one-sided
// there and central differences do not apply.
inline GradCheckReport grad_check(const GraphBuilder& build,
                                  const std::vector<Tensor>& inputs, double h = 1e-5,
                                  double tol = 1e-4) {
    Tape tape;
    std::vector<ValueId> ids;
    ids.reserve(inputs.size());
    for (const Tensor& t : inputs) ids.push_back(tape.leaf(t, true));
    ValueId out = build(tape, ids);
    if (tape.value(out).numel() != 1)
        throw ContractError("grad_check: builder must produce a scalar");
    GradientSet analytic = tape.gradients(out);

    GradCheckReport report;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        const Tensor& grad = analytic.at(ids[t]);
        for (std::size_t c = 0; c < inputs[t].numel(); ++c) {
            std::vector<Tensor> probe = inputs;
            std::vector<double> relu_plus, relu_minus;
            probe[t].data[c] = inputs[t].data[c] + h;
            double fplus = detail::eval_scalar(build, probe, &relu_plus);
            probe[t].data[c] = inputs[t].data[c] - h;
            double fminus = detail::eval_scalar(build, probe, &relu_minus);
            if (detail::crossed_kink(relu_plus, relu_minus)) {
                ++report.flagged;
                continue;
            }
            double numeric = (fplus - fminus) / (2.0 * h);
            double a = grad.data[c];
            double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            double rel = std::fabs(a - numeric) / denom;
            report.max_rel_error = std::max(report.max_rel_error, rel);
            ++report.checked;
        }
    }
    report.pass = report.max_rel_error <= tol;
    return report;
}

}  // namespace varsep
