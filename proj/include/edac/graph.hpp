#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "edac/common.hpp"
#include "edac/tensor.hpp"

namespace edac {

using NodeId = int32_t;
inline constexpr NodeId kNoNode = -1;

enum class Op : uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    MatMul,
    Tanh,
    Relu,
    Exp,
    Log,
    Sum,
    Mean,
    MinAxis,
    Square,
    Sqrt,
    Broadcast,
    Slice,
    Concat,
    Neg,
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Div: return "div";
        case Op::MatMul: return "matmul";
        case Op::Tanh: return "tanh";
        case Op::Relu: return "relu";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::MinAxis: return "min-over-axis";
        case Op::Square: return "square";
        case Op::Sqrt: return "sqrt";
        case Op::Broadcast: return "broadcast";
        case Op::Slice: return "slice";
        case Op::Concat: return "concat";
        case Op::Neg: return "negate";
    }
    return "?";
}

// Gradients keyed by the node they differentiate. Values are themselves
// node ids, so a gradient can be differentiated again.
class GradMap {
public:
    void put(NodeId wrt, NodeId grad) { entries_.emplace_back(wrt, grad); }
    NodeId at(NodeId wrt) const {
        for (const auto& [k, v] : entries_)
            if (k == wrt) return v;
        throw ShapeError("GradMap: no gradient recorded for node #" + std::to_string(wrt));
    }
    const std::vector<std::pair<NodeId, NodeId>>& entries() const { return entries_; }

private:
    std::vector<std::pair<NodeId, NodeId>> entries_;
};

// Append-only computation tape. Node values are computed eagerly at
// construction into a shared arena, so evaluation is a lookup and ids are
// already in topological order for the reverse pass. Nodes are immutable;
// a parameter update builds fresh leaves (typically in a fresh Graph).
class Graph {
public:
    struct Node {
        Op op;
        bool requires_grad;
        NodeId a, b;
        int32_t rows, cols;
        size_t ofs;
        int32_t i0, i1, i2, i3;  // op attributes (transpose flags, axis, slice bounds)
    };

    Graph() = default;

    // Drops all nodes but keeps the arena capacity, so a reused Graph stops
    // paying reallocation and zero-fill costs after the first pass.
    void reset() {
        nodes_.clear();
        used_ = 0;
    }

    size_t node_count() const { return nodes_.size(); }
    int rows(NodeId id) const { return nodes_[id].rows; }
    int cols(NodeId id) const { return nodes_[id].cols; }
    size_t numel(NodeId id) const { return static_cast<size_t>(rows(id)) * cols(id); }
    bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
    Op op(NodeId id) const { return nodes_[id].op; }

    const double* data(NodeId id) const { return buf_.data() + nodes_[id].ofs; }
    double* mutable_data(NodeId id) { return buf_.data() + nodes_[id].ofs; }

    Tensor value(NodeId id) const {
        const Node& n = nodes_[id];
        return Tensor(n.rows, n.cols,
                      std::vector<double>(buf_.begin() + n.ofs, buf_.begin() + n.ofs + numel(id)));
    }

    double scalar_value(NodeId id) const {
        if (numel(id) != 1) throw ShapeError("scalar_value on non-scalar node " + where(id));
        return buf_[nodes_[id].ofs];
    }

    // ---- leaves -------------------------------------------------------

    NodeId leaf(const Tensor& t, bool requires_grad_flag = false) {
        NodeId id = push(Op::Leaf, kNoNode, kNoNode, t.rows, t.cols, requires_grad_flag);
        double* out = mutable_data(id);
        for (size_t i = 0; i < t.size(); ++i) out[i] = t.v[i];
        check_finite(id);
        return id;
    }

    NodeId constant(const Tensor& t) { return leaf(t, false); }
    NodeId constant(double x) { return leaf(Tensor::scalar(x), false); }
    NodeId zeros_like(NodeId ref) { return leaf(Tensor::zeros(rows(ref), cols(ref)), false); }

    // ---- primitives ---------------------------------------------------

    NodeId add(NodeId x, NodeId y) { return binary_ew(Op::Add, x, y); }
    NodeId sub(NodeId x, NodeId y) { return binary_ew(Op::Sub, x, y); }
    NodeId mul(NodeId x, NodeId y) { return binary_ew(Op::Mul, x, y); }
    NodeId div(NodeId x, NodeId y) { return binary_ew(Op::Div, x, y); }

    NodeId matmul(NodeId x, NodeId y, bool trans_x = false, bool trans_y = false) {
        const int xr = trans_x ? cols(x) : rows(x), xc = trans_x ? rows(x) : cols(x);
        const int yr = trans_y ? cols(y) : rows(y), yc = trans_y ? rows(y) : cols(y);
        if (xc != yr)
            throw ShapeError(std::string("matmul: inner dimensions disagree ") + dims(xr, xc) +
                             " * " + dims(yr, yc) + " at " + where(x));
        NodeId id = push(Op::MatMul, x, y, xr, yc, requires_grad(x) || requires_grad(y));
        nodes_[id].i0 = trans_x ? 1 : 0;
        nodes_[id].i1 = trans_y ? 1 : 0;
        matmul_kernel(id);
        check_finite(id);
        return id;
    }

    NodeId tanh(NodeId x) { return unary(Op::Tanh, x); }
    NodeId relu(NodeId x) { return unary(Op::Relu, x); }
    NodeId exp(NodeId x) { return unary(Op::Exp, x); }
    NodeId log(NodeId x) { return unary(Op::Log, x); }
    NodeId square(NodeId x) { return unary(Op::Square, x); }
    NodeId sqrt(NodeId x) { return unary(Op::Sqrt, x); }
    NodeId neg(NodeId x) { return unary(Op::Neg, x); }

    NodeId sum(NodeId x) { return reduce(Op::Sum, x); }
    NodeId mean(NodeId x) { return reduce(Op::Mean, x); }

    // Minimum along `axis` (0: over rows -> 1 x cols, 1: over cols -> rows x 1).
    // Ties take the lowest index; the subgradient goes entirely to that entry.
    NodeId min_axis(NodeId x, int axis) {
        if (axis != 0 && axis != 1) throw ShapeError("min-over-axis: axis must be 0 or 1");
        const int r = axis == 1 ? rows(x) : 1;
        const int c = axis == 1 ? 1 : cols(x);
        NodeId id = push(Op::MinAxis, x, kNoNode, r, c, requires_grad(x));
        nodes_[id].i0 = axis;
        const double* in = data(x);
        double* out = mutable_data(id);
        const int xr = rows(x), xc = cols(x);
        if (axis == 1) {
            for (int i = 0; i < xr; ++i) {
                double m = in[static_cast<size_t>(i) * xc];
                for (int j = 1; j < xc; ++j) m = std::min(m, in[static_cast<size_t>(i) * xc + j]);
                out[i] = m;
            }
        } else {
            for (int j = 0; j < xc; ++j) out[j] = in[j];
            for (int i = 1; i < xr; ++i)
                for (int j = 0; j < xc; ++j)
                    out[j] = std::min(out[j], in[static_cast<size_t>(i) * xc + j]);
        }
        check_finite(id);
        return id;
    }

    // Expand 1x1, 1xm or nx1 to r x c (identity when shapes already match).
    NodeId broadcast(NodeId x, int r, int c) {
        const int xr = rows(x), xc = cols(x);
        if (!((xr == r && xc == c) || (xr == 1 && xc == 1) || (xr == 1 && xc == c) ||
              (xr == r && xc == 1)))
            throw ShapeError(std::string("broadcast: cannot expand ") + dims(xr, xc) + " to " +
                             dims(r, c) + " at " + where(x));
        if (xr == r && xc == c) return x;
        NodeId id = push(Op::Broadcast, x, kNoNode, r, c, requires_grad(x));
        const double* in = data(x);
        double* out = mutable_data(id);
        if (xr == 1 && xc == 1) {
            const double v = in[0];
            for (size_t i = 0; i < numel(id); ++i) out[i] = v;
        } else if (xr == 1) {
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) out[static_cast<size_t>(i) * c + j] = in[j];
        } else {
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) out[static_cast<size_t>(i) * c + j] = in[i];
        }
        return id;
    }

    // Half-open sub-block [r0, r1) x [c0, c1).
    NodeId slice(NodeId x, int r0, int r1, int c0, int c1) {
        if (r0 < 0 || c0 < 0 || r1 > rows(x) || c1 > cols(x) || r0 >= r1 || c0 >= c1)
            throw ShapeError("slice: bounds [" + std::to_string(r0) + "," + std::to_string(r1) +
                             ")x[" + std::to_string(c0) + "," + std::to_string(c1) +
                             ") invalid for " + dims(rows(x), cols(x)) + " at " + where(x));
        NodeId id = push(Op::Slice, x, kNoNode, r1 - r0, c1 - c0, requires_grad(x));
        nodes_[id].i0 = r0;
        nodes_[id].i1 = r1;
        nodes_[id].i2 = c0;
        nodes_[id].i3 = c1;
        const double* in = data(x);
        double* out = mutable_data(id);
        const int xc = cols(x);
        for (int i = r0; i < r1; ++i)
            for (int j = c0; j < c1; ++j)
                *out++ = in[static_cast<size_t>(i) * xc + j];
        return id;
    }

    NodeId concat(NodeId x, NodeId y, int axis) {
        if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
        if (axis == 0 ? cols(x) != cols(y) : rows(x) != rows(y))
            throw ShapeError(std::string("concat: shapes ") + dims(rows(x), cols(x)) + " and " +
                             dims(rows(y), cols(y)) + " disagree on axis " + std::to_string(axis));
        const int r = axis == 0 ? rows(x) + rows(y) : rows(x);
        const int c = axis == 0 ? cols(x) : cols(x) + cols(y);
        NodeId id = push(Op::Concat, x, y, r, c, requires_grad(x) || requires_grad(y));
        nodes_[id].i0 = axis;
        const double* ix = data(x);
        const double* iy = data(y);
        double* out = mutable_data(id);
        if (axis == 0) {
            size_t nx = numel(x);
            for (size_t i = 0; i < nx; ++i) out[i] = ix[i];
            for (size_t i = 0; i < numel(y); ++i) out[nx + i] = iy[i];
        } else {
            const int cx = cols(x), cy = cols(y);
            for (int i = 0; i < r; ++i) {
                for (int j = 0; j < cx; ++j) out[static_cast<size_t>(i) * c + j] = ix[static_cast<size_t>(i) * cx + j];
                for (int j = 0; j < cy; ++j) out[static_cast<size_t>(i) * c + cx + j] = iy[static_cast<size_t>(i) * cy + j];
            }
        }
        return id;
    }

    // ---- composite helpers (built from primitives) ---------------------

    NodeId bcast_to(NodeId x, NodeId ref) { return broadcast(x, rows(ref), cols(ref)); }
    NodeId add_scalar(NodeId x, double s) { return add(x, broadcast(constant(s), rows(x), cols(x))); }
    NodeId mul_scalar(NodeId x, double s) { return mul(x, broadcast(constant(s), rows(x), cols(x))); }

    NodeId row_sum(NodeId x) {  // n x m -> n x 1
        return matmul(x, constant(Tensor::full(cols(x), 1, 1.0)));
    }
    NodeId col_sum(NodeId x) {  // n x m -> 1 x m
        return matmul(constant(Tensor::full(1, rows(x), 1.0)), x);
    }
    // Exact identity in the interior: x is untouched there, the relu terms
    // only activate past the bounds.
    NodeId clamp(NodeId x, double lo, double hi) {
        NodeId over = relu(add_scalar(x, -hi));
        NodeId under = relu(sub(broadcast(constant(lo), rows(x), cols(x)), x));
        return add(sub(x, over), under);
    }
    NodeId stack_cols(std::span<const NodeId> columns) {
        NodeId out = columns[0];
        for (size_t i = 1; i < columns.size(); ++i) out = concat(out, columns[i], 1);
        return out;
    }

    // ---- evaluation & differentiation ----------------------------------

    // Values are computed eagerly, so evaluation is a read-back. Kept as the
    // public entry point for the "evaluate" contract.
    Tensor evaluate(NodeId root) const { return value(root); }

    // Reverse-mode gradients of a scalar node. The returned gradients are
    // graph nodes and can be differentiated again. wrt nodes not reachable
    // from `output` map to zeros of their own shape.
    GradMap gradient(NodeId output, std::span<const NodeId> wrt) {
        if (numel(output) != 1)
            throw ShapeError("gradient: output must be scalar, got " +
                             dims(rows(output), cols(output)) + " at " + where(output));
        std::vector<NodeId> adj(static_cast<size_t>(output) + 1, kNoNode);
        adj[output] = constant(1.0);
        for (NodeId id = output; id >= 0; --id) {
            if (adj[id] == kNoNode || !requires_grad(id)) continue;
            backward_one(id, adj);
        }
        GradMap out;
        for (NodeId w : wrt) {
            if (w <= output && adj[w] != kNoNode && requires_grad(w))
                out.put(w, adj[w]);
            else
                out.put(w, zeros_like(w));
        }
        return out;
    }

    GradMap gradient(NodeId output, std::initializer_list<NodeId> wrt) {
        return gradient(output, std::span<const NodeId>(wrt.begin(), wrt.size()));
    }

    // Differentiates sum(d output / d inner_wrt) with respect to outer_wrt.
    // Other scalar functions of the inner gradient are built by composing
    // gradient() calls directly, since gradients are ordinary nodes.
    GradMap second_gradient(NodeId output, NodeId inner_wrt, std::span<const NodeId> outer_wrt) {
        GradMap inner = gradient(output, {inner_wrt});
        return gradient(sum(inner.at(inner_wrt)), outer_wrt);
    }

private:
    std::vector<Node> nodes_;
    std::vector<double> buf_;
    size_t used_ = 0;

    size_t alloc(size_t n) {
        const size_t ofs = used_;
        used_ += n;
        if (used_ > buf_.size()) buf_.resize(std::max(used_, buf_.size() * 2));
        return ofs;
    }

    static std::string dims(int r, int c) {
        return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
    }

    std::string where(NodeId id) const {
        std::string s = "node #" + std::to_string(id);
        if (id >= 0 && id < static_cast<NodeId>(nodes_.size())) {
            s += " (";
            NodeId cur = id;
            for (int depth = 0; depth < 4 && cur != kNoNode; ++depth) {
                if (depth) s += " <- ";
                s += op_name(nodes_[cur].op);
                cur = nodes_[cur].a;
            }
            s += ")";
        }
        return s;
    }

    NodeId push(Op op, NodeId a, NodeId b, int r, int c, bool rg) {
        Node n;
        n.op = op;
        n.requires_grad = rg;
        n.a = a;
        n.b = b;
        n.rows = r;
        n.cols = c;
        n.ofs = alloc(static_cast<size_t>(r) * c);
        n.i0 = n.i1 = n.i2 = n.i3 = 0;
        nodes_.push_back(n);
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    void check_finite(NodeId id) const {
        const double* __restrict__ p = data(id);
        const size_t n = numel(id);
        bool ok = true;
        for (size_t i = 0; i < n; ++i) ok &= std::isfinite(p[i]);
        if (!ok) throw NumericError(std::string("non-finite value produced by ") + where(id));
    }

    NodeId binary_ew(Op op, NodeId x, NodeId y) {
        if (rows(x) != rows(y) || cols(x) != cols(y))
            throw ShapeError(std::string(op_name(op)) + ": shape mismatch " +
                             dims(rows(x), cols(x)) + " vs " + dims(rows(y), cols(y)) + " at " +
                             where(x));
        NodeId id = push(op, x, y, rows(x), cols(x), requires_grad(x) || requires_grad(y));
        const double* __restrict__ a = data(x);
        const double* __restrict__ b = data(y);
        double* __restrict__ out = mutable_data(id);
        const size_t n = numel(id);
        switch (op) {
            case Op::Add: for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i]; break;
            case Op::Sub: for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i]; break;
            case Op::Mul: for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i]; break;
            case Op::Div: for (size_t i = 0; i < n; ++i) out[i] = a[i] / b[i]; break;
            default: break;
        }
        check_finite(id);
        return id;
    }

    NodeId unary(Op op, NodeId x) {
        NodeId id = push(op, x, kNoNode, rows(x), cols(x), requires_grad(x));
        const double* __restrict__ a = data(x);
        double* __restrict__ out = mutable_data(id);
        const size_t n = numel(id);
        switch (op) {
            case Op::Tanh: for (size_t i = 0; i < n; ++i) out[i] = std::tanh(a[i]); break;
            case Op::Relu: for (size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0; break;
            case Op::Exp: for (size_t i = 0; i < n; ++i) out[i] = std::exp(a[i]); break;
            case Op::Log: for (size_t i = 0; i < n; ++i) out[i] = std::log(a[i]); break;
            case Op::Square: for (size_t i = 0; i < n; ++i) out[i] = a[i] * a[i]; break;
            case Op::Sqrt: for (size_t i = 0; i < n; ++i) out[i] = std::sqrt(a[i]); break;
            case Op::Neg: for (size_t i = 0; i < n; ++i) out[i] = -a[i]; break;
            default: break;
        }
        check_finite(id);
        return id;
    }

    NodeId reduce(Op op, NodeId x) {
        NodeId id = push(op, x, kNoNode, 1, 1, requires_grad(x));
        const double* a = data(x);
        double s = 0.0;
        const size_t n = numel(x);
        for (size_t i = 0; i < n; ++i) s += a[i];
        mutable_data(id)[0] = op == Op::Mean ? s / static_cast<double>(n) : s;
        check_finite(id);
        return id;
    }

    void matmul_kernel(NodeId id) {
        const Node& n = nodes_[id];
        const bool tx = n.i0 != 0, ty = n.i1 != 0;
        const int R = n.rows, C = n.cols;
        const int K = tx ? rows(n.a) : cols(n.a);
        const int lda = cols(n.a), ldb = cols(n.b);
        const double* __restrict__ A = data(n.a);
        const double* __restrict__ B = data(n.b);
        double* __restrict__ out = buf_.data() + n.ofs;
        for (size_t i = 0; i < static_cast<size_t>(R) * C; ++i) out[i] = 0.0;
        if (!tx && !ty) {
            for (int i = 0; i < R; ++i)
                for (int k = 0; k < K; ++k) {
                    const double aik = A[static_cast<size_t>(i) * lda + k];
                    const double* __restrict__ brow = B + static_cast<size_t>(k) * ldb;
                    double* __restrict__ orow = out + static_cast<size_t>(i) * C;
                    for (int j = 0; j < C; ++j) orow[j] += aik * brow[j];
                }
        } else if (!tx && ty) {
            for (int i = 0; i < R; ++i)
                for (int j = 0; j < C; ++j) {
                    const double* __restrict__ arow = A + static_cast<size_t>(i) * lda;
                    const double* __restrict__ brow = B + static_cast<size_t>(j) * ldb;
                    double s = 0.0;
                    for (int k = 0; k < K; ++k) s += arow[k] * brow[k];
                    out[static_cast<size_t>(i) * C + j] = s;
                }
        } else if (tx && !ty) {
            for (int k = 0; k < K; ++k) {
                const double* __restrict__ arow = A + static_cast<size_t>(k) * lda;
                const double* __restrict__ brow = B + static_cast<size_t>(k) * ldb;
                for (int i = 0; i < R; ++i) {
                    const double aki = arow[i];
                    double* __restrict__ orow = out + static_cast<size_t>(i) * C;
                    for (int j = 0; j < C; ++j) orow[j] += aki * brow[j];
                }
            }
        } else {
            for (int i = 0; i < R; ++i)
                for (int j = 0; j < C; ++j) {
                    double s = 0.0;
                    for (int k = 0; k < K; ++k)
                        s += A[static_cast<size_t>(k) * lda + i] * B[static_cast<size_t>(j) * ldb + k];
                    out[static_cast<size_t>(i) * C + j] = s;
                }
        }
    }

    void accumulate(std::vector<NodeId>& adj, NodeId parent, NodeId contribution) {
        if (parent == kNoNode || !requires_grad(parent)) return;
        adj[parent] = adj[parent] == kNoNode ? contribution : add(adj[parent], contribution);
    }

    // Emits the vector-Jacobian product of node `id` into its parents'
    // adjoints. Every rule is expressed with the same primitives, which keeps
    // the emitted graph differentiable for gradient-of-gradient.
    void backward_one(NodeId id, std::vector<NodeId>& adj) {
        const Node n = nodes_[id];
        const NodeId u = adj[id];
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Add:
                accumulate(adj, n.a, u);
                accumulate(adj, n.b, u);
                break;
            case Op::Sub:
                accumulate(adj, n.a, u);
                accumulate(adj, n.b, neg(u));
                break;
            case Op::Mul:
                accumulate(adj, n.a, mul(u, n.b));
                accumulate(adj, n.b, mul(u, n.a));
                break;
            case Op::Div:
                accumulate(adj, n.a, div(u, n.b));
                accumulate(adj, n.b, neg(div(mul(u, n.a), square(n.b))));
                break;
            case Op::MatMul: {
                const bool tx = n.i0 != 0, ty = n.i1 != 0;
                if (requires_grad(n.a))
                    accumulate(adj, n.a,
                               tx ? matmul(n.b, u, ty, true) : matmul(u, n.b, false, !ty));
                if (requires_grad(n.b))
                    accumulate(adj, n.b,
                               ty ? matmul(u, n.a, true, tx) : matmul(n.a, u, !tx, false));
                break;
            }
            case Op::Tanh: {
                NodeId one = broadcast(constant(1.0), n.rows, n.cols);
                accumulate(adj, n.a, mul(u, sub(one, square(id))));
                break;
            }
            case Op::Relu: {
                Tensor mask(n.rows, n.cols);
                const double* p = data(n.a);
                for (size_t i = 0; i < mask.size(); ++i) mask.v[i] = p[i] > 0.0 ? 1.0 : 0.0;
                accumulate(adj, n.a, mul(u, constant(mask)));
                break;
            }
            case Op::Exp:
                accumulate(adj, n.a, mul(u, id));
                break;
            case Op::Log:
                accumulate(adj, n.a, div(u, n.a));
                break;
            case Op::Sum:
                accumulate(adj, n.a, broadcast(u, rows(n.a), cols(n.a)));
                break;
            case Op::Mean: {
                NodeId scaled = div(u, constant(static_cast<double>(numel(n.a))));
                accumulate(adj, n.a, broadcast(scaled, rows(n.a), cols(n.a)));
                break;
            }
            case Op::MinAxis: {
                Tensor mask(rows(n.a), cols(n.a));
                const double* p = data(n.a);
                const int xr = rows(n.a), xc = cols(n.a);
                if (n.i0 == 1) {
                    for (int i = 0; i < xr; ++i) {
                        int arg = 0;
                        for (int j = 1; j < xc; ++j)
                            if (p[static_cast<size_t>(i) * xc + j] < p[static_cast<size_t>(i) * xc + arg]) arg = j;
                        mask.at(i, arg) = 1.0;
                    }
                } else {
                    for (int j = 0; j < xc; ++j) {
                        int arg = 0;
                        for (int i = 1; i < xr; ++i)
                            if (p[static_cast<size_t>(i) * xc + j] < p[static_cast<size_t>(arg) * xc + j]) arg = i;
                        mask.at(arg, j) = 1.0;
                    }
                }
                accumulate(adj, n.a, mul(constant(mask), broadcast(u, xr, xc)));
                break;
            }
            case Op::Square: {
                NodeId two = broadcast(constant(2.0), n.rows, n.cols);
                accumulate(adj, n.a, mul(u, mul(two, n.a)));
                break;
            }
            case Op::Sqrt: {
                NodeId two = broadcast(constant(2.0), n.rows, n.cols);
                accumulate(adj, n.a, div(u, mul(two, id)));
                break;
            }
            case Op::Broadcast: {
                const int pr = rows(n.a), pc = cols(n.a);
                NodeId g;
                if (pr == 1 && pc == 1)
                    g = sum(u);
                else if (pr == 1)
                    g = col_sum(u);
                else
                    g = row_sum(u);
                accumulate(adj, n.a, g);
                break;
            }
            case Op::Slice: {
                const int pr = rows(n.a), pc = cols(n.a);
                const int r0 = n.i0, r1 = n.i1, c0 = n.i2, c1 = n.i3;
                NodeId block = u;
                if (c0 > 0) block = concat(constant(Tensor::zeros(r1 - r0, c0)), block, 1);
                if (c1 < pc) block = concat(block, constant(Tensor::zeros(r1 - r0, pc - c1)), 1);
                if (r0 > 0) block = concat(constant(Tensor::zeros(r0, pc)), block, 0);
                if (r1 < pr) block = concat(block, constant(Tensor::zeros(pr - r1, pc)), 0);
                accumulate(adj, n.a, block);
                break;
            }
            case Op::Concat: {
                if (n.i0 == 0) {
                    accumulate(adj, n.a, slice(u, 0, rows(n.a), 0, n.cols));
                    accumulate(adj, n.b, slice(u, rows(n.a), n.rows, 0, n.cols));
                } else {
                    accumulate(adj, n.a, slice(u, 0, n.rows, 0, cols(n.a)));
                    accumulate(adj, n.b, slice(u, 0, n.rows, cols(n.a), n.cols));
                }
                break;
            }
            case Op::Neg:
                accumulate(adj, n.a, neg(u));
                break;
        }
    }
};

// Scalar-valued function of one tensor leaf, expressed as a graph builder.
using ScalarFn = std::function<NodeId(Graph&, NodeId)>;

// Max over coordinates of the relative disagreement between the reverse-mode
// gradient of f at x and a central finite difference with the given step.
inline double finite_difference_check(const ScalarFn& f, const Tensor& x, double step) {
    Graph g;
    NodeId leaf = g.leaf(x, true);
    NodeId out = f(g, leaf);
    GradMap grads = g.gradient(out, {leaf});
    Tensor analytic = g.value(grads.at(leaf));

    auto eval_at = [&f](const Tensor& point) {
        Graph h;
        NodeId l = h.leaf(point, false);
        return h.scalar_value(f(h, l));
    };

    double max_err = 0.0;
    Tensor probe = x;
    for (size_t i = 0; i < x.size(); ++i) {
        probe.v[i] = x.v[i] + step;
        const double fp = eval_at(probe);
        probe.v[i] = x.v[i] - step;
        const double fm = eval_at(probe);
        probe.v[i] = x.v[i];
        const double central = (fp - fm) / (2.0 * step);
        const double err = std::fabs(analytic.v[i] - central) /
                           (std::fabs(analytic.v[i]) + std::fabs(central) + 1e-12);
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace edac
