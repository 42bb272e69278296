#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "signstorm/tensor.hpp"

namespace signstorm {

// Operator set of the reverse-mode engine. It is intentionally small: just
// enough for the surrogate classifier, the attacks' input gradients and the
// class-activation-map layer gradients.
enum class OpKind {
    Leaf,           // graph input, no parents
    Conv2d,         // [H,W,Ci] x [K,K,Ci,Co] x [Co] -> [Ho,Wo,Co]
    LeakyRelu,      // elementwise, slope on the negative branch
    MaxPool2,       // 2x2 max pool, stride 2
    Dense,          // flatten(x) [N] x [N,M] x [M] -> [M]
    SoftmaxCE,      // logits [C] -> scalar cross-entropy against params.label
    Add,            // elementwise, same shape
    Scale,          // y = mul*x + add, elementwise
    Tanh,           // elementwise
    Pick,           // x -> [1], element params.index
    Sum,            // x -> [1]
    SumSq,          // x -> [1], sum of squares
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::LeakyRelu: return "leaky_relu";
        case OpKind::MaxPool2: return "max_pool2";
        case OpKind::Dense: return "dense";
        case OpKind::SoftmaxCE: return "softmax_cross_entropy";
        case OpKind::Add: return "add";
        case OpKind::Scale: return "scale";
        case OpKind::Tanh: return "tanh";
        case OpKind::Pick: return "pick";
        case OpKind::Sum: return "sum";
        case OpKind::SumSq: return "sumsq";
    }
    return "?";
}

// Per-kind parameters. Interpretation: Conv2d uses stride/pad; LeakyRelu
// uses slope; Scale uses mul/add; Pick uses index; SoftmaxCE uses label.
struct OpParams {
    int stride = 1;
    int pad = 0;
    int index = 0;
    int label = 0;
    double slope = 0.01;
    double mul = 1.0;
    double add = 0.0;
};

using NodeId = int;

// Numerically stable softmax of a flat vector.
inline std::vector<double> softmax(const std::vector<double>& z) {
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    std::vector<double> p(z.size());
    double sum = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - m);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

// Reverse-mode tape. Operations evaluate eagerly as they are registered, so
// node order is already topological; backward() walks it in reverse. A graph
// and its tensors are confined to one thread; independent graphs may run in
// parallel over shared read-only weights (inputs are copied in).
class Graph {
public:
    NodeId input(Tensor t, bool requires_grad = false) {
        t.requires_grad = requires_grad;
        return push(OpKind::Leaf, {}, {}, std::move(t));
    }

    // Generic entry point; the typed builders below all route through here.
    NodeId forward_op(OpKind kind, const std::vector<NodeId>& inputs, const OpParams& params = {}) {
        for (NodeId id : inputs) check_id(id);
        switch (kind) {
            case OpKind::Leaf:
                throw Error("forward_op: leaf nodes are created via input()");
            case OpKind::Conv2d: return push(kind, inputs, params, eval_conv2d(inputs, params));
            case OpKind::LeakyRelu: return push(kind, inputs, params, eval_leaky_relu(inputs, params));
            case OpKind::MaxPool2: return push(kind, inputs, params, eval_max_pool2(inputs));
            case OpKind::Dense: return push(kind, inputs, params, eval_dense(inputs));
            case OpKind::SoftmaxCE: return push(kind, inputs, params, eval_softmax_ce(inputs, params));
            case OpKind::Add: return push(kind, inputs, params, eval_add(inputs));
            case OpKind::Scale: return push(kind, inputs, params, eval_scale(inputs, params));
            case OpKind::Tanh: return push(kind, inputs, params, eval_tanh(inputs));
            case OpKind::Pick: return push(kind, inputs, params, eval_pick(inputs, params));
            case OpKind::Sum: return push(kind, inputs, params, eval_sum(inputs));
            case OpKind::SumSq: return push(kind, inputs, params, eval_sumsq(inputs));
        }
        throw Error("forward_op: unknown operator kind");
    }

    NodeId conv2d(NodeId x, NodeId w, NodeId b, int stride = 1, int pad = 0) {
        OpParams p;
        p.stride = stride;
        p.pad = pad;
        return forward_op(OpKind::Conv2d, {x, w, b}, p);
    }
    NodeId leaky_relu(NodeId x, double slope) {
        OpParams p;
        p.slope = slope;
        return forward_op(OpKind::LeakyRelu, {x}, p);
    }
    NodeId max_pool2(NodeId x) { return forward_op(OpKind::MaxPool2, {x}); }
    NodeId dense(NodeId x, NodeId w, NodeId b) { return forward_op(OpKind::Dense, {x, w, b}); }
    NodeId softmax_ce(NodeId logits, int label) {
        OpParams p;
        p.label = label;
        return forward_op(OpKind::SoftmaxCE, {logits}, p);
    }
    NodeId add(NodeId a, NodeId b) { return forward_op(OpKind::Add, {a, b}); }
    NodeId scale(NodeId x, double mul, double add = 0.0) {
        OpParams p;
        p.mul = mul;
        p.add = add;
        return forward_op(OpKind::Scale, {x}, p);
    }
    NodeId tanh_op(NodeId x) { return forward_op(OpKind::Tanh, {x}); }
    NodeId pick(NodeId x, int index) {
        OpParams p;
        p.index = index;
        return forward_op(OpKind::Pick, {x}, p);
    }
    NodeId sum(NodeId x) { return forward_op(OpKind::Sum, {x}); }
    NodeId sumsq(NodeId x) { return forward_op(OpKind::SumSq, {x}); }

    const Tensor& value(NodeId id) const { return node(id).out; }
    Tensor& mutable_value(NodeId id) { return nodes_[check_id(id)].out; }
    const std::vector<double>& grad(NodeId id) const { return node(id).out.grad(); }
    OpKind kind(NodeId id) const { return node(id).kind; }
    int size() const { return static_cast<int>(nodes_.size()); }

    // Softmax probabilities cached by a SoftmaxCE node's forward pass.
    const std::vector<double>& probs(NodeId ce_node) const {
        const Node& n = node(ce_node);
        if (n.kind != OpKind::SoftmaxCE)
            throw Error(std::string("probs: node is ") + op_name(n.kind) + ", not softmax_cross_entropy");
        return n.aux;
    }

    // Populates grad buffers with d(loss)/d(node value) for every node the
    // loss depends on; tensors with requires_grad that the loss does not
    // touch get an all-zero buffer. Values are left untouched, so the graph
    // can be extended and differentiated again.
    void backward(NodeId loss) {
        if (nodes_.empty()) throw Error("backward: graph is empty (no forward pass has run)");
        size_t li = check_id(loss);
        if (nodes_[li].out.size() != 1)
            throw Error("backward: loss must be scalar, got shape " + shape_str(nodes_[li].out.shape()));
        for (auto& n : nodes_)
            if (n.out.requires_grad) n.out.alloc_grad();
        if (!nodes_[li].out.requires_grad)
            return; // loss depends on no differentiable leaf
        nodes_[li].out.grad()[0] = 1.0;
        for (size_t i = li + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.out.requires_grad || !n.out.has_grad()) continue;
            backward_node(n);
        }
    }

private:
    struct Node {
        OpKind kind;
        std::vector<NodeId> parents;
        OpParams params;
        Tensor out;
        std::vector<double> aux;  // SoftmaxCE: probabilities
        std::vector<int> iaux;    // MaxPool2: winning source index per output
    };

    std::vector<Node> nodes_;

    size_t check_id(NodeId id) const {
        if (id < 0 || static_cast<size_t>(id) >= nodes_.size())
            throw Error("graph: invalid node id " + std::to_string(id));
        return static_cast<size_t>(id);
    }
    const Node& node(NodeId id) const { return nodes_[check_id(id)]; }

    NodeId push(OpKind kind, std::vector<NodeId> parents, OpParams params, Tensor out) {
        bool rg = false;
        for (NodeId p : parents) rg = rg || nodes_[static_cast<size_t>(p)].out.requires_grad;
        if (kind != OpKind::Leaf) out.requires_grad = rg;
        if (!out.all_finite())
            throw Error(std::string(op_name(kind)) + ": non-finite value in forward output");
        Node n;
        n.kind = kind;
        n.parents = std::move(parents);
        n.params = params;
        n.out = std::move(out);
        if (kind == OpKind::SoftmaxCE) n.aux = std::move(ce_probs_);
        if (kind == OpKind::MaxPool2) n.iaux = std::move(pool_arg_);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    const Tensor& pv(const std::vector<NodeId>& ids, size_t i) const {
        return nodes_[static_cast<size_t>(ids[i])].out;
    }

    static void want_inputs(OpKind k, const std::vector<NodeId>& in, size_t n) {
        if (in.size() != n)
            throw Error(std::string(op_name(k)) + ": expected " + std::to_string(n) + " inputs, got " +
                        std::to_string(in.size()));
    }

    // ---- forward evaluation ----

    Tensor eval_conv2d(const std::vector<NodeId>& in, const OpParams& p) const {
        want_inputs(OpKind::Conv2d, in, 3);
        const Tensor& x = pv(in, 0);
        const Tensor& w = pv(in, 1);
        const Tensor& b = pv(in, 2);
        if (x.rank() != 3 || w.rank() != 4 || b.rank() != 1)
            throw Error("conv2d: expected input [H,W,Ci], kernel [K,K,Ci,Co], bias [Co]; got " +
                        shape_str(x.shape()) + ", " + shape_str(w.shape()) + ", " + shape_str(b.shape()));
        const int H = x.dim(0), W = x.dim(1), Ci = x.dim(2);
        const int K = w.dim(0), Co = w.dim(3);
        if (w.dim(1) != K)
            throw Error("conv2d: kernel must be square, got " + shape_str(w.shape()));
        if (w.dim(2) != Ci)
            throw Error("conv2d: input has " + std::to_string(Ci) + " channels but kernel expects " +
                        std::to_string(w.dim(2)) + " (input " + shape_str(x.shape()) + ", kernel " +
                        shape_str(w.shape()) + ")");
        if (b.dim(0) != Co)
            throw Error("conv2d: bias " + shape_str(b.shape()) + " does not match " + std::to_string(Co) +
                        " output channels");
        if (p.stride < 1) throw Error("conv2d: stride must be >= 1");
        const int Hp = H + 2 * p.pad - K, Wp = W + 2 * p.pad - K;
        if (Hp < 0 || Wp < 0 || Hp % p.stride || Wp % p.stride)
            throw Error("conv2d: kernel " + std::to_string(K) + " with stride " + std::to_string(p.stride) +
                        ", pad " + std::to_string(p.pad) + " does not tile input " + shape_str(x.shape()));
        const int Ho = Hp / p.stride + 1, Wo = Wp / p.stride + 1;

        Tensor out(Shape{Ho, Wo, Co});
        const double* xd = x.data();
        const double* wd = w.data();
        double* od = out.data();
        for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox) {
                double* op = od + (static_cast<int64_t>(oy) * Wo + ox) * Co;
                for (int co = 0; co < Co; ++co) op[co] = b[co];
                for (int ky = 0; ky < K; ++ky) {
                    const int iy = oy * p.stride + ky - p.pad;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < K; ++kx) {
                        const int ix = ox * p.stride + kx - p.pad;
                        if (ix < 0 || ix >= W) continue;
                        const double* xp = xd + (static_cast<int64_t>(iy) * W + ix) * Ci;
                        const double* wp = wd + (static_cast<int64_t>(ky) * K + kx) * Ci * Co;
                        for (int ci = 0; ci < Ci; ++ci) {
                            const double a = xp[ci];
                            const double* wr = wp + static_cast<int64_t>(ci) * Co;
                            for (int co = 0; co < Co; ++co) op[co] += a * wr[co];
                        }
                    }
                }
            }
        }
        return out;
    }

    Tensor eval_leaky_relu(const std::vector<NodeId>& in, const OpParams& p) const {
        want_inputs(OpKind::LeakyRelu, in, 1);
        Tensor out = pv(in, 0);
        for (auto& v : out.values())
            if (v < 0.0) v *= p.slope;
        return out;
    }

    Tensor eval_max_pool2(const std::vector<NodeId>& in) {
        want_inputs(OpKind::MaxPool2, in, 1);
        const Tensor& x = pv(in, 0);
        if (x.rank() != 3 || x.dim(0) % 2 || x.dim(1) % 2)
            throw Error("max_pool2: input must be [H,W,C] with even H and W, got " + shape_str(x.shape()));
        const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
        Tensor out(Shape{H / 2, W / 2, C});
        pool_arg_.assign(out.values().size(), 0);
        for (int oy = 0; oy < H / 2; ++oy)
            for (int ox = 0; ox < W / 2; ++ox)
                for (int c = 0; c < C; ++c) {
                    // ties go to the row-major earliest element (strict >)
                    double best = -1.0;
                    int best_idx = -1;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const int64_t idx = (static_cast<int64_t>(2 * oy + dy) * W + (2 * ox + dx)) * C + c;
                            if (best_idx < 0 || x[idx] > best) {
                                best = x[idx];
                                best_idx = static_cast<int>(idx);
                            }
                        }
                    const int64_t oidx = (static_cast<int64_t>(oy) * (W / 2) + ox) * C + c;
                    out[oidx] = best;
                    pool_arg_[static_cast<size_t>(oidx)] = best_idx;
                }
        return out;
    }

    Tensor eval_dense(const std::vector<NodeId>& in) const {
        want_inputs(OpKind::Dense, in, 3);
        const Tensor& x = pv(in, 0);
        const Tensor& w = pv(in, 1);
        const Tensor& b = pv(in, 2);
        if (w.rank() != 2 || b.rank() != 1)
            throw Error("dense: expected weights [N,M] and bias [M], got " + shape_str(w.shape()) + ", " +
                        shape_str(b.shape()));
        const int N = w.dim(0), M = w.dim(1);
        if (x.size() != N)
            throw Error("dense: input " + shape_str(x.shape()) + " flattens to " + std::to_string(x.size()) +
                        " but weights expect " + std::to_string(N));
        if (b.dim(0) != M) throw Error("dense: bias " + shape_str(b.shape()) + " does not match width " + std::to_string(M));
        Tensor out(Shape{M});
        const double* wd = w.data();
        for (int j = 0; j < M; ++j) out[j] = b[j];
        for (int i = 0; i < N; ++i) {
            const double a = x[i];
            const double* wr = wd + static_cast<int64_t>(i) * M;
            for (int j = 0; j < M; ++j) out[j] += a * wr[j];
        }
        return out;
    }

    Tensor eval_softmax_ce(const std::vector<NodeId>& in, const OpParams& p) {
        want_inputs(OpKind::SoftmaxCE, in, 1);
        const Tensor& z = pv(in, 0);
        if (z.rank() != 1)
            throw Error("softmax_cross_entropy: logits must be rank 1, got " + shape_str(z.shape()));
        const int C = z.dim(0);
        if (p.label < 0 || p.label >= C)
            throw Error("softmax_cross_entropy: label " + std::to_string(p.label) + " out of range for " +
                        std::to_string(C) + " classes");
        double m = z[0];
        for (int i = 0; i < C; ++i) m = std::max(m, z[i]);
        double lse = 0.0;
        for (int i = 0; i < C; ++i) lse += std::exp(z[i] - m);
        ce_probs_.resize(static_cast<size_t>(C));
        for (int i = 0; i < C; ++i) ce_probs_[static_cast<size_t>(i)] = std::exp(z[i] - m) / lse;
        Tensor out(Shape{1});
        out[0] = std::log(lse) + m - z[p.label];
        return out;
    }

    Tensor eval_add(const std::vector<NodeId>& in) const {
        want_inputs(OpKind::Add, in, 2);
        const Tensor& a = pv(in, 0);
        const Tensor& b = pv(in, 1);
        if (!a.same_shape(b))
            throw Error("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
        Tensor out = a;
        for (int64_t i = 0; i < out.size(); ++i) out[i] += b[i];
        return out;
    }

    Tensor eval_scale(const std::vector<NodeId>& in, const OpParams& p) const {
        want_inputs(OpKind::Scale, in, 1);
        Tensor out = pv(in, 0);
        for (auto& v : out.values()) v = p.mul * v + p.add;
        return out;
    }

    Tensor eval_tanh(const std::vector<NodeId>& in) const {
        want_inputs(OpKind::Tanh, in, 1);
        Tensor out = pv(in, 0);
        for (auto& v : out.values()) v = std::tanh(v);
        return out;
    }

    Tensor eval_pick(const std::vector<NodeId>& in, const OpParams& p) const {
        want_inputs(OpKind::Pick, in, 1);
        const Tensor& x = pv(in, 0);
        if (p.index < 0 || p.index >= x.size())
            throw Error("pick: index " + std::to_string(p.index) + " out of range for " + shape_str(x.shape()));
        Tensor out(Shape{1});
        out[0] = x[p.index];
        return out;
    }

    Tensor eval_sum(const std::vector<NodeId>& in) const {
        want_inputs(OpKind::Sum, in, 1);
        const Tensor& x = pv(in, 0);
        Tensor out(Shape{1});
        double s = 0.0;
        for (double v : x.values()) s += v;
        out[0] = s;
        return out;
    }

    Tensor eval_sumsq(const std::vector<NodeId>& in) const {
        want_inputs(OpKind::SumSq, in, 1);
        const Tensor& x = pv(in, 0);
        Tensor out(Shape{1});
        double s = 0.0;
        for (double v : x.values()) s += v * v;
        out[0] = s;
        return out;
    }

    // ---- backward rules ----

    std::vector<double>* pgrad(NodeId id) {
        Tensor& t = nodes_[static_cast<size_t>(id)].out;
        return t.requires_grad ? &t.grad() : nullptr;
    }

    void backward_node(Node& n) {
        const std::vector<double>& g = n.out.grad();
        switch (n.kind) {
            case OpKind::Leaf:
                return;
            case OpKind::Conv2d: {
                const Tensor& x = pv(n.parents, 0);
                const Tensor& w = pv(n.parents, 1);
                auto* gx = pgrad(n.parents[0]);
                auto* gw = pgrad(n.parents[1]);
                auto* gb = pgrad(n.parents[2]);
                const int H = x.dim(0), W = x.dim(1), Ci = x.dim(2);
                const int K = w.dim(0), Co = w.dim(3);
                const int Ho = n.out.dim(0), Wo = n.out.dim(1);
                const double* xd = x.data();
                const double* wd = w.data();
                for (int oy = 0; oy < Ho; ++oy)
                    for (int ox = 0; ox < Wo; ++ox) {
                        const double* gp = g.data() + (static_cast<int64_t>(oy) * Wo + ox) * Co;
                        if (gb)
                            for (int co = 0; co < Co; ++co) (*gb)[static_cast<size_t>(co)] += gp[co];
                        for (int ky = 0; ky < K; ++ky) {
                            const int iy = oy * n.params.stride + ky - n.params.pad;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < K; ++kx) {
                                const int ix = ox * n.params.stride + kx - n.params.pad;
                                if (ix < 0 || ix >= W) continue;
                                const int64_t xoff = (static_cast<int64_t>(iy) * W + ix) * Ci;
                                const int64_t woff = (static_cast<int64_t>(ky) * K + kx) * Ci * Co;
                                for (int ci = 0; ci < Ci; ++ci) {
                                    const double xv = xd[xoff + ci];
                                    const double* wr = wd + woff + static_cast<int64_t>(ci) * Co;
                                    double acc = 0.0;
                                    for (int co = 0; co < Co; ++co) {
                                        const double gv = gp[co];
                                        if (gw) (*gw)[static_cast<size_t>(woff + ci * Co + co)] += xv * gv;
                                        acc += wr[co] * gv;
                                    }
                                    if (gx) (*gx)[static_cast<size_t>(xoff + ci)] += acc;
                                }
                            }
                        }
                    }
                return;
            }
            case OpKind::LeakyRelu: {
                const Tensor& x = pv(n.parents, 0);
                auto* gx = pgrad(n.parents[0]);
                if (!gx) return;
                // at the kink (x == 0) the positive branch is used
                for (int64_t i = 0; i < x.size(); ++i)
                    (*gx)[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * (x[i] >= 0.0 ? 1.0 : n.params.slope);
                return;
            }
            case OpKind::MaxPool2: {
                auto* gx = pgrad(n.parents[0]);
                if (!gx) return;
                for (size_t i = 0; i < n.iaux.size(); ++i)
                    (*gx)[static_cast<size_t>(n.iaux[i])] += g[i];
                return;
            }
            case OpKind::Dense: {
                const Tensor& x = pv(n.parents, 0);
                const Tensor& w = pv(n.parents, 1);
                auto* gx = pgrad(n.parents[0]);
                auto* gw = pgrad(n.parents[1]);
                auto* gb = pgrad(n.parents[2]);
                const int N = w.dim(0), M = w.dim(1);
                if (gb)
                    for (int j = 0; j < M; ++j) (*gb)[static_cast<size_t>(j)] += g[static_cast<size_t>(j)];
                const double* wd = w.data();
                for (int i = 0; i < N; ++i) {
                    const double xv = x[i];
                    const double* wr = wd + static_cast<int64_t>(i) * M;
                    double acc = 0.0;
                    for (int j = 0; j < M; ++j) {
                        if (gw) (*gw)[static_cast<size_t>(i) * M + j] += xv * g[static_cast<size_t>(j)];
                        acc += wr[j] * g[static_cast<size_t>(j)];
                    }
                    if (gx) (*gx)[static_cast<size_t>(i)] += acc;
                }
                return;
            }
            case OpKind::SoftmaxCE: {
                auto* gz = pgrad(n.parents[0]);
                if (!gz) return;
                const double gv = g[0];
                for (size_t i = 0; i < n.aux.size(); ++i) {
                    double d = n.aux[i];
                    if (static_cast<int>(i) == n.params.label) d -= 1.0;
                    (*gz)[i] += gv * d;
                }
                return;
            }
            case OpKind::Add: {
                auto* ga = pgrad(n.parents[0]);
                auto* gb = pgrad(n.parents[1]);
                for (size_t i = 0; i < g.size(); ++i) {
                    if (ga) (*ga)[i] += g[i];
                    if (gb) (*gb)[i] += g[i];
                }
                return;
            }
            case OpKind::Scale: {
                auto* gx = pgrad(n.parents[0]);
                if (!gx) return;
                for (size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * n.params.mul;
                return;
            }
            case OpKind::Tanh: {
                auto* gx = pgrad(n.parents[0]);
                if (!gx) return;
                const Tensor& y = n.out;
                for (int64_t i = 0; i < y.size(); ++i)
                    (*gx)[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * (1.0 - y[i] * y[i]);
                return;
            }
            case OpKind::Pick: {
                auto* gx = pgrad(n.parents[0]);
                if (gx) (*gx)[static_cast<size_t>(n.params.index)] += g[0];
                return;
            }
            case OpKind::Sum: {
                auto* gx = pgrad(n.parents[0]);
                if (!gx) return;
                for (auto& v : *gx) v += g[0];
                return;
            }
            case OpKind::SumSq: {
                const Tensor& x = pv(n.parents, 0);
                auto* gx = pgrad(n.parents[0]);
                if (!gx) return;
                for (int64_t i = 0; i < x.size(); ++i)
                    (*gx)[static_cast<size_t>(i)] += g[0] * 2.0 * x[i];
                return;
            }
        }
    }

    // scratch used to hand results from eval_* into push()
    std::vector<double> ce_probs_;
    std::vector<int> pool_arg_;
};

} // namespace signstorm
