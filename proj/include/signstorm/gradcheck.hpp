#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "signstorm/graph.hpp"
#include "signstorm/rng.hpp"

namespace signstorm {

// Central-finite-difference verification of every operator's backward rule.
//
// For scalar-valued operators the op output is the probe loss directly; for
// tensor-valued operators the probe is sumsq(op(inputs)), which is itself
// checked independently. Inputs are drawn uniformly from [-1,1] and nudged
// away from operator kinks (the leaky-ReLU origin, max-pool ties) so the
// difference quotient is well defined; linear-plus-quadratic probes make the
// central difference exact up to rounding.

struct GradCheckCase {
    OpKind kind = OpKind::Sum;
    OpParams params;
    std::vector<Shape> input_shapes;      // differentiable inputs, in op order
    double step = 1e-3;
};

inline GradCheckCase grad_check_case(OpKind kind) {
    GradCheckCase c;
    c.kind = kind;
    switch (kind) {
        case OpKind::Leaf:
            c.input_shapes = {{5}};
            break;
        case OpKind::Conv2d:
            c.params.stride = 1;
            c.params.pad = 1;
            c.input_shapes = {{6, 6, 2}, {3, 3, 2, 3}, {3}};
            break;
        case OpKind::LeakyRelu:
            c.params.slope = 0.01;
            c.input_shapes = {{17}};
            break;
        case OpKind::MaxPool2:
            c.input_shapes = {{4, 4, 3}};
            break;
        case OpKind::Dense:
            c.input_shapes = {{12}, {12, 5}, {5}};
            break;
        case OpKind::SoftmaxCE:
            c.input_shapes = {{7}};
            break;
        case OpKind::Add:
            c.input_shapes = {{9}, {9}};
            break;
        case OpKind::Scale:
            c.params.mul = 1.7;
            c.params.add = -0.3;
            c.input_shapes = {{9}};
            break;
        case OpKind::Tanh:
            c.input_shapes = {{9}};
            break;
        case OpKind::Pick:
            c.params.index = 3;
            c.input_shapes = {{9}};
            break;
        case OpKind::Sum:
            c.input_shapes = {{11}};
            break;
        case OpKind::SumSq:
            c.input_shapes = {{11}};
            break;
    }
    return c;
}

namespace detail {

inline bool scalar_valued(OpKind k) {
    return k == OpKind::SoftmaxCE || k == OpKind::Pick || k == OpKind::Sum || k == OpKind::SumSq;
}

inline void fill_uniform(Tensor& t, SplitMix64& rng) {
    for (auto& v : t.values()) v = rng.next_double(-1.0, 1.0);
}

// Push leaky-ReLU inputs away from the origin and max-pool window mates
// apart, so finite differences never straddle a kink.
inline void avoid_kinks(OpKind kind, std::vector<Tensor>& inputs, double margin) {
    if (kind == OpKind::LeakyRelu) {
        for (auto& v : inputs[0].values())
            if (std::fabs(v) < margin) v = v < 0.0 ? v - margin : v + margin;
    }
    if (kind == OpKind::MaxPool2) {
        // re-base the four window mates 0.1 apart with +-0.04 jitter, so the
        // minimum gap (0.02) stays well clear of the difference step
        Tensor& x = inputs[0];
        const int W = x.dim(1), C = x.dim(2);
        (void)margin;
        for (int oy = 0; oy < x.dim(0) / 2; ++oy)
            for (int ox = 0; ox < W / 2; ++ox)
                for (int c = 0; c < C; ++c) {
                    int r = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx, ++r) {
                            int64_t idx = (static_cast<int64_t>(2 * oy + dy) * W + 2 * ox + dx) * C + c;
                            x[idx] = -0.15 + 0.1 * static_cast<double>(r) + 0.04 * x[idx];
                        }
                }
    }
}

inline double eval_probe(const GradCheckCase& c, const std::vector<Tensor>& inputs,
                         std::vector<std::vector<double>>* grads_out) {
    Graph g;
    std::vector<NodeId> ids;
    ids.reserve(inputs.size());
    for (const Tensor& t : inputs) ids.push_back(g.input(t, /*requires_grad=*/true));
    NodeId loss;
    if (c.kind == OpKind::Leaf) {
        // constant probe: the loss ignores every differentiable input
        Tensor konst(Shape{1}, 0.75);
        loss = g.sum(g.input(konst, false));
    } else {
        NodeId out = g.forward_op(c.kind, ids, c.params);
        loss = scalar_valued(c.kind) ? out : g.sumsq(out);
    }
    g.backward(loss);
    if (grads_out) {
        grads_out->clear();
        for (NodeId id : ids) grads_out->push_back(g.value(id).grad());
    }
    return g.value(loss)[0];
}

} // namespace detail

// Max over all inputs and elements of |analytic - numeric| / max(1e-8, |numeric|),
// numeric being the central difference (f(x+h) - f(x-h)) / 2h.
inline double grad_check(const GradCheckCase& c, uint64_t seed) {
    SplitMix64 rng(seed * 0x9E3779B97F4A7C15ULL + 0x243F6A8885A308D3ULL);
    std::vector<Tensor> inputs;
    for (const Shape& s : c.input_shapes) {
        Tensor t(s);
        detail::fill_uniform(t, rng);
        inputs.push_back(std::move(t));
    }
    detail::avoid_kinks(c.kind, inputs, 5.0 * c.step);

    std::vector<std::vector<double>> analytic;
    detail::eval_probe(c, inputs, &analytic);

    double max_rel = 0.0;
    for (size_t ti = 0; ti < inputs.size(); ++ti) {
        for (int64_t i = 0; i < inputs[ti].size(); ++i) {
            const double keep = inputs[ti][i];
            inputs[ti][i] = keep + c.step;
            const double fp = detail::eval_probe(c, inputs, nullptr);
            inputs[ti][i] = keep - c.step;
            const double fm = detail::eval_probe(c, inputs, nullptr);
            inputs[ti][i] = keep;
            const double numeric = (fp - fm) / (2.0 * c.step);
            const double rel = std::fabs(analytic[ti][static_cast<size_t>(i)] - numeric) /
                               std::max(1e-8, std::fabs(numeric));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

inline double grad_check(OpKind kind, uint64_t seed) { return grad_check(grad_check_case(kind), seed); }

inline std::vector<OpKind> all_op_kinds() {
    return {OpKind::Leaf,      OpKind::Conv2d, OpKind::LeakyRelu, OpKind::MaxPool2,
            OpKind::Dense,     OpKind::SoftmaxCE, OpKind::Add,    OpKind::Scale,
            OpKind::Tanh,      OpKind::Pick,   OpKind::Sum,       OpKind::SumSq};
}

} // namespace signstorm
