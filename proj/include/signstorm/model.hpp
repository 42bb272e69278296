#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "signstorm/graph.hpp"
#include "signstorm/rng.hpp"
#include "signstorm/tensor.hpp"

namespace signstorm {

struct ConvBlock {
    int filters = 16;
    int kernel = 3;
};

// Architecture of the differentiable surrogate classifier: per block
// conv (stride 1, same padding) -> leaky ReLU -> 2x2 max pool, then a dense
// layer and a softmax head. Defaults give a model small enough to train in
// minutes on one CPU core yet deep enough for meaningful activation maps.
struct ModelConfig {
    int input_resolution = 32;
    int channels = 3;
    int num_classes = 29;
    std::vector<ConvBlock> conv_blocks = {{16, 3}, {32, 3}, {64, 3}};
    int dense_width = 128;
    double leaky_slope = 0.01;

    void validate() const {
        if (num_classes < 2) throw Error("model config: num_classes must be >= 2");
        if (channels < 1) throw Error("model config: channels must be >= 1");
        if (dense_width < 1) throw Error("model config: dense_width must be >= 1");
        if (conv_blocks.empty()) throw Error("model config: at least one conv block required");
        int r = input_resolution;
        for (const ConvBlock& b : conv_blocks) {
            if (b.filters < 1) throw Error("model config: conv filters must be >= 1");
            if (b.kernel < 1 || b.kernel % 2 == 0)
                throw Error("model config: conv kernel must be odd, got " + std::to_string(b.kernel));
            if (r % 2 != 0)
                throw Error("model config: input_resolution " + std::to_string(input_resolution) +
                            " is not divisible by 2^" + std::to_string(conv_blocks.size()) + " pool layers");
            r /= 2;
        }
        if (r < 1) throw Error("model config: input_resolution too small for the pool stack");
    }

    bool operator==(const ModelConfig& o) const {
        if (input_resolution != o.input_resolution || channels != o.channels || num_classes != o.num_classes ||
            dense_width != o.dense_width || leaky_slope != o.leaky_slope ||
            conv_blocks.size() != o.conv_blocks.size())
            return false;
        for (size_t i = 0; i < conv_blocks.size(); ++i)
            if (conv_blocks[i].filters != o.conv_blocks[i].filters || conv_blocks[i].kernel != o.conv_blocks[i].kernel)
                return false;
        return true;
    }
};

struct Prediction {
    int label = -1;
    double score = 0.0;   // softmax probability of label
    bool recognized = false;
};

// argmax with lowest-index tie break, recognized iff score >= threshold
inline Prediction prediction_from_probs(const std::vector<double>& probs, double reject_threshold) {
    Prediction p;
    p.label = 0;
    p.score = probs.empty() ? 0.0 : probs[0];
    for (size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > p.score) {
            p.score = probs[i];
            p.label = static_cast<int>(i);
        }
    p.recognized = p.score >= reject_threshold;
    return p;
}

struct LossGrad {
    double loss = 0.0;
    Tensor grad;                 // d loss / d image
    std::vector<double> probs;   // softmax of the logits at this image
};

struct LogitDiffGrad {
    std::vector<double> logits;
    Tensor grad;                 // d (z[plus] - z[minus]) / d image
};

class Model {
public:
    Model() = default;

    static Model init(ModelConfig cfg, uint64_t seed) {
        cfg.validate();
        Model m;
        m.cfg_ = std::move(cfg);
        SplitMix64 rng(seed ^ 0x6D6F64656C696E69ULL);
        int cin = m.cfg_.channels;
        int res = m.cfg_.input_resolution;
        for (const ConvBlock& b : m.cfg_.conv_blocks) {
            const int fan_in = b.kernel * b.kernel * cin;
            const int fan_out = b.kernel * b.kernel * b.filters;
            m.params_.push_back(uniform_tensor({b.kernel, b.kernel, cin, b.filters}, fan_in, fan_out, rng));
            m.params_.push_back(Tensor(Shape{b.filters}, 0.0));
            cin = b.filters;
            res /= 2;
        }
        const int flat = res * res * cin;
        m.params_.push_back(uniform_tensor({flat, m.cfg_.dense_width}, flat, m.cfg_.dense_width, rng));
        m.params_.push_back(Tensor(Shape{m.cfg_.dense_width}, 0.0));
        m.params_.push_back(uniform_tensor({m.cfg_.dense_width, m.cfg_.num_classes}, m.cfg_.dense_width,
                                           m.cfg_.num_classes, rng));
        m.params_.push_back(Tensor(Shape{m.cfg_.num_classes}, 0.0));
        return m;
    }

    static Model from_params(ModelConfig cfg, std::vector<Tensor> params) {
        cfg.validate();
        Model m;
        m.cfg_ = std::move(cfg);
        m.params_ = std::move(params);
        return m;
    }

    const ModelConfig& config() const { return cfg_; }
    const std::vector<Tensor>& params() const { return params_; }
    std::vector<Tensor>& params() { return params_; }
    int num_classes() const { return cfg_.num_classes; }
    Shape input_shape() const { return {cfg_.input_resolution, cfg_.input_resolution, cfg_.channels}; }

    std::vector<std::string> conv_layer_names() const {
        std::vector<std::string> names;
        for (size_t i = 0; i < cfg_.conv_blocks.size(); ++i) names.push_back("conv" + std::to_string(i + 1));
        return names;
    }

    struct Forward {
        NodeId input = -1;
        std::vector<NodeId> conv_out;    // conv output (pre-activation) per block
        std::vector<NodeId> param_nodes; // leaves in declaration order
        NodeId logits = -1;
    };

    // Registers the whole forward pass on g. Weights are copied into the
    // graph, so concurrent graphs can share one Model read-only.
    Forward build(Graph& g, const Tensor& image, bool input_grad, bool param_grad = false) const {
        check_input(image);
        Forward f;
        f.input = g.input(image, input_grad);
        NodeId cur = f.input;
        size_t pi = 0;
        for (const ConvBlock& b : cfg_.conv_blocks) {
            NodeId w = g.input(params_[pi++], param_grad);
            NodeId bias = g.input(params_[pi++], param_grad);
            f.param_nodes.push_back(w);
            f.param_nodes.push_back(bias);
            NodeId conv = g.conv2d(cur, w, bias, 1, b.kernel / 2);
            f.conv_out.push_back(conv);
            cur = g.max_pool2(g.leaky_relu(conv, cfg_.leaky_slope));
        }
        NodeId dw = g.input(params_[pi++], param_grad);
        NodeId db = g.input(params_[pi++], param_grad);
        NodeId hw = g.input(params_[pi++], param_grad);
        NodeId hb = g.input(params_[pi++], param_grad);
        f.param_nodes.push_back(dw);
        f.param_nodes.push_back(db);
        f.param_nodes.push_back(hw);
        f.param_nodes.push_back(hb);
        cur = g.leaky_relu(g.dense(cur, dw, db), cfg_.leaky_slope);
        f.logits = g.dense(cur, hw, hb);
        return f;
    }

    std::vector<double> probs(const Tensor& image) const {
        Graph g;
        Forward f = build(g, image, false);
        return softmax(g.value(f.logits).values());
    }

    Prediction predict(const Tensor& image, double reject_threshold) const {
        return prediction_from_probs(probs(image), reject_threshold);
    }

    // Cross-entropy loss of the given label plus its gradient w.r.t. the
    // image; probs come out of the same forward pass.
    LossGrad ce_loss_grad(const Tensor& image, int label) const {
        Graph g;
        Forward f = build(g, image, true);
        NodeId loss = g.softmax_ce(f.logits, label);
        g.backward(loss);
        LossGrad out;
        out.loss = g.value(loss)[0];
        out.grad = Tensor::from(image.shape(), g.grad(f.input));
        out.probs = g.probs(loss);
        return out;
    }

    // Gradient of the logit difference z[plus] - z[minus] w.r.t. the image
    // (the margin direction used by the optimization-based attacks).
    LogitDiffGrad logit_diff_grad(const Tensor& image, int plus, int minus) const {
        Graph g;
        Forward f = build(g, image, true);
        if (plus < 0 || plus >= cfg_.num_classes || minus < 0 || minus >= cfg_.num_classes)
            throw Error("logit_diff_grad: class index out of range");
        NodeId diff = g.add(g.pick(f.logits, plus), g.scale(g.pick(f.logits, minus), -1.0));
        g.backward(diff);
        LogitDiffGrad out;
        out.logits = g.value(f.logits).values();
        out.grad = Tensor::from(image.shape(), g.grad(f.input));
        return out;
    }

    void check_input(const Tensor& image) const {
        if (image.rank() != 3 || image.dim(0) != cfg_.input_resolution ||
            image.dim(1) != cfg_.input_resolution || image.dim(2) != cfg_.channels)
            throw Error("model: input " + shape_str(image.shape()) + " does not match expected resolution [" +
                        std::to_string(cfg_.input_resolution) + "," + std::to_string(cfg_.input_resolution) + "," +
                        std::to_string(cfg_.channels) + "]");
    }

private:
    static Tensor uniform_tensor(Shape shape, int fan_in, int fan_out, SplitMix64& rng) {
        Tensor t(std::move(shape));
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (auto& v : t.values()) v = rng.next_double(-a, a);
        return t;
    }

    ModelConfig cfg_;
    std::vector<Tensor> params_;
};

} // namespace signstorm
