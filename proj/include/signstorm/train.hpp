#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "signstorm/data/dataset.hpp"
#include "signstorm/model.hpp"
#include "signstorm/rng.hpp"

namespace signstorm {

struct TrainConfig {
    int epochs = 20;
    double learning_rate = 0.05;   // steps down x0.1 at 50% and 75% of epochs
    double weight_decay = 0.0005;
    int batch_size = 32;
    uint64_t seed = 0;

    void validate() const {
        if (epochs < 1) throw Error("train config: epochs must be >= 1");
        if (learning_rate < 0.0) throw Error("train config: learning_rate must be >= 0");
        if (weight_decay < 0.0) throw Error("train config: weight_decay must be >= 0");
        if (batch_size < 1) throw Error("train config: batch_size must be >= 1");
    }
};

struct EpochStats {
    int epoch = 0;          // 1-based
    double train_loss = 0;  // mean cross-entropy over the epoch
    double val_accuracy = 0;
};

struct TrainResult {
    Model model;
    std::vector<EpochStats> log;
};

struct Evaluation {
    double accuracy = 0.0;
    std::vector<std::vector<int64_t>> confusion; // [true][predicted]
};

// One SGD step with decoupled-from-nothing classic L2 weight decay:
// p -= lr * (grad + wd * p), applied to every parameter including biases.
inline void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr, double wd) {
    for (size_t i = 0; i < params.size(); ++i) {
        double* pd = params[i].data();
        const double* gd = grads[i].data();
        const int64_t n = params[i].size();
        for (int64_t j = 0; j < n; ++j) pd[j] -= lr * (gd[j] + wd * pd[j]);
    }
}

inline Evaluation evaluate(const Model& model, const std::vector<LabeledExample>& examples) {
    if (examples.empty()) throw Error("evaluate: empty example set");
    const int C = model.num_classes();
    Evaluation ev;
    ev.confusion.assign(static_cast<size_t>(C), std::vector<int64_t>(static_cast<size_t>(C), 0));
    int64_t correct = 0;
    for (const LabeledExample& ex : examples) {
        if (ex.class_id < 0 || ex.class_id >= C)
            throw Error("evaluate: example " + ex.source_path + " has label " + std::to_string(ex.class_id) +
                        " outside [0," + std::to_string(C) + ")");
        const Prediction p = model.predict(ex.image, 0.0);
        ev.confusion[static_cast<size_t>(ex.class_id)][static_cast<size_t>(p.label)]++;
        if (p.label == ex.class_id) ++correct;
    }
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
    return ev;
}

// Deterministic single-threaded SGD training: same seed, data and config
// give bit-identical weights.
inline TrainResult train(const ModelConfig& mcfg, const DatasetSplit& data, const TrainConfig& tcfg) {
    mcfg.validate();
    tcfg.validate();
    if (data.train.empty()) throw Error("train: empty training split");
    if (data.val.empty()) throw Error("train: empty validation split");
    for (size_t i = 0; i < data.train.size(); ++i) {
        const LabeledExample& ex = data.train[i];
        if (ex.class_id < 0 || ex.class_id >= mcfg.num_classes)
            throw Error("train: example " + (ex.source_path.empty() ? std::to_string(i) : ex.source_path) +
                        " has label " + std::to_string(ex.class_id) + " outside [0," +
                        std::to_string(mcfg.num_classes) + ")");
    }

    TrainResult result;
    result.model = Model::init(mcfg, tcfg.seed);
    std::vector<Tensor>& params = result.model.params();

    std::vector<Tensor> grad_acc;
    for (const Tensor& p : params) grad_acc.emplace_back(p.shape(), 0.0);

    std::vector<size_t> order(data.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        double lr = tcfg.learning_rate;
        if (epoch >= tcfg.epochs / 2) lr *= 0.1;
        if (epoch >= (3 * tcfg.epochs) / 4) lr *= 0.1;

        SplitMix64 shuffle_rng(derive_seed(tcfg.seed, 0xE0000000ULL + static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        size_t pos = 0;
        while (pos < order.size()) {
            const size_t batch_end = std::min(pos + static_cast<size_t>(tcfg.batch_size), order.size());
            const double inv_batch = 1.0 / static_cast<double>(batch_end - pos);
            for (Tensor& ga : grad_acc) std::fill(ga.values().begin(), ga.values().end(), 0.0);
            for (; pos < batch_end; ++pos) {
                const LabeledExample& ex = data.train[order[pos]];
                Graph g;
                Model::Forward f = result.model.build(g, ex.image, false, true);
                NodeId loss = g.softmax_ce(f.logits, ex.class_id);
                g.backward(loss);
                loss_sum += g.value(loss)[0];
                for (size_t pi = 0; pi < params.size(); ++pi) {
                    const std::vector<double>& gsrc = g.grad(f.param_nodes[pi]);
                    double* dst = grad_acc[pi].data();
                    for (size_t j = 0; j < gsrc.size(); ++j) dst[j] += gsrc[j];
                }
            }
            for (Tensor& ga : grad_acc)
                for (auto& v : ga.values()) v *= inv_batch;
            sgd_step(params, grad_acc, lr, tcfg.weight_decay);
        }

        EpochStats stats;
        stats.epoch = epoch + 1;
        stats.train_loss = loss_sum / static_cast<double>(data.train.size());
        stats.val_accuracy = evaluate(result.model, data.val).accuracy;
        result.log.push_back(stats);
    }
    return result;
}

} // namespace signstorm
