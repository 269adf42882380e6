// Copyright 2026 The progre Authors
// Weighted-sum representation assembly, probe heads, and layer-weight
// reporting.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "progre/autograd.hpp"
#include "progre/model.hpp"
#include "progre/nn.hpp"
#include "progre/objectives.hpp"

namespace progre {

struct RepEntry {
    std::string tag;  // "pitch", "speaker", "layer_<k>"
    Tensor rep;       // T x D
};

// Ordered stack [O^p, O^s, O_1..O_n with O_i dropped]; O_i is superseded by
// the speaker representation extracted from it. Always n + 1 entries.
struct RepresentationStack {
    std::vector<RepEntry> entries;
    std::size_t insert_layer = 0;

    std::size_t size() const { return entries.size(); }
};

inline RepresentationStack assemble_stack(const EncoderOutputs& out, const ModelConfig& cfg) {
    if (out.layer_outputs.size() != cfg.num_layers)
        throw std::invalid_argument("probing: incomplete encoder outputs");
    RepresentationStack stack;
    stack.insert_layer = cfg.insert_layer;
    stack.entries.push_back({"pitch", out.pitch_repr});
    stack.entries.push_back({"speaker", out.speaker_repr});
    for (std::size_t k = 1; k <= cfg.num_layers; ++k) {
        if (k == cfg.insert_layer) continue;
        stack.entries.push_back({"layer_" + std::to_string(k), out.layer_outputs[k - 1]});
    }
    return stack;
}

struct LayerWeights {
    Tensor logits;   // one per stack entry
    Tensor weights;  // softmax(logits)

    static LayerWeights from_logits(Tensor logits) {
        LayerWeights w;
        w.weights = Tensor({logits.size()});
        double mx = -HUGE_VAL;
        for (std::size_t i = 0; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
        double sum = 0.0;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            w.weights[i] = std::exp(logits[i] - mx);
            sum += w.weights[i];
        }
        for (std::size_t i = 0; i < logits.size(); ++i) w.weights[i] /= sum;
        w.logits = std::move(logits);
        return w;
    }

    // Direct weight injection (bypasses the softmax) for selection tests
    // and externally supplied weights.
    static LayerWeights from_weights(Tensor weights) {
        LayerWeights w;
        w.logits = Tensor::zeros({weights.size()});
        w.weights = std::move(weights);
        return w;
    }
};

// R = sum_i weights[i] * reps[i].
inline Tensor weighted_sum(const RepresentationStack& stack, const LayerWeights& w) {
    if (stack.entries.empty()) throw std::invalid_argument("probing: empty stack");
    if (w.weights.size() != stack.entries.size())
        throw std::invalid_argument("probing: weight count does not match stack size");
    Tensor r = Tensor::zeros(stack.entries[0].rep.shape());
    for (std::size_t i = 0; i < stack.entries.size(); ++i) {
        const Tensor& rep = stack.entries[i].rep;
        if (!rep.same_shape(r)) throw std::invalid_argument("probing: stack entry shape mismatch");
        if (w.weights[i] == 1.0 && [&] {
                for (std::size_t j = 0; j < w.weights.size(); ++j)
                    if (j != i && w.weights[j] != 0.0) return false;
                return true;
            }()) {
            return rep;  // one-hot selection is bit-exact
        }
    }
    for (std::size_t i = 0; i < stack.entries.size(); ++i) {
        const double wi = w.weights[i];
        if (wi == 0.0) continue;
        const Tensor& rep = stack.entries[i].rep;
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += wi * rep[j];
    }
    return r;
}

enum class ProbeTask { kUtteranceClassification, kFrameClassification };

struct ProbeConfig {
    std::size_t steps = 500;
    double lr = 1e-2;
};

struct ProbeExample {
    RepresentationStack stack;
    int label = 0;                 // utterance task
    std::vector<int> frame_labels; // frame task
};

struct ProbeResult {
    LayerWeights layer_weights;
    std::vector<std::string> tags;
    Tensor head_weight;  // D x num_classes
    Tensor head_bias;    // num_classes
    double accuracy = 0.0;
    std::size_t steps = 0;
    ProbeTask task = ProbeTask::kUtteranceClassification;
};

// Trains the layer-weight logits jointly with a linear head by
// cross-entropy; the encoder stays frozen (stacks are precomputed
// constants). Utterance task mean-pools over time; frame task classifies
// every frame.
inline ProbeResult train_probe(ProbeTask task, const std::vector<ProbeExample>& examples,
                               std::size_t num_classes, const ProbeConfig& cfg,
                               std::uint64_t seed) {
    if (examples.empty()) throw std::invalid_argument("probing: no training examples");
    const std::size_t S = examples[0].stack.size();
    const std::size_t D = examples[0].stack.entries[0].rep.cols();
    for (const auto& ex : examples) {
        if (ex.stack.size() != S) throw std::invalid_argument("probing: stack size mismatch");
        if (task == ProbeTask::kFrameClassification &&
            ex.frame_labels.size() < ex.stack.entries[0].rep.rows())
            throw std::invalid_argument("probing: frame labels shorter than frames");
    }

    ParameterStore store;
    Rng rng(derive_seed(seed, "probe.init"));
    store.add("probe.logits", Tensor::zeros({S}));
    store.add("probe.head.weight", Tensor::gaussian({D, num_classes}, 1.0 / std::sqrt(D), rng));
    store.add("probe.head.bias", Tensor::zeros({num_classes}));
    AdamConfig adam_cfg;
    adam_cfg.weight_decay = 0.0;
    AdamOptimizer adam(adam_cfg);

    auto build_logits = [&](Graph& g, const ProbeExample& ex) {
        Var w = g.softmax_rows(g.reshape(g.param(store.get("probe.logits")), {1, S}));
        Var r;
        for (std::size_t i = 0; i < S; ++i) {
            Var wi = g.reshape(g.slice_cols(w, i, 1), {1});
            Var scaled = g.scale_by(g.constant(ex.stack.entries[i].rep), wi);
            r = i == 0 ? scaled : g.add(r, scaled);
        }
        if (task == ProbeTask::kUtteranceClassification) {
            Var pooled = g.reshape(g.col_means(r), {1, D});
            return nn::linear(g, pooled, g.param(store.get("probe.head.weight")),
                              g.param(store.get("probe.head.bias")));
        }
        return nn::linear(g, r, g.param(store.get("probe.head.weight")),
                          g.param(store.get("probe.head.bias")));
    };

    auto targets_of = [&](const ProbeExample& ex, std::size_t frames) {
        std::vector<std::size_t> t;
        if (task == ProbeTask::kUtteranceClassification) {
            t.push_back(static_cast<std::size_t>(ex.label));
        } else {
            for (std::size_t i = 0; i < frames; ++i)
                t.push_back(static_cast<std::size_t>(ex.frame_labels[i]));
        }
        return t;
    };

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        store.zero_grads();
        Graph g(true);
        Var loss;
        std::size_t total_rows = 0;
        std::vector<Var> losses;
        for (const auto& ex : examples) {
            Var logits = build_logits(g, ex);
            const std::size_t rows = g.value(logits).rows();
            Var lse = g.logsumexp_rows(logits);
            Var truth = g.gather_rows(logits, targets_of(ex, rows));
            losses.push_back(g.sum_all(g.sub(lse, truth)));
            total_rows += rows;
        }
        loss = losses[0];
        for (std::size_t i = 1; i < losses.size(); ++i) loss = g.add(loss, losses[i]);
        loss = g.mul_scalar(loss, 1.0 / static_cast<double>(total_rows));
        g.backward(loss);
        adam.step(store, cfg.lr);
    }

    ProbeResult res;
    res.task = task;
    res.steps = cfg.steps;
    res.layer_weights = LayerWeights::from_logits(store.get("probe.logits").value);
    res.head_weight = store.get("probe.head.weight").value;
    res.head_bias = store.get("probe.head.bias").value;
    for (const auto& e : examples[0].stack.entries) res.tags.push_back(e.tag);

    // Training-set accuracy with the final parameters.
    std::size_t correct = 0, total = 0;
    for (const auto& ex : examples) {
        Graph g(false);
        Var logits = build_logits(g, ex);
        const Tensor& lv = g.value(logits);
        const auto targets = targets_of(ex, lv.rows());
        for (std::size_t r = 0; r < lv.rows(); ++r) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < lv.cols(); ++c)
                if (lv.at(r, c) > lv.at(r, best)) best = c;
            correct += best == targets[r];
            ++total;
        }
    }
    res.accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    return res;
}

// CSV report: tag, weight, plot value (optionally clipped), top-2 marker.
// The raw weight column is never clipped.
inline void export_layer_weights(const LayerWeights& w, const std::vector<std::string>& tags,
                                 const std::string& path, double clip = 0.0) {
    if (tags.size() != w.weights.size())
        throw std::invalid_argument("probing: tag/weight count mismatch");
    std::vector<std::size_t> order(tags.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return w.weights[a] > w.weights[b]; });
    std::vector<bool> top2(tags.size(), false);
    for (std::size_t i = 0; i < std::min<std::size_t>(2, order.size()); ++i) top2[order[i]] = true;

    std::ostringstream out;
    out << "tag,weight,plot_weight,top2\n";
    out.precision(12);
    for (std::size_t i = 0; i < tags.size(); ++i) {
        const double plot = clip > 0.0 ? std::min(w.weights[i], clip) : w.weights[i];
        out << tags[i] << "," << w.weights[i] << "," << plot << "," << (top2[i] ? 1 : 0) << "\n";
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("probing: cannot write " + path);
    f << out.str();
}

}  // namespace progre
