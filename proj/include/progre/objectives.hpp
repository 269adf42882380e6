// Copyright 2026 The progre Authors
// Pre-training losses, their weighted combination, and the optimizer step.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "progre/mask.hpp"
#include "progre/model.hpp"
#include "progre/nn.hpp"

namespace progre {

// Utterance-level speaker embedding target (unit L2 norm).
struct SpeakerTarget {
    Tensor v;  // {K}

    static SpeakerTarget normalized(Tensor raw) {
        double n2 = 0.0;
        for (double x : raw.data()) n2 += x * x;
        const double n = std::sqrt(n2);
        if (n < 1e-12) throw std::invalid_argument("speaker_teacher: zero target vector");
        for (double& x : raw.data()) x /= n;
        return SpeakerTarget{std::move(raw)};
    }
};

struct LossWeights {
    double lambda_f = 10.0;
    double lambda_s = 1.0;
    double lambda_c = 1.0;
};

struct LossBreakdown {
    double l_f = 0.0;
    double l_s = 0.0;
    double l_c = 0.0;
    double total = 0.0;
    double lambda_f = 10.0;
    double lambda_s = 1.0;
    double lambda_c = 1.0;
};

inline LossBreakdown total_loss(double l_f, double l_s, double l_c,
                                const LossWeights& w = LossWeights()) {
    LossBreakdown b;
    b.l_f = l_f;
    b.l_s = l_s;
    b.l_c = l_c;
    b.lambda_f = w.lambda_f;
    b.lambda_s = w.lambda_s;
    b.lambda_c = w.lambda_c;
    b.total = w.lambda_f * l_f + w.lambda_s * l_s + w.lambda_c * l_c;
    return b;
}

// ---- graph builders ----

// Mean over all frames and channels of x_f squared.
inline Var feature_penalty_graph(Graph& g, Var x_f) { return g.mean_all(g.mul(x_f, x_f)); }

// -(1/|T_m|) sum_{t in T_m} log sigmoid(cos(A_s o^s_t, s)).
inline Var speaker_loss_graph(Graph& g, Var o_s, const SpeakerTarget& target, Var a_s,
                              const MaskSpec& mask) {
    if (!mask.any()) throw std::invalid_argument("objectives: speaker loss needs >=1 masked frame");
    Var sel = g.select_rows(o_s, mask.masked_indices());
    Var proj = g.matmul(sel, a_s);                       // Tm x K
    Var pn = nn::normalize_rows(g, proj);
    Tensor s_unit = target.v;                            // already unit norm by contract
    Var cos = g.reshape(g.matmul_nt(pn, g.constant(Tensor({1, s_unit.size()}, s_unit.data()))),
                        {mask.count()});
    // -log sigmoid(c) == log(1 + exp(-c)); cosine is bounded, no overflow.
    Var losses = g.log_(g.add_scalar(g.exp_(g.neg(cos)), 1.0));
    return g.mean_all(losses);
}

// Masked-frame NLL of softmax over cosine logits against unit embeddings,
// temperature tau.
inline Var content_loss_graph(Graph& g, Var o_c, const std::vector<int>& labels, Var a_c,
                              Var unit_embeddings, const MaskSpec& mask, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("objectives: tau must be positive");
    if (!mask.any()) throw std::invalid_argument("objectives: content loss needs >=1 masked frame");
    if (labels.size() != mask.masked.size())
        throw std::invalid_argument("objectives: label count != frame count");
    const std::size_t U = g.value(unit_embeddings).rows();
    std::vector<std::size_t> midx = mask.masked_indices();
    std::vector<std::size_t> mlabels;
    mlabels.reserve(midx.size());
    for (std::size_t t : midx) {
        if (labels[t] < 0 || static_cast<std::size_t>(labels[t]) >= U)
            throw std::invalid_argument("objectives: pseudo-label out of codebook range");
        mlabels.push_back(static_cast<std::size_t>(labels[t]));
    }
    Var sel = g.select_rows(o_c, midx);
    Var proj = nn::normalize_rows(g, g.matmul(sel, a_c));        // Tm x E
    Var en = nn::normalize_rows(g, unit_embeddings);             // U x E
    Var logits = g.mul_scalar(g.matmul_nt(proj, en), 1.0 / tau); // Tm x U
    Var lse = g.logsumexp_rows(logits);
    Var truth = g.gather_rows(logits, std::move(mlabels));
    return g.mean_all(g.sub(lse, truth));
}

// ---- plain-tensor op surfaces ----

inline double feature_penalty(const Tensor& x_f) {
    if (!x_f.all_finite()) throw std::invalid_argument("objectives: non-finite features");
    Graph g(false);
    return g.value(feature_penalty_graph(g, g.constant(x_f)))[0];
}

inline double speaker_loss(const Tensor& o_s, const SpeakerTarget& target, const Tensor& a_s,
                           const MaskSpec& mask) {
    Graph g(false);
    return g.value(speaker_loss_graph(g, g.constant(o_s), target, g.constant(a_s), mask))[0];
}

inline double content_loss(const Tensor& o_c, const std::vector<int>& labels, const Tensor& a_c,
                           const Tensor& unit_embeddings, const MaskSpec& mask, double tau) {
    Graph g(false);
    return g.value(content_loss_graph(g, g.constant(o_c), labels, g.constant(a_c),
                                      g.constant(unit_embeddings), mask, tau))[0];
}

// ---- learning-rate schedule ----

// Linear warmup from 0 to peak over the first warmup_frac of total steps,
// then linear decay back to 0 at total_steps.
inline double learning_rate_at(std::size_t step, std::size_t total_steps, double peak_lr,
                               double warmup_frac = 0.08) {
    if (total_steps == 0) return 0.0;
    const double warmup = warmup_frac * static_cast<double>(total_steps);
    const double s = static_cast<double>(step);
    if (warmup > 0.0 && s < warmup) return peak_lr * s / warmup;
    const double denom = static_cast<double>(total_steps) - warmup;
    if (denom <= 0.0) return peak_lr;
    const double lr = peak_lr * (static_cast<double>(total_steps) - s) / denom;
    return lr > 0.0 ? lr : 0.0;
}

// ---- Adam with decoupled weight decay ----

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-6;
    double weight_decay = 0.01;
    double grad_clip_norm = 0.0;  // 0 disables clipping
};

class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg = AdamConfig()) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    std::size_t steps_taken() const { return t_; }

    // One update over every parameter in the store. Gradients must already
    // be accumulated; weight decay is decoupled (scaled by lr, not part of
    // the moment estimates).
    void step(ParameterStore& store, double lr) {
        ++t_;
        double scale = 1.0;
        if (cfg_.grad_clip_norm > 0.0) {
            double norm2 = 0.0;
            for (const std::string& name : store.param_names())
                for (double gi : store.get(name).grad.data()) norm2 += gi * gi;
            const double norm = std::sqrt(norm2);
            if (norm > cfg_.grad_clip_norm) scale = cfg_.grad_clip_norm / norm;
        }
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (const std::string& name : store.param_names()) {
            ParamSlot& slot = store.get(name);
            auto [it, fresh] = state_.try_emplace(name);
            if (fresh) {
                it->second.m = Tensor::zeros(slot.value.shape());
                it->second.v = Tensor::zeros(slot.value.shape());
            }
            Tensor& m = it->second.m;
            Tensor& v = it->second.v;
            for (std::size_t i = 0; i < slot.value.size(); ++i) {
                const double gi = slot.grad[i] * scale;
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                slot.value[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                       cfg_.weight_decay * slot.value[i]);
            }
        }
    }

    // Moment access for checkpointing.
    const std::map<std::string, std::pair<const Tensor*, const Tensor*>> moments() const {
        std::map<std::string, std::pair<const Tensor*, const Tensor*>> out;
        for (const auto& [k, st] : state_) out.emplace(k, std::make_pair(&st.m, &st.v));
        return out;
    }

    void restore_moments(const std::string& name, Tensor m, Tensor v) {
        State st;
        st.m = std::move(m);
        st.v = std::move(v);
        state_[name] = std::move(st);
    }

    void set_steps_taken(std::size_t t) { t_ = t; }

private:
    struct State {
        Tensor m;
        Tensor v;
    };
    AdamConfig cfg_;
    std::map<std::string, State> state_;
    std::size_t t_ = 0;
};

// ---- one pre-training step ----

// One utterance of prepared training input.
struct TrainSample {
    std::string utterance_id;
    Waveform wave;
    NormalizedPitch pitch;
    std::vector<int> labels;  // one pseudo-label per frame (post truncation)
    SpeakerTarget speaker;
};

struct ScheduleConfig {
    std::size_t total_steps = 0;
    double peak_lr = 5e-4;
    double warmup_frac = 0.08;
};

// Forward + backward + Adam update over one batch; gradients flow through
// all modules jointly. Returns the batch-averaged loss breakdown. Throws on
// a non-finite loss with a per-component diagnostic.
inline LossBreakdown pretrain_step(ProgreModel& model, AdamOptimizer& adam,
                                   const std::vector<const TrainSample*>& batch,
                                   std::size_t step_index, const ScheduleConfig& schedule,
                                   const LossWeights& weights, std::uint64_t master_seed) {
    if (batch.empty()) throw std::invalid_argument("objectives: empty batch");
    model.store().zero_grads();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double sum_f = 0.0, sum_s = 0.0, sum_c = 0.0;
    std::vector<BnObservation> bn_obs;

    for (std::size_t bi = 0; bi < batch.size(); ++bi) {
        const TrainSample& s = *batch[bi];
        const std::size_t T = model.config().frontend_output_length(s.wave.samples.size());
        // Label/frame reconciliation: truncate the longer sequence. The mask
        // covers all T frames; re-draw it in the rare case no masked frame
        // falls inside the label range.
        std::vector<int> labels = s.labels;
        const std::size_t t_label = std::min<std::size_t>(labels.size(), T);
        labels.resize(t_label);
        MaskSpec mask;
        MaskSpec content_mask;
        for (std::uint64_t attempt = 0;; ++attempt) {
            if (attempt >= 16)
                throw std::runtime_error("objectives: could not place a masked frame inside the "
                                         "label range for " + s.utterance_id);
            mask = sample_mask(
                T, model.config().mask_start_prob, model.config().mask_span_len,
                derive_seed(master_seed, "mask",
                            (step_index * 1315423911ULL + bi) * 16ULL + attempt));
            content_mask = MaskSpec::from_flags(std::vector<bool>(
                mask.masked.begin(), mask.masked.begin() + t_label));
            if (content_mask.any()) break;
        }

        Graph g(true);
        bn_obs.clear();
        EncoderVars ev = model.forward_graph(g, s.wave, s.pitch, &mask, &bn_obs);
        Var l_f = feature_penalty_graph(g, ev.x_f);
        Var l_s = speaker_loss_graph(g, ev.speaker_repr, s.speaker,
                                     g.param(model.store().get("projections.A_s")), mask);
        Var o_c = t_label == T ? ev.content_out : g.slice_rows(ev.content_out, 0, t_label);
        Var l_c = content_loss_graph(g, o_c, labels,
                                     g.param(model.store().get("projections.A_c")),
                                     g.param(model.store().get("unit_embeddings.E")), content_mask,
                                     model.config().content_temp);
        Var total = g.add(g.add(g.mul_scalar(l_f, weights.lambda_f),
                                g.mul_scalar(l_s, weights.lambda_s)),
                          g.mul_scalar(l_c, weights.lambda_c));
        const double fv = g.value(l_f)[0], sv = g.value(l_s)[0], cv = g.value(l_c)[0];
        if (!std::isfinite(fv) || !std::isfinite(sv) || !std::isfinite(cv)) {
            std::ostringstream os;
            os << "objectives: non-finite loss at step " << step_index << ", utterance "
               << s.utterance_id << " (l_f=" << fv << ", l_s=" << sv << ", l_c=" << cv << ")";
            throw std::runtime_error(os.str());
        }
        sum_f += fv;
        sum_s += sv;
        sum_c += cv;
        g.backward(g.mul_scalar(total, inv_b));
        model.commit_bn_observations(bn_obs);
    }

    const double lr = learning_rate_at(step_index, schedule.total_steps, schedule.peak_lr,
                                       schedule.warmup_frac);
    adam.step(model.store(), lr);
    return total_loss(sum_f * inv_b, sum_s * inv_b, sum_c * inv_b, weights);
}

}  // namespace progre
