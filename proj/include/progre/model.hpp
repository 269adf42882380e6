// Copyright 2026 The progre Authors
// The progressive-residual encoder: conv frontend, pitch extractor,
// residual removal, transformer stack, and speaker extractor.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "progre/autograd.hpp"
#include "progre/mask.hpp"
#include "progre/nn.hpp"
#include "progre/pitch.hpp"
#include "progre/rng.hpp"
#include "progre/wav.hpp"

namespace progre {

struct ConvLayerSpec {
    std::size_t channels = 512;
    std::size_t kernel = 3;
    std::size_t stride = 2;
};

// How an extracted representation is removed from the main branch. The
// additive mode is the multi-task ablation: it flips exactly the sign of
// the residual step.
enum class CombineMode { kSubtract, kAdd };

struct ModelConfig {
    std::size_t hidden_dim = 768;   // D
    std::size_t num_layers = 12;    // n
    std::size_t num_heads = 12;
    std::size_t ffn_dim = 3072;
    std::size_t insert_layer = 4;   // speaker extractor taps block i (1-based)
    std::size_t max_positions = 1024;

    double mask_start_prob = 0.08;
    std::size_t mask_span_len = 10;

    std::vector<ConvLayerSpec> frontend = {
        {512, 10, 5}, {512, 3, 2}, {512, 3, 2}, {512, 3, 2},
        {512, 3, 2}, {512, 2, 2}, {512, 2, 2},
    };
    bool frontend_norm = true;  // per-frame channel LN after the first conv

    std::size_t pitch_channels = 256;
    std::size_t pitch_kernel = 5;
    std::size_t pitch_gru_hidden = 256;

    std::size_t speaker_hidden = 256;
    std::size_t speaker_embed_dim = 192;

    std::size_t unit_embed_dim = 256;
    std::size_t num_units = 100;
    double content_temp = 0.1;

    CombineMode pitch_combine = CombineMode::kSubtract;
    CombineMode speaker_combine = CombineMode::kSubtract;

    void validate() const {
        if (insert_layer == 0 || insert_layer >= num_layers)
            throw std::invalid_argument("progre_encoder: insert_layer must satisfy 0 < i < n");
        if (hidden_dim % num_heads != 0)
            throw std::invalid_argument("progre_encoder: hidden_dim must divide by num_heads");
        if (frontend.empty()) throw std::invalid_argument("progre_encoder: empty frontend");
        std::size_t stride = 1;
        for (const auto& l : frontend) stride *= l.stride;
        if (stride != 320)
            throw std::invalid_argument(
                "progre_encoder: frontend strides must compose to 320 samples (20 ms)");
        if (num_units == 0 || unit_embed_dim == 0)
            throw std::invalid_argument("progre_encoder: unit codebook must be non-empty");
        if (content_temp <= 0.0) throw std::invalid_argument("objectives: tau must be positive");
    }

    std::size_t total_stride() const {
        std::size_t s = 1;
        for (const auto& l : frontend) s *= l.stride;
        return s;
    }

    // Composed valid-convolution length; 0 if the input is too short.
    std::size_t frontend_output_length(std::size_t samples) const {
        std::size_t len = samples;
        for (const auto& l : frontend) {
            if (len < l.kernel) return 0;
            len = (len - l.kernel) / l.stride + 1;
        }
        return len;
    }

    std::size_t frontend_channels() const { return frontend.back().channels; }

    static ModelConfig base() { return ModelConfig{}; }

    static ModelConfig large() {
        ModelConfig c;
        c.hidden_dim = 1024;
        c.num_layers = 24;
        c.num_heads = 16;
        c.ffn_dim = 4096;
        c.insert_layer = 6;
        return c;
    }

    // Desk-scale preset: the same topology at toy width.
    static ModelConfig tiny() {
        ModelConfig c;
        c.hidden_dim = 8;
        c.num_layers = 2;
        c.num_heads = 2;
        c.ffn_dim = 32;
        c.insert_layer = 1;
        c.max_positions = 256;
        // Receptive field 400 samples, so frame counts line up with MFCC.
        c.frontend = {{8, 10, 10}, {8, 8, 8}, {8, 5, 4}};
        c.pitch_channels = 8;
        c.pitch_gru_hidden = 8;
        c.speaker_hidden = 8;
        c.unit_embed_dim = 16;
        c.num_units = 16;
        return c;
    }
};

// Named parameters plus non-trainable buffers (batch-norm running stats).
class ParameterStore {
public:
    ParamSlot& add(const std::string& name, Tensor init) {
        auto [it, fresh] = params_.emplace(name, nullptr);
        if (!fresh) throw std::logic_error("duplicate parameter: " + name);
        it->second = std::make_unique<ParamSlot>(name, std::move(init));
        return *it->second;
    }

    ParamSlot& get(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("no such parameter: " + name);
        return *it->second;
    }

    const ParamSlot& get(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("no such parameter: " + name);
        return *it->second;
    }

    bool has(const std::string& name) const { return params_.count(name) > 0; }

    Tensor& buffer(const std::string& name) {
        auto it = buffers_.find(name);
        if (it == buffers_.end()) throw std::out_of_range("no such buffer: " + name);
        return it->second;
    }

    const Tensor& buffer(const std::string& name) const {
        auto it = buffers_.find(name);
        if (it == buffers_.end()) throw std::out_of_range("no such buffer: " + name);
        return it->second;
    }

    void add_buffer(const std::string& name, Tensor t) {
        if (!buffers_.emplace(name, std::move(t)).second)
            throw std::logic_error("duplicate buffer: " + name);
    }

    // Sorted (std::map order), so iteration is deterministic.
    std::vector<std::string> param_names() const {
        std::vector<std::string> out;
        out.reserve(params_.size());
        for (const auto& [k, v] : params_) out.push_back(k);
        return out;
    }

    std::vector<std::string> buffer_names() const {
        std::vector<std::string> out;
        out.reserve(buffers_.size());
        for (const auto& [k, v] : buffers_) out.push_back(k);
        return out;
    }

    void zero_grads() {
        for (auto& [k, v] : params_) v->zero_grad();
    }

    std::size_t total_parameters() const {
        std::size_t n = 0;
        for (const auto& [k, v] : params_) n += v->value.size();
        return n;
    }

private:
    std::map<std::string, std::unique_ptr<ParamSlot>> params_;
    std::map<std::string, Tensor> buffers_;
};

// Frame-level output of the convolutional frontend.
struct FrameFeatures {
    Tensor values;  // T x C
    double frame_stride_ms = 20.0;
};

// Everything the forward pass produces. layer_outputs[k] is the pre-removal
// output of block k+1; block_inputs[k] is what block k+1 consumed.
struct EncoderOutputs {
    Tensor x_f;                        // T x C
    Tensor pitch_repr;                 // O^p, T x D
    Tensor branch_x;                   // X (post pitch removal + LN, pre-mask)
    std::vector<Tensor> block_inputs;  // n entries
    std::vector<Tensor> layer_outputs; // n entries
    Tensor speaker_repr;               // O^s, T x D
    Tensor content_out;                // O^c == layer_outputs.back()
    MaskSpec mask;
};

// Graph handles for the same quantities, used when the forward feeds a loss.
struct EncoderVars {
    Var x_f;
    Var pitch_repr;
    Var branch_x;
    std::vector<Var> block_inputs;
    std::vector<Var> layer_outputs;
    Var speaker_repr;
    Var content_out;
};

// Observed batch-norm statistics from a training forward, to be folded into
// running buffers by the caller that commits the step.
struct BnObservation {
    std::string buffer_mean;
    std::string buffer_var;
    Tensor mean;
    Tensor var;
};

class ProgreModel {
public:
    static constexpr double kBnMomentum = 0.1;

    ProgreModel(ModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        build_parameters(init_seed);
    }

    const ModelConfig& config() const { return cfg_; }
    ParameterStore& store() { return store_; }
    const ParameterStore& store() const { return store_; }

    // ---- frontend ----

    // Raw waveform -> T x C conv features (the op surface; inference mode).
    FrameFeatures conv_frontend(const Waveform& wave) {
        if (cfg_.frontend_output_length(wave.samples.size()) == 0)
            throw std::runtime_error("audio_frontend: input too short for one frame");
        Graph g(false);
        Var x = wave_input(g, wave);
        Var feats = frontend_graph(g, x);
        FrameFeatures out;
        out.values = g.value(feats);
        out.frame_stride_ms = 1000.0 * cfg_.total_stride() / wave.sample_rate;
        return out;
    }

    // ---- standalone op surfaces (inference mode) ----

    Tensor pitch_extractor_forward(const NormalizedPitch& pitch) {
        Graph g(false);
        Var p = pitch_input(g, pitch);
        return g.value(pitch_extractor_graph(g, p, false, nullptr));
    }

    Tensor speaker_extractor_forward(const Tensor& block_out) {
        if (block_out.cols() != cfg_.hidden_dim)
            throw std::invalid_argument("progre_encoder: speaker extractor input dim mismatch");
        Graph g(false);
        return g.value(speaker_extractor_graph(g, g.constant(block_out)));
    }

    // layernorm(main -+ extracted) with the given removal-LN parameters.
    Tensor remove_and_normalize(const Tensor& main, const Tensor& extracted,
                                const std::string& ln_prefix, CombineMode mode) {
        if (!main.same_shape(extracted))
            throw std::invalid_argument("progre_encoder: removal shape mismatch");
        Graph g(false);
        Var r = combine_and_norm(g, g.constant(main), g.constant(extracted), ln_prefix, mode);
        return g.value(r);
    }

    // ---- full forward ----

    // Builds the complete graph. `mask == nullptr` means inference (no
    // masking, batch-norm running statistics). In training mode, observed
    // batch-norm statistics are appended to `bn_obs` when provided.
    EncoderVars forward_graph(Graph& g, const Waveform& wave, const NormalizedPitch& pitch,
                              const MaskSpec* mask, std::vector<BnObservation>* bn_obs = nullptr) {
        const std::size_t T = cfg_.frontend_output_length(wave.samples.size());
        if (T == 0) throw std::runtime_error("audio_frontend: input too short for one frame");
        if (T > cfg_.max_positions)
            throw std::runtime_error("progre_encoder: sequence exceeds max_positions");
        const bool training = mask != nullptr;
        if (training && mask->masked.size() != T)
            throw std::invalid_argument("progre_encoder: mask length != frame count");

        EncoderVars ev;

        // Frontend.
        Var x = wave_input(g, wave);
        ev.x_f = frontend_graph(g, x);
        Var xp = nn::linear(g, ev.x_f, g.param(store_.get("frontend.proj.weight")),
                            g.param(store_.get("frontend.proj.bias")));

        // Pitch branch (computed from the unmasked pitch contour).
        NormalizedPitch p = reconcile_pitch_length(pitch, T);
        Var pv = pitch_input(g, p);
        ev.pitch_repr = pitch_extractor_graph(g, pv, training, bn_obs);

        // X = layernorm(conv -+ O^p).
        ev.branch_x = combine_and_norm(g, xp, ev.pitch_repr, "pitch_extractor.removal_ln",
                                       cfg_.pitch_combine);

        // Masking (training only), then learned absolute positions.
        Var h = ev.branch_x;
        if (training) h = apply_mask_graph(g, h, *mask);
        Var pos = g.slice_rows(g.param(store_.get("transformer.pos_embedding")), 0, T);
        h = g.add(h, pos);

        // Transformer blocks with the speaker extractor inserted after
        // block i.
        for (std::size_t k = 1; k <= cfg_.num_layers; ++k) {
            ev.block_inputs.push_back(h);
            Var o = transformer_block_graph(g, h, k);
            ev.layer_outputs.push_back(o);
            h = o;
            if (k == cfg_.insert_layer) {
                ev.speaker_repr = speaker_extractor_graph(g, o);
                h = combine_and_norm(g, o, ev.speaker_repr, "speaker_extractor.removal_ln",
                                     cfg_.speaker_combine);
            }
        }
        ev.content_out = ev.layer_outputs.back();
        return ev;
    }

    // Convenience: inference forward returning plain tensors.
    EncoderOutputs forward(const Waveform& wave, const NormalizedPitch& pitch,
                           const MaskSpec* mask = nullptr) {
        Graph g(mask != nullptr);
        EncoderVars ev = forward_graph(g, wave, pitch, mask);
        return materialize(g, ev, mask);
    }

    EncoderOutputs materialize(const Graph& g, const EncoderVars& ev, const MaskSpec* mask) const {
        EncoderOutputs out;
        out.x_f = g.value(ev.x_f);
        out.pitch_repr = g.value(ev.pitch_repr);
        out.branch_x = g.value(ev.branch_x);
        for (Var v : ev.block_inputs) out.block_inputs.push_back(g.value(v));
        for (Var v : ev.layer_outputs) out.layer_outputs.push_back(g.value(v));
        out.speaker_repr = g.value(ev.speaker_repr);
        out.content_out = g.value(ev.content_out);
        out.mask = mask ? *mask : MaskSpec::none(out.content_out.rows());
        return out;
    }

    // Fold observed batch statistics into running buffers (momentum update).
    void commit_bn_observations(const std::vector<BnObservation>& obs) {
        for (const auto& o : obs) {
            Tensor& rm = store_.buffer(o.buffer_mean);
            Tensor& rv = store_.buffer(o.buffer_var);
            for (std::size_t i = 0; i < rm.size(); ++i) {
                rm[i] = (1.0 - kBnMomentum) * rm[i] + kBnMomentum * o.mean[i];
                rv[i] = (1.0 - kBnMomentum) * rv[i] + kBnMomentum * o.var[i];
            }
        }
    }

    // Frame-level attentive statistics: softmax attention over time yields
    // weighted mean/std, broadcast back onto every frame as concat(h, mu,
    // sigma). h: T x S -> T x 3S.
    Var fas_pool_graph(Graph& g, Var h) {
        const std::size_t T = g.value(h).rows();
        const std::size_t S = g.value(h).cols();
        Var e = g.matmul(g.tanh_(nn::linear(g, h, g.param(store_.get("speaker_extractor.attn.w")),
                                            g.param(store_.get("speaker_extractor.attn.b")))),
                         g.param(store_.get("speaker_extractor.attn.v")));  // T x 1
        Var alpha = g.softmax_rows(g.reshape(e, {1, T}));                   // 1 x T
        Var mu = g.matmul(alpha, h);                                        // 1 x S
        Var diff = g.add_rowvec(h, g.neg(g.reshape(mu, {S})));              // T x S
        Var wvar = g.matmul(alpha, g.mul(diff, diff));                      // 1 x S
        // sqrt(v + eps^2) - eps: equals 0 exactly at zero variance (single
        // frame, constant input) while keeping the gradient finite.
        constexpr double kSigmaEps = 1e-8;
        Var sigma = g.add_scalar(g.sqrt_(g.add_scalar(wvar, kSigmaEps * kSigmaEps)), -kSigmaEps);
        return g.concat_cols({h, g.tile_rows(g.reshape(mu, {S}), T),
                              g.tile_rows(g.reshape(sigma, {S}), T)});
    }

    Tensor fas_pool(const Tensor& h) {
        Graph g(false);
        return g.value(fas_pool_graph(g, g.constant(h)));
    }

    // Mask replacement inside the graph; gradient flows into the mask
    // embedding through the masked rows.
    Var apply_mask_graph(Graph& g, Var x, const MaskSpec& mask) {
        const std::size_t T = g.value(x).rows();
        Tensor keep({T}), drop({T});
        for (std::size_t t = 0; t < T; ++t) {
            keep[t] = mask.masked[t] ? 0.0 : 1.0;
            drop[t] = mask.masked[t] ? 1.0 : 0.0;
        }
        Var emb = g.param(store_.get("mask_embedding"));
        Var replaced = g.mul_colvec(g.tile_rows(emb, T), g.constant(drop));
        return g.add(g.mul_colvec(x, g.constant(keep)), replaced);
    }

private:
    ModelConfig cfg_;
    ParameterStore store_;

    static Var wave_input(Graph& g, const Waveform& wave) {
        Tensor x({wave.samples.size(), 1});
        for (std::size_t i = 0; i < wave.samples.size(); ++i) x[i] = wave.samples[i];
        return g.constant(std::move(x));
    }

    static Var pitch_input(Graph& g, const NormalizedPitch& pitch) {
        Tensor p({pitch.values.size(), 1});
        for (std::size_t i = 0; i < pitch.values.size(); ++i) p[i] = pitch.values[i];
        return g.constant(std::move(p));
    }

    Var frontend_graph(Graph& g, Var x) {
        Var h = x;
        for (std::size_t j = 0; j < cfg_.frontend.size(); ++j) {
            const std::string prefix = "frontend.conv" + std::to_string(j);
            h = g.conv1d(h, g.param(store_.get(prefix + ".weight")),
                         g.param(store_.get(prefix + ".bias")), cfg_.frontend[j].stride);
            if (j == 0 && cfg_.frontend_norm)
                h = nn::layer_norm(g, h, g.param(store_.get("frontend.norm.gain")),
                                   g.param(store_.get("frontend.norm.bias")));
            h = g.gelu(h);
        }
        return h;
    }

    Var pitch_extractor_graph(Graph& g, Var p, bool training,
                              std::vector<BnObservation>* bn_obs) {
        Var h = p;
        const std::size_t pad = cfg_.pitch_kernel / 2;
        for (int j = 0; j < 3; ++j) {
            const std::string prefix = "pitch_extractor.conv" + std::to_string(j);
            const std::string bn = "pitch_extractor.bn" + std::to_string(j);
            h = g.conv1d(h, g.param(store_.get(prefix + ".weight")),
                         g.param(store_.get(prefix + ".bias")), 1, pad,
                         cfg_.pitch_kernel - 1 - pad);
            if (training) {
                nn::BatchNormStats stats;
                h = nn::batch_norm_train(g, h, g.param(store_.get(bn + ".gain")),
                                         g.param(store_.get(bn + ".bias")), &stats);
                if (bn_obs)
                    bn_obs->push_back({bn + ".running_mean", bn + ".running_var",
                                       std::move(stats.mean), std::move(stats.var)});
            } else {
                h = nn::batch_norm_infer(g, h, g.param(store_.get(bn + ".gain")),
                                         g.param(store_.get(bn + ".bias")),
                                         store_.buffer(bn + ".running_mean"),
                                         store_.buffer(bn + ".running_var"));
            }
            h = g.relu(h);
        }
        h = nn::gru(g, h, g.param(store_.get("pitch_extractor.gru.w_ih")),
                    g.param(store_.get("pitch_extractor.gru.w_hh")),
                    g.param(store_.get("pitch_extractor.gru.b_ih")),
                    g.param(store_.get("pitch_extractor.gru.b_hh")), cfg_.pitch_gru_hidden);
        return nn::linear(g, h, g.param(store_.get("pitch_extractor.out.weight")),
                          g.param(store_.get("pitch_extractor.out.bias")));
    }

    Var speaker_extractor_graph(Graph& g, Var o_i) {
        Var h = nn::linear(g, o_i, g.param(store_.get("speaker_extractor.fc1.weight")),
                           g.param(store_.get("speaker_extractor.fc1.bias")));
        Var stats = fas_pool_graph(g, h);
        Var normed = nn::layer_norm(g, stats, g.param(store_.get("speaker_extractor.ln.gain")),
                                    g.param(store_.get("speaker_extractor.ln.bias")));
        return nn::linear(g, normed, g.param(store_.get("speaker_extractor.fc2.weight")),
                          g.param(store_.get("speaker_extractor.fc2.bias")));
    }

    Var combine_and_norm(Graph& g, Var main, Var extracted, const std::string& ln_prefix,
                         CombineMode mode) {
        Var r = mode == CombineMode::kSubtract ? g.sub(main, extracted) : g.add(main, extracted);
        return nn::layer_norm(g, r, g.param(store_.get(ln_prefix + ".gain")),
                              g.param(store_.get(ln_prefix + ".bias")));
    }

    Var transformer_block_graph(Graph& g, Var h, std::size_t k) {
        const std::string p = "transformer.block" + std::to_string(k) + ".";
        Var a_in = nn::layer_norm(g, h, g.param(store_.get(p + "ln1.gain")),
                                  g.param(store_.get(p + "ln1.bias")));
        Var attn = nn::multihead_attention(
            g, a_in, g.param(store_.get(p + "attn.w_q")), g.param(store_.get(p + "attn.b_q")),
            g.param(store_.get(p + "attn.w_k")), g.param(store_.get(p + "attn.b_k")),
            g.param(store_.get(p + "attn.w_v")), g.param(store_.get(p + "attn.b_v")),
            g.param(store_.get(p + "attn.w_o")), g.param(store_.get(p + "attn.b_o")),
            cfg_.num_heads);
        Var a = g.add(h, attn);
        Var f_in = nn::layer_norm(g, a, g.param(store_.get(p + "ln2.gain")),
                                  g.param(store_.get(p + "ln2.bias")));
        Var f1 = g.gelu(nn::linear(g, f_in, g.param(store_.get(p + "ffn.w1")),
                                   g.param(store_.get(p + "ffn.b1"))));
        Var f2 = nn::linear(g, f1, g.param(store_.get(p + "ffn.w2")),
                            g.param(store_.get(p + "ffn.b2")));
        return g.add(a, f2);
    }

    void build_parameters(std::uint64_t seed) {
        const std::size_t D = cfg_.hidden_dim;
        auto init = [&](const std::string& name, std::vector<std::size_t> shape, double stddev) {
            Rng rng(derive_seed(seed, "init." + name));
            store_.add(name, Tensor::gaussian(std::move(shape), stddev, rng));
        };
        auto zeros = [&](const std::string& name, std::vector<std::size_t> shape) {
            store_.add(name, Tensor::zeros(std::move(shape)));
        };
        auto ones = [&](const std::string& name, std::vector<std::size_t> shape) {
            store_.add(name, Tensor::full(std::move(shape), 1.0));
        };

        // Frontend.
        std::size_t in_ch = 1;
        for (std::size_t j = 0; j < cfg_.frontend.size(); ++j) {
            const auto& l = cfg_.frontend[j];
            const std::string prefix = "frontend.conv" + std::to_string(j);
            init(prefix + ".weight", {l.channels, in_ch, l.kernel},
                 1.0 / std::sqrt(static_cast<double>(in_ch * l.kernel)));
            zeros(prefix + ".bias", {l.channels});
            in_ch = l.channels;
        }
        if (cfg_.frontend_norm) {
            ones("frontend.norm.gain", {cfg_.frontend[0].channels});
            zeros("frontend.norm.bias", {cfg_.frontend[0].channels});
        }
        init("frontend.proj.weight", {cfg_.frontend_channels(), D},
             1.0 / std::sqrt(static_cast<double>(cfg_.frontend_channels())));
        zeros("frontend.proj.bias", {D});

        // Pitch extractor.
        std::size_t pc_in = 1;
        for (int j = 0; j < 3; ++j) {
            const std::string prefix = "pitch_extractor.conv" + std::to_string(j);
            const std::string bn = "pitch_extractor.bn" + std::to_string(j);
            init(prefix + ".weight", {cfg_.pitch_channels, pc_in, cfg_.pitch_kernel},
                 1.0 / std::sqrt(static_cast<double>(pc_in * cfg_.pitch_kernel)));
            zeros(prefix + ".bias", {cfg_.pitch_channels});
            ones(bn + ".gain", {cfg_.pitch_channels});
            zeros(bn + ".bias", {cfg_.pitch_channels});
            store_.add_buffer(bn + ".running_mean", Tensor::zeros({cfg_.pitch_channels}));
            store_.add_buffer(bn + ".running_var", Tensor::full({cfg_.pitch_channels}, 1.0));
            pc_in = cfg_.pitch_channels;
        }
        const std::size_t H = cfg_.pitch_gru_hidden;
        init("pitch_extractor.gru.w_ih", {cfg_.pitch_channels, 3 * H},
             1.0 / std::sqrt(static_cast<double>(cfg_.pitch_channels)));
        init("pitch_extractor.gru.w_hh", {H, 3 * H}, 1.0 / std::sqrt(static_cast<double>(H)));
        zeros("pitch_extractor.gru.b_ih", {3 * H});
        zeros("pitch_extractor.gru.b_hh", {3 * H});
        init("pitch_extractor.out.weight", {H, D}, 1.0 / std::sqrt(static_cast<double>(H)));
        zeros("pitch_extractor.out.bias", {D});
        ones("pitch_extractor.removal_ln.gain", {D});
        zeros("pitch_extractor.removal_ln.bias", {D});

        // Transformer.
        init("transformer.pos_embedding", {cfg_.max_positions, D}, 0.02);
        for (std::size_t k = 1; k <= cfg_.num_layers; ++k) {
            const std::string p = "transformer.block" + std::to_string(k) + ".";
            const double ws = 1.0 / std::sqrt(static_cast<double>(D));
            for (const char* nm : {"attn.w_q", "attn.w_k", "attn.w_v", "attn.w_o"})
                init(p + nm, {D, D}, ws);
            for (const char* nm : {"attn.b_q", "attn.b_k", "attn.b_v", "attn.b_o"})
                zeros(p + nm, {D});
            ones(p + "ln1.gain", {D});
            zeros(p + "ln1.bias", {D});
            ones(p + "ln2.gain", {D});
            zeros(p + "ln2.bias", {D});
            init(p + "ffn.w1", {D, cfg_.ffn_dim}, ws);
            zeros(p + "ffn.b1", {cfg_.ffn_dim});
            init(p + "ffn.w2", {cfg_.ffn_dim, D},
                 1.0 / std::sqrt(static_cast<double>(cfg_.ffn_dim)));
            zeros(p + "ffn.b2", {D});
        }

        // Speaker extractor.
        const std::size_t S = cfg_.speaker_hidden;
        init("speaker_extractor.fc1.weight", {D, S}, 1.0 / std::sqrt(static_cast<double>(D)));
        zeros("speaker_extractor.fc1.bias", {S});
        init("speaker_extractor.attn.w", {S, S}, 1.0 / std::sqrt(static_cast<double>(S)));
        zeros("speaker_extractor.attn.b", {S});
        init("speaker_extractor.attn.v", {S, 1}, 1.0 / std::sqrt(static_cast<double>(S)));
        ones("speaker_extractor.ln.gain", {3 * S});
        zeros("speaker_extractor.ln.bias", {3 * S});
        init("speaker_extractor.fc2.weight", {3 * S, D},
             1.0 / std::sqrt(static_cast<double>(3 * S)));
        zeros("speaker_extractor.fc2.bias", {D});
        ones("speaker_extractor.removal_ln.gain", {D});
        zeros("speaker_extractor.removal_ln.bias", {D});

        // Masking, projections, unit codebook.
        init("mask_embedding", {D}, 0.1);
        init("projections.A_s", {D, cfg_.speaker_embed_dim},
             1.0 / std::sqrt(static_cast<double>(D)));
        init("projections.A_c", {D, cfg_.unit_embed_dim},
             1.0 / std::sqrt(static_cast<double>(D)));
        init("unit_embeddings.E", {cfg_.num_units, cfg_.unit_embed_dim},
             1.0 / std::sqrt(static_cast<double>(cfg_.unit_embed_dim)));
    }
};

}  // namespace progre
