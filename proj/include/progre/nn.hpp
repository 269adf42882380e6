// Copyright 2026 The progre Authors
// Neural building blocks composed from autograd primitives.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "progre/autograd.hpp"

namespace progre::nn {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kBatchNormEps = 1e-5;

// Per-frame layer normalization over the feature dimension with learnable
// affine. x: TxD, gain/bias: D.
inline Var layer_norm(Graph& g, Var x, Var gain, Var bias, double eps = kLayerNormEps) {
    Var mu = g.row_means(x);                       // T
    Var xc = g.add_colvec(x, g.neg(mu));           // TxD
    Var var = g.row_means(g.mul(xc, xc));          // T
    Var std = g.sqrt_(g.add_scalar(var, eps));     // T
    Var norm = g.div_colvec(xc, std);
    return g.add_rowvec(g.mul_rowvec(norm, gain), bias);
}

// y = x . W + b, x: TxI, W: IxO, b: O.
inline Var linear(Graph& g, Var x, Var w, Var b) {
    return g.add_rowvec(g.matmul(x, w), b);
}

// Batch normalization over the time axis (per channel) for a single
// sequence. Training mode normalizes with the statistics of the current
// input and reports them so the caller can fold them into running
// statistics; inference mode uses the provided running statistics.
struct BatchNormStats {
    Tensor mean;  // D
    Tensor var;   // D (population)
};

inline Var batch_norm_train(Graph& g, Var x, Var gain, Var bias, BatchNormStats* observed,
                            double eps = kBatchNormEps) {
    Var mu = g.col_means(x);                        // D
    Var xc = g.add_rowvec(x, g.neg(mu));            // TxD
    Var var = g.col_means(g.mul(xc, xc));           // D
    Var std = g.sqrt_(g.add_scalar(var, eps));      // D
    Var norm = g.div_rowvec(xc, std);
    if (observed) {
        observed->mean = g.value(mu);
        observed->var = g.value(var);
    }
    return g.add_rowvec(g.mul_rowvec(norm, gain), bias);
}

inline Var batch_norm_infer(Graph& g, Var x, Var gain, Var bias, const Tensor& running_mean,
                            const Tensor& running_var, double eps = kBatchNormEps) {
    Tensor inv_std({running_var.size()});
    for (std::size_t i = 0; i < running_var.size(); ++i)
        inv_std[i] = 1.0 / std::sqrt(running_var[i] + eps);
    Var xc = g.add_rowvec(x, g.constant([&] {
        Tensor neg_mean = running_mean;
        for (double& v : neg_mean.data()) v = -v;
        return neg_mean;
    }()));
    Var norm = g.mul_rowvec(xc, g.constant(inv_std));
    return g.add_rowvec(g.mul_rowvec(norm, gain), bias);
}

// Single-layer unidirectional GRU, PyTorch gate layout (r, z, n).
// x: TxI, w_ih: Ix3H, w_hh: Hx3H, b_ih/b_hh: 3H. Returns TxH, h_0 = 0.
inline Var gru(Graph& g, Var x, Var w_ih, Var w_hh, Var b_ih, Var b_hh, std::size_t hidden) {
    const std::size_t T = g.value(x).rows();
    const std::size_t H = hidden;
    Var h = g.constant(Tensor::zeros({1, H}));
    std::vector<Var> outputs;
    outputs.reserve(T);
    Var gates_x = g.add_rowvec(g.matmul(x, w_ih), b_ih);  // Tx3H, input side hoisted
    for (std::size_t t = 0; t < T; ++t) {
        Var gx = g.slice_rows(gates_x, t, 1);                    // 1x3H
        Var gh = g.add_rowvec(g.matmul(h, w_hh), b_hh);          // 1x3H
        Var r = g.sigmoid(g.add(g.slice_cols(gx, 0, H), g.slice_cols(gh, 0, H)));
        Var z = g.sigmoid(g.add(g.slice_cols(gx, H, H), g.slice_cols(gh, H, H)));
        Var n = g.tanh_(g.add(g.slice_cols(gx, 2 * H, H), g.mul(r, g.slice_cols(gh, 2 * H, H))));
        // h_t = (1 - z) * n + z * h_{t-1}
        Var one_minus_z = g.add_scalar(g.neg(z), 1.0);
        h = g.add(g.mul(one_minus_z, n), g.mul(z, h));
        outputs.push_back(h);
    }
    return g.concat_rows(outputs);
}

// Multi-head self-attention (bidirectional, no positional logic inside).
// x: TxD, projection weights DxD with D-biases.
inline Var multihead_attention(Graph& g, Var x, Var w_q, Var b_q, Var w_k, Var b_k, Var w_v,
                               Var b_v, Var w_o, Var b_o, std::size_t num_heads) {
    const std::size_t D = g.value(x).cols();
    if (D % num_heads != 0) throw std::invalid_argument("attention: D % heads != 0");
    const std::size_t dh = D / num_heads;
    Var q = linear(g, x, w_q, b_q);
    Var k = linear(g, x, w_k, b_k);
    Var v = linear(g, x, w_v, b_v);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> heads;
    heads.reserve(num_heads);
    for (std::size_t hidx = 0; hidx < num_heads; ++hidx) {
        Var qh = g.slice_cols(q, hidx * dh, dh);
        Var kh = g.slice_cols(k, hidx * dh, dh);
        Var vh = g.slice_cols(v, hidx * dh, dh);
        Var scores = g.mul_scalar(g.matmul_nt(qh, kh), scale);  // TxT
        Var attn = g.softmax_rows(scores);
        heads.push_back(g.matmul(attn, vh));                    // Txdh
    }
    Var ctx = num_heads == 1 ? heads[0] : g.concat_cols(heads);
    return linear(g, ctx, w_o, b_o);
}

// L2-normalize every row. The squared norm is clamped before the square
// root so zero rows map to zero with a finite (zero) gradient.
inline Var normalize_rows(Graph& g, Var a, double eps = 1e-8) {
    Var sq = g.row_sums(g.mul(a, a));
    Var norms = g.sqrt_(g.clamp_min(sq, eps * eps));
    return g.div_colvec(a, norms);
}

}  // namespace progre::nn
