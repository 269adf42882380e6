// Copyright 2026 The progre Authors
// Span masking for masked-prediction pre-training.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "progre/rng.hpp"
#include "progre/tensor.hpp"

namespace progre {

// Masked positions as both a boolean sequence and the equivalent list of
// disjoint, sorted spans (overlapping draws are merged into runs).
struct MaskSpec {
    std::vector<bool> masked;
    std::vector<std::pair<std::size_t, std::size_t>> spans;  // (start, length)

    std::size_t count() const {
        std::size_t c = 0;
        for (bool b : masked) c += b;
        return c;
    }

    bool any() const { return count() > 0; }

    std::vector<std::size_t> masked_indices() const {
        std::vector<std::size_t> idx;
        for (std::size_t t = 0; t < masked.size(); ++t)
            if (masked[t]) idx.push_back(t);
        return idx;
    }

    static MaskSpec none(std::size_t T) {
        MaskSpec m;
        m.masked.assign(T, false);
        return m;
    }

    static MaskSpec from_flags(std::vector<bool> flags) {
        MaskSpec m;
        m.masked = std::move(flags);
        m.rebuild_spans();
        return m;
    }

    void rebuild_spans() {
        spans.clear();
        std::size_t t = 0;
        while (t < masked.size()) {
            if (!masked[t]) {
                ++t;
                continue;
            }
            std::size_t start = t;
            while (t < masked.size() && masked[t]) ++t;
            spans.emplace_back(start, t - start);
        }
    }
};

// Fixed-length spans start at each position independently with probability
// start_prob (spans are truncated at T). A sample with no masked frame is
// re-drawn; if the draws stay empty (e.g. start_prob == 0) a single span is
// forced at a random start, so the result always masks at least one frame.
inline MaskSpec sample_mask(std::size_t T, double start_prob, std::size_t span_len,
                            std::uint64_t seed) {
    if (T < span_len)
        throw std::invalid_argument("progre_encoder: sequence shorter than mask span");
    if (span_len == 0) throw std::invalid_argument("progre_encoder: mask span must be positive");
    Rng rng(seed);
    std::vector<bool> masked(T, false);
    bool any = false;
    for (int attempt = 0; attempt < 10 && !any; ++attempt) {
        std::fill(masked.begin(), masked.end(), false);
        for (std::size_t t = 0; t < T; ++t) {
            if (!rng.bernoulli(start_prob)) continue;
            for (std::size_t k = t; k < std::min(t + span_len, T); ++k) masked[k] = true;
            any = true;
        }
    }
    if (!any) {
        const std::size_t start = static_cast<std::size_t>(rng.uniform_below(T - span_len + 1));
        for (std::size_t k = start; k < start + span_len; ++k) masked[k] = true;
    }
    return MaskSpec::from_flags(std::move(masked));
}

// Replace masked rows by the mask embedding; unmasked rows pass through
// bit-identically.
inline Tensor apply_mask(const Tensor& x, const MaskSpec& mask, const Tensor& embedding) {
    if (mask.masked.size() != x.rows())
        throw std::invalid_argument("progre_encoder: mask length does not match frames");
    if (embedding.size() != x.cols())
        throw std::invalid_argument("progre_encoder: mask embedding dimension mismatch");
    Tensor y = x;
    for (std::size_t t = 0; t < x.rows(); ++t)
        if (mask.masked[t])
            for (std::size_t j = 0; j < x.cols(); ++j) y.at(t, j) = embedding[j];
    return y;
}

}  // namespace progre
