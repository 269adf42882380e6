// Copyright 2026 The progre Authors
// 39-dimensional MFCC features (13 cepstra + delta + delta-delta).
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "progre/tensor.hpp"
#include "progre/wav.hpp"

namespace progre {

// Fixed analysis constants. The 20 ms hop keeps MFCC frames aligned with the
// convolutional frontend stride.
struct MfccConfig {
    std::size_t window = 400;     // 25 ms at 16 kHz
    std::size_t hop = 320;        // 20 ms
    std::size_t fft_size = 512;
    std::size_t num_filters = 26;
    std::size_t num_cepstra = 13;
    double log_floor = 1e-10;
    std::size_t delta_width = 2;
};

struct MfccFeatures {
    Tensor values;  // T_m x 39
    double hop_ms = 20.0;
};

namespace detail {

// In-place iterative radix-2 FFT.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft: size must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular mel filterbank, num_filters x (fft/2 + 1).
inline std::vector<std::vector<double>> mel_filterbank(const MfccConfig& cfg, int sample_rate) {
    const std::size_t bins = cfg.fft_size / 2 + 1;
    const double f_lo = 0.0, f_hi = sample_rate / 2.0;
    const double m_lo = hz_to_mel(f_lo), m_hi = hz_to_mel(f_hi);
    std::vector<double> centers(cfg.num_filters + 2);
    for (std::size_t i = 0; i < centers.size(); ++i) {
        const double mel = m_lo + (m_hi - m_lo) * static_cast<double>(i) /
                                      static_cast<double>(cfg.num_filters + 1);
        centers[i] = mel_to_hz(mel) * static_cast<double>(cfg.fft_size) / sample_rate;
    }
    std::vector<std::vector<double>> fb(cfg.num_filters, std::vector<double>(bins, 0.0));
    for (std::size_t f = 0; f < cfg.num_filters; ++f) {
        const double left = centers[f], mid = centers[f + 1], right = centers[f + 2];
        for (std::size_t b = 0; b < bins; ++b) {
            const double x = static_cast<double>(b);
            if (x > left && x < mid)
                fb[f][b] = (x - left) / (mid - left);
            else if (x >= mid && x < right)
                fb[f][b] = (right - x) / (right - mid);
        }
    }
    return fb;
}

// Standard regression deltas over +-width frames, edge frames replicated.
inline Tensor deltas(const Tensor& x, std::size_t width) {
    const std::size_t T = x.rows(), D = x.cols();
    double denom = 0.0;
    for (std::size_t n = 1; n <= width; ++n) denom += 2.0 * n * n;
    Tensor d({T, D});
    auto clamp_t = [&](std::ptrdiff_t t) {
        if (t < 0) return std::size_t{0};
        if (t >= static_cast<std::ptrdiff_t>(T)) return T - 1;
        return static_cast<std::size_t>(t);
    };
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < D; ++j) {
            double acc = 0.0;
            for (std::size_t n = 1; n <= width; ++n)
                acc += static_cast<double>(n) *
                       (x.at(clamp_t(static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(n)), j) -
                        x.at(clamp_t(static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(n)), j));
            d.at(t, j) = acc / denom;
        }
    return d;
}

}  // namespace detail

// Hamming-windowed power-spectrum MFCCs with appended delta and delta-delta
// columns; always exactly 39 columns.
inline MfccFeatures compute_mfcc(const Waveform& wave, const MfccConfig& cfg = MfccConfig()) {
    if (wave.samples.size() < cfg.window)
        throw std::runtime_error("audio_frontend: waveform shorter than one MFCC window");
    const std::size_t T = (wave.samples.size() - cfg.window) / cfg.hop + 1;
    const auto fb = detail::mel_filterbank(cfg, wave.sample_rate);
    const std::size_t bins = cfg.fft_size / 2 + 1;

    std::vector<double> window(cfg.window);
    for (std::size_t i = 0; i < cfg.window; ++i)
        window[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (cfg.window - 1));

    Tensor cepstra({T, cfg.num_cepstra});
    std::vector<std::complex<double>> buf(cfg.fft_size);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < cfg.fft_size; ++i) {
            const double s = i < cfg.window ? wave.samples[t * cfg.hop + i] * window[i] : 0.0;
            buf[i] = {s, 0.0};
        }
        detail::fft_radix2(buf);
        std::vector<double> power(bins);
        for (std::size_t b = 0; b < bins; ++b) power[b] = std::norm(buf[b]);
        std::vector<double> logmel(cfg.num_filters);
        for (std::size_t f = 0; f < cfg.num_filters; ++f) {
            double e = 0.0;
            for (std::size_t b = 0; b < bins; ++b) e += fb[f][b] * power[b];
            logmel[f] = std::log(std::max(e, cfg.log_floor));
        }
        // DCT-II, orthonormal.
        for (std::size_t c = 0; c < cfg.num_cepstra; ++c) {
            double acc = 0.0;
            for (std::size_t f = 0; f < cfg.num_filters; ++f)
                acc += logmel[f] *
                       std::cos(M_PI * c * (2.0 * f + 1.0) / (2.0 * cfg.num_filters));
            const double scale = c == 0 ? std::sqrt(1.0 / cfg.num_filters)
                                        : std::sqrt(2.0 / cfg.num_filters);
            cepstra.at(t, c) = acc * scale;
        }
    }

    const Tensor d1 = detail::deltas(cepstra, cfg.delta_width);
    const Tensor d2 = detail::deltas(d1, cfg.delta_width);
    Tensor out({T, 3 * cfg.num_cepstra});
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t c = 0; c < cfg.num_cepstra; ++c) {
            out.at(t, c) = cepstra.at(t, c);
            out.at(t, cfg.num_cepstra + c) = d1.at(t, c);
            out.at(t, 2 * cfg.num_cepstra + c) = d2.at(t, c);
        }
    }
    MfccFeatures feats;
    feats.values = std::move(out);
    feats.hop_ms = 1000.0 * cfg.hop / wave.sample_rate;
    return feats;
}

}  // namespace progre
