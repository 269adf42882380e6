// Copyright 2026 The progre Authors
// F0 estimation, per-utterance log-normalized pitch, and the F0 Pearson
// correlation metric.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "progre/wav.hpp"

namespace progre {

// f0[t] == 0 exactly when voicing[t] == false.
struct PitchContour {
    std::vector<double> f0;      // Hz
    std::vector<bool> voicing;
    double hop_ms = 20.0;
};

// Per-utterance z-scores of log-F0 over voiced frames; unvoiced frames are 0.
struct NormalizedPitch {
    std::vector<double> values;
    std::vector<bool> voicing;
};

struct PitchParams {
    double hop_ms = 20.0;
    double fmin = 50.0;
    double fmax = 500.0;
    double threshold = 0.3;       // YIN periodicity threshold
    std::size_t window = 1024;    // analysis window per hop
};

namespace detail {

// YIN difference function + cumulative mean normalization on one window.
// Returns the refined period in samples, or 0 if unvoiced.
inline double yin_period(const double* x, std::size_t n, std::size_t tau_min,
                         std::size_t tau_max, double threshold) {
    const std::size_t half = n / 2;
    tau_max = std::min(tau_max, half - 1);
    if (tau_min >= tau_max) return 0.0;

    std::vector<double> diff(tau_max + 1, 0.0);
    for (std::size_t tau = 1; tau <= tau_max; ++tau) {
        double acc = 0.0;
        for (std::size_t i = 0; i < half; ++i) {
            const double d = x[i] - x[i + tau];
            acc += d * d;
        }
        diff[tau] = acc;
    }
    // Cumulative mean normalized difference; d'(0) := 1 by convention.
    std::vector<double> cmnd(tau_max + 1, 1.0);
    double running = 0.0;
    for (std::size_t tau = 1; tau <= tau_max; ++tau) {
        running += diff[tau];
        cmnd[tau] = running > 0.0 ? diff[tau] * static_cast<double>(tau) / running : 1.0;
    }
    // First region under the threshold; take its deepest point (harmonic-rich
    // signals ripple inside the dip, so a first-local-minimum rule can stop
    // one scallop early).
    std::size_t tau_est = 0;
    for (std::size_t tau = tau_min; tau <= tau_max; ++tau) {
        if (cmnd[tau] < threshold) {
            std::size_t best = tau;
            while (tau + 1 <= tau_max && cmnd[tau + 1] < threshold) {
                ++tau;
                if (cmnd[tau] < cmnd[best]) best = tau;
            }
            tau_est = best;
            break;
        }
    }
    if (tau_est == 0) return 0.0;
    // Parabolic interpolation around the minimum.
    double refined = static_cast<double>(tau_est);
    if (tau_est > tau_min && tau_est < tau_max) {
        const double a = cmnd[tau_est - 1], b = cmnd[tau_est], c = cmnd[tau_est + 1];
        const double denom = a - 2.0 * b + c;
        if (std::fabs(denom) > 1e-12) refined += 0.5 * (a - c) / denom;
    }
    return refined;
}

}  // namespace detail

// Normalized-difference (YIN-style) F0 tracker. One value per 20 ms hop;
// contour length is floor(samples / hop). Deterministic.
inline PitchContour estimate_f0(const Waveform& wave, const PitchParams& params = PitchParams()) {
    if (params.fmin >= params.fmax)
        throw std::invalid_argument("pitch_analysis: degenerate band (fmin >= fmax)");
    if (params.fmax > wave.sample_rate / 4.0)
        throw std::invalid_argument("pitch_analysis: fmax above Nyquist/2");
    const std::size_t hop =
        static_cast<std::size_t>(std::lround(params.hop_ms * wave.sample_rate / 1000.0));
    const std::size_t n_hops = wave.samples.size() / hop;
    const std::size_t tau_min =
        static_cast<std::size_t>(std::floor(wave.sample_rate / params.fmax));
    const std::size_t tau_max =
        static_cast<std::size_t>(std::ceil(wave.sample_rate / params.fmin));

    PitchContour out;
    out.hop_ms = params.hop_ms;
    out.f0.assign(n_hops, 0.0);
    out.voicing.assign(n_hops, false);

    std::vector<double> window(params.window, 0.0);
    for (std::size_t h = 0; h < n_hops; ++h) {
        const std::size_t start = h * hop;
        double energy = 0.0;
        for (std::size_t i = 0; i < params.window; ++i) {
            const std::size_t idx = start + i;
            window[i] = idx < wave.samples.size() ? wave.samples[idx] : 0.0;
            energy += window[i] * window[i];
        }
        if (energy < 1e-10) continue;  // silence stays unvoiced
        const double period = detail::yin_period(window.data(), params.window, tau_min,
                                                 tau_max, params.threshold);
        if (period > 0.0) {
            double f0 = wave.sample_rate / period;
            f0 = std::clamp(f0, params.fmin, params.fmax);
            out.f0[h] = f0;
            out.voicing[h] = true;
        }
    }
    return out;
}

// P = (log F0 - mean(log F0)) / std(log F0), statistics over voiced frames
// only (population std, epsilon-guarded). Unvoiced frames carry 0.
inline NormalizedPitch log_normalize(const PitchContour& contour) {
    NormalizedPitch out;
    out.voicing = contour.voicing;
    out.values.assign(contour.f0.size(), 0.0);

    std::vector<double> logs;
    logs.reserve(contour.f0.size());
    for (std::size_t t = 0; t < contour.f0.size(); ++t)
        if (contour.voicing[t]) logs.push_back(std::log(contour.f0[t]));
    if (logs.empty()) return out;

    double mean = 0.0;
    for (double v : logs) mean += v;
    mean /= static_cast<double>(logs.size());
    double var = 0.0;
    for (double v : logs) var += (v - mean) * (v - mean);
    var /= static_cast<double>(logs.size());
    const double stddev = std::max(std::sqrt(var), 1e-8);

    std::size_t k = 0;
    for (std::size_t t = 0; t < contour.f0.size(); ++t) {
        if (!contour.voicing[t]) continue;
        double z = (logs[k++] - mean) / stddev;
        // Zero-variance contours (all voiced frames equal) map to exactly 0.
        if (var == 0.0) z = 0.0;
        out.values[t] = z;
    }
    return out;
}

struct PearsonResult {
    double value = 0.0;
    bool degenerate = false;
};

// Pearson correlation over frames voiced in both contours. Accumulation in
// long double keeps self-correlation at exactly 1.0 after rounding. Returns
// 0 with the degenerate flag when fewer than 2 jointly voiced frames exist
// or either side has zero variance.
inline PearsonResult f0_pearson(const PitchContour& a, const PitchContour& b) {
    if (a.f0.size() != b.f0.size())
        throw std::invalid_argument("pitch_analysis: contour length mismatch");
    std::vector<std::size_t> idx;
    for (std::size_t t = 0; t < a.f0.size(); ++t)
        if (a.voicing[t] && b.voicing[t]) idx.push_back(t);
    PearsonResult res;
    if (idx.size() < 2) {
        res.degenerate = true;
        return res;
    }
    long double ma = 0.0L, mb = 0.0L;
    for (std::size_t t : idx) {
        ma += a.f0[t];
        mb += b.f0[t];
    }
    ma /= idx.size();
    mb /= idx.size();
    long double saa = 0.0L, sbb = 0.0L, sab = 0.0L;
    for (std::size_t t : idx) {
        const long double da = a.f0[t] - ma;
        const long double db = b.f0[t] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (saa == 0.0L || sbb == 0.0L) {
        res.degenerate = true;
        return res;
    }
    const long double r = sab / sqrtl(saa * sbb);
    res.value = static_cast<double>(std::clamp(r, -1.0L, 1.0L));
    return res;
}

// Pairing policy for aligning a pitch sequence with T encoder frames:
// truncate the longer side; a contour shorter than T is a contract error
// (frames are never padded with voiced values).
inline NormalizedPitch reconcile_pitch_length(const NormalizedPitch& p, std::size_t frames) {
    if (p.values.size() < frames)
        throw std::runtime_error("pitch_analysis: pitch contour shorter than frame sequence");
    NormalizedPitch out;
    out.values.assign(p.values.begin(), p.values.begin() + frames);
    out.voicing.assign(p.voicing.begin(), p.voicing.begin() + frames);
    return out;
}

}  // namespace progre
