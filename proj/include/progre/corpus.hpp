// Copyright 2026 The progre Authors
// Seeded synthetic speech-like corpus for desk-scale runs.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "progre/manifest.hpp"
#include "progre/rng.hpp"
#include "progre/unit_discovery.hpp"
#include "progre/wav.hpp"

namespace progre {

struct CorpusSpec {
    std::size_t n_speakers = 4;
    std::size_t n_utts = 8;       // per speaker
    double duration_s = 2.0;
    std::uint64_t seed = 0;
    double noise_level = 0.004;
    double vibrato_depth = 0.003;  // relative F0 excursion
    double vibrato_rate_hz = 5.0;
};

// Base F0 per speaker. The first four speakers use a fixed table; later
// speakers fill in chromatic-ish steps.
inline double corpus_speaker_f0(std::size_t speaker) {
    static const double table[4] = {110.0, 165.0, 220.0, 330.0};
    if (speaker < 4) return table[speaker];
    return 120.0 + 25.0 * static_cast<double>(speaker - 4);
}

// Utterances are harmonic tones: per-speaker base F0 with slow vibrato,
// per-speaker harmonic amplitude profile, an additive per-speaker signature
// (two fixed high-band sinusoids), and white noise. Frames alternate
// between two harmonic emphasis classes every 10 frames (200 ms); the
// per-frame class labels back the frame-classification probe.
//
// Writes WAVs, a JSON-lines manifest (speaker label doubles as the probe
// label), and a frame-label store. Byte-identical for identical spec+seed.
inline Manifest gen_synthetic_corpus(const CorpusSpec& spec, const std::string& out_dir) {
    if (spec.n_speakers == 0 || spec.n_utts == 0 || spec.duration_s <= 0.0)
        throw std::invalid_argument("persistence_cli: corpus spec needs positive counts");
    std::filesystem::create_directories(out_dir);
    const std::size_t n_samples =
        static_cast<std::size_t>(std::lround(spec.duration_s * kSampleRate));
    const std::size_t frames_per_utt = n_samples / 320;
    constexpr std::size_t kHarmonics = 5;
    constexpr std::size_t kFramesPerSegment = 10;  // 200 ms segments

    Manifest manifest;
    std::map<std::string, PseudoLabelSequence> frame_labels;

    for (std::size_t s = 0; s < spec.n_speakers; ++s) {
        const double f0 = corpus_speaker_f0(s);
        Rng spk_rng(derive_seed(spec.seed, "corpus.speaker", s));
        // Harmonic timbre profile in [0.2, 1].
        std::vector<double> timbre(kHarmonics);
        for (auto& a : timbre) a = 0.2 + 0.8 * spk_rng.uniform();
        // Additive signature tones (the per-speaker bias component). Kept
        // high and quiet so they do not bias the F0 estimator's lag search.
        const double sig_freq1 = 6000.0 + 150.0 * static_cast<double>(s);
        const double sig_freq2 = 6900.0 + 170.0 * static_cast<double>(s);
        const double sig_amp = 0.03;

        for (std::size_t u = 0; u < spec.n_utts; ++u) {
            Rng utt_rng(derive_seed(spec.seed, "corpus.utt", s * 1000003ULL + u));
            const double vib_phase = 2.0 * M_PI * utt_rng.uniform();
            std::vector<double> harm_phase(kHarmonics);
            for (auto& p : harm_phase) p = 2.0 * M_PI * utt_rng.uniform();
            double sig_phase1 = 2.0 * M_PI * utt_rng.uniform();
            double sig_phase2 = 2.0 * M_PI * utt_rng.uniform();

            std::vector<double> samples(n_samples, 0.0);
            std::vector<double> phase = harm_phase;
            PseudoLabelSequence labels(frames_per_utt, 0);
            for (std::size_t i = 0; i < n_samples; ++i) {
                const double t = static_cast<double>(i) / kSampleRate;
                const double inst_f0 =
                    f0 * (1.0 + spec.vibrato_depth *
                                    std::sin(2.0 * M_PI * spec.vibrato_rate_hz * t + vib_phase));
                const std::size_t frame = i / 320;
                const int seg_class =
                    static_cast<int>((frame / kFramesPerSegment) % 2);
                if (frame < frames_per_utt) labels[frame] = seg_class;
                double x = 0.0;
                for (std::size_t h = 0; h < kHarmonics; ++h) {
                    phase[h] += 2.0 * M_PI * inst_f0 * (h + 1) / kSampleRate;
                    // Class 0 emphasizes low harmonics, class 1 the high ones.
                    const double emphasis = seg_class == 0 ? (h < 2 ? 1.0 : 0.25)
                                                           : (h < 2 ? 0.4 : 1.0);
                    x += timbre[h] * emphasis * std::sin(phase[h]) / static_cast<double>(h + 2);
                }
                sig_phase1 += 2.0 * M_PI * sig_freq1 / kSampleRate;
                sig_phase2 += 2.0 * M_PI * sig_freq2 / kSampleRate;
                x += sig_amp * (std::sin(sig_phase1) + 0.7 * std::sin(sig_phase2));
                x += spec.noise_level * utt_rng.gaussian();
                samples[i] = 0.35 * x;
            }

            const std::string spk_label = "spk" + std::to_string(s);
            const std::string utt_id = spk_label + "_utt" + std::to_string(u);
            const std::string wav_name = utt_id + ".wav";
            write_wav_pcm16(out_dir + "/" + wav_name, samples);
            ManifestEntry e;
            e.utterance_id = utt_id;
            e.audio_path = out_dir + "/" + wav_name;
            e.speaker_label = spk_label;
            e.probe_label = spk_label;
            e.duration_s = spec.duration_s;
            manifest.entries.push_back(std::move(e));
            frame_labels.emplace(utt_id, std::move(labels));
        }
    }

    save_manifest(manifest, out_dir + "/manifest.jsonl");
    save_labels(frame_labels, 2, "segments", out_dir + "/frame_labels.naa",
                out_dir + "/frame_labels.index.json");
    return manifest;
}

}  // namespace progre
