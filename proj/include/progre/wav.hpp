// Copyright 2026 The progre Authors
// RIFF/WAV ingestion and emission (mono 16 kHz, PCM16 or float32).
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace progre {

// Mono 16 kHz waveform, samples scaled to [-1, 1].
struct Waveform {
    std::vector<double> samples;
    int sample_rate = 16000;

    std::size_t size() const { return samples.size(); }
};

inline constexpr int kSampleRate = 16000;
// One 25 ms analysis window; shorter inputs are rejected at load.
inline constexpr std::size_t kMinWaveformSamples = 400;

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

// Strict loader: mono, 16 kHz, PCM16 (format 1) or IEEE float32 (format 3).
// Anything else is an error; resampling belongs upstream, not here.
inline Waveform load_waveform(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("audio_frontend: cannot open file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw std::runtime_error("audio_frontend: not a RIFF/WAVE file: " + path);

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        const std::uint32_t len = detail::read_u32(bytes.data() + pos + 4);
        if (pos + 8 + len > bytes.size())
            throw std::runtime_error("audio_frontend: truncated chunk in " + path);
        if (std::memcmp(id, "fmt ", 4) == 0 && len >= 16) {
            const unsigned char* f = bytes.data() + pos + 8;
            format = detail::read_u16(f);
            channels = detail::read_u16(f + 2);
            rate = detail::read_u32(f + 4);
            bits = detail::read_u16(f + 14);
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = bytes.data() + pos + 8;
            data_len = len;
        }
        pos += 8 + len + (len & 1);  // chunks are word-aligned
    }
    if (format == 0 || data == nullptr)
        throw std::runtime_error("audio_frontend: missing fmt/data chunk in " + path);
    if (channels != 1)
        throw std::runtime_error("audio_frontend: unsupported channel count (" +
                                 std::to_string(channels) + "), expected mono");
    if (rate != kSampleRate)
        throw std::runtime_error("audio_frontend: unsupported sample rate (" +
                                 std::to_string(rate) + " Hz), expected 16000");

    Waveform w;
    w.sample_rate = static_cast<int>(rate);
    if (format == 1 && bits == 16) {
        const std::size_t n = data_len / 2;
        w.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::int16_t s =
                static_cast<std::int16_t>(detail::read_u16(data + 2 * i));
            w.samples[i] = static_cast<double>(s) / 32768.0;
        }
    } else if (format == 3 && bits == 32) {
        const std::size_t n = data_len / 4;
        w.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t u = detail::read_u32(data + 4 * i);
            float f;
            std::memcpy(&f, &u, 4);
            w.samples[i] = static_cast<double>(f);
        }
    } else {
        throw std::runtime_error("audio_frontend: unsupported sample format (fmt " +
                                 std::to_string(format) + ", " + std::to_string(bits) + " bit)");
    }
    if (w.samples.size() < kMinWaveformSamples)
        throw std::runtime_error("audio_frontend: waveform too short (" +
                                 std::to_string(w.samples.size()) + " samples, need >= " +
                                 std::to_string(kMinWaveformSamples) + ")");
    for (double s : w.samples)
        if (!std::isfinite(s)) throw std::runtime_error("audio_frontend: non-finite sample in " + path);
    return w;
}

// PCM16 writer. Values are scaled by 32768, rounded to nearest and clipped;
// a written sample q decodes back to exactly q/32768 through the loader.
inline void write_wav_pcm16(const std::string& path, const std::vector<double>& samples,
                            int sample_rate = kSampleRate) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("audio_frontend: cannot write file: " + path);
    auto u32 = [&](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        out.write(reinterpret_cast<char*>(b), 4);
    };
    auto u16 = [&](std::uint16_t v) {
        unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
        out.write(reinterpret_cast<char*>(b), 2);
    };
    const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
    out.write("RIFF", 4);
    u32(36 + data_len);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    u32(16);
    u16(1);  // PCM
    u16(1);  // mono
    u32(static_cast<std::uint32_t>(sample_rate));
    u32(static_cast<std::uint32_t>(sample_rate) * 2);
    u16(2);
    u16(16);
    out.write("data", 4);
    u32(data_len);
    for (double s : samples) {
        double v = s * 32768.0;
        if (v > 32767.0) v = 32767.0;
        if (v < -32768.0) v = -32768.0;
        const std::int16_t q = static_cast<std::int16_t>(std::lrint(v));
        u16(static_cast<std::uint16_t>(q));
    }
    if (!out) throw std::runtime_error("audio_frontend: short write: " + path);
}

}  // namespace progre
