// Copyright 2026 The progre Authors
// JSON-lines dataset manifests.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace progre {

struct ManifestEntry {
    std::string utterance_id;
    std::string audio_path;     // resolved to an absolute/openable path at load
    std::string speaker_label;  // optional ("" when absent)
    std::string probe_label;    // optional
    double duration_s = 0.0;
};

struct Manifest {
    std::vector<ManifestEntry> entries;

    const ManifestEntry& by_id(const std::string& id) const {
        for (const auto& e : entries)
            if (e.utterance_id == id) return e;
        throw std::out_of_range("persistence_cli: no manifest entry for " + id);
    }
};

// Audio paths are stored relative to the manifest file; loading resolves
// them and checks that every referenced file exists.
inline Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("persistence_cli: cannot open manifest: " + path);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    Manifest m;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error("persistence_cli: bad JSON at " + path + ":" +
                                     std::to_string(lineno) + ": " + e.what());
        }
        ManifestEntry e;
        e.utterance_id = j.at("utterance_id").get<std::string>();
        e.audio_path = j.at("audio_path").get<std::string>();
        e.speaker_label = j.value("speaker_label", "");
        e.probe_label = j.value("probe_label", "");
        e.duration_s = j.value("duration_s", 0.0);
        if (!seen.insert(e.utterance_id).second)
            throw std::runtime_error("persistence_cli: duplicate utterance_id " + e.utterance_id +
                                     " in " + path);
        std::filesystem::path audio(e.audio_path);
        if (audio.is_relative()) audio = base / audio;
        if (!std::filesystem::exists(audio))
            throw std::runtime_error("persistence_cli: missing audio file " + audio.string() +
                                     " referenced by " + e.utterance_id);
        e.audio_path = audio.string();
        m.entries.push_back(std::move(e));
    }
    return m;
}

inline void save_manifest(const Manifest& m, const std::string& path,
                          bool relative_audio_paths = true) {
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    std::ostringstream out;
    for (const auto& e : m.entries) {
        nlohmann::json j;
        j["utterance_id"] = e.utterance_id;
        std::filesystem::path audio(e.audio_path);
        if (relative_audio_paths && audio.is_absolute())
            j["audio_path"] = std::filesystem::relative(audio, base).string();
        else
            j["audio_path"] = e.audio_path;
        if (!e.speaker_label.empty()) j["speaker_label"] = e.speaker_label;
        if (!e.probe_label.empty()) j["probe_label"] = e.probe_label;
        j["duration_s"] = e.duration_s;
        out << j.dump() << "\n";
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("persistence_cli: cannot write manifest: " + path);
    f << out.str();
}

}  // namespace progre
