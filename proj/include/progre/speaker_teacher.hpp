// Copyright 2026 The progre Authors
// Pluggable provider of utterance-level speaker embedding targets.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "progre/archive.hpp"
#include "progre/objectives.hpp"
#include "progre/rng.hpp"

namespace progre {

// The synthetic provider stands in for a real pre-trained speaker teacher:
// it emits a fixed unit vector per speaker label, which is all the masked
// regression target in the speaker loss requires. External mode loads
// precomputed embeddings (JSON index + named-array archive keyed by
// utterance id) from any real teacher and re-normalizes them.
class TeacherProvider {
public:
    static TeacherProvider synthetic(std::uint64_t seed, std::size_t dim = 192) {
        TeacherProvider t;
        t.kind_ = Kind::kSynthetic;
        t.seed_ = seed;
        t.dim_ = dim;
        return t;
    }

    // index_path: JSON {utterance_id: array_name}; archive holds the vectors.
    static TeacherProvider external_file(const std::string& index_path,
                                         const std::string& archive_path) {
        TeacherProvider t;
        t.kind_ = Kind::kExternal;
        std::ifstream in(index_path);
        if (!in)
            throw std::runtime_error("speaker_teacher: cannot open index: " + index_path);
        nlohmann::json index = nlohmann::json::parse(in);
        Archive archive = Archive::load(archive_path);
        for (const auto& [utt, name] : index.items()) {
            Tensor v = archive.tensor(name.get<std::string>());
            if (t.dim_ == 0) t.dim_ = v.size();
            if (v.size() != t.dim_)
                throw std::runtime_error("speaker_teacher: inconsistent embedding dim for " + utt);
            t.embeddings_.emplace(utt, SpeakerTarget::normalized(std::move(v)));
        }
        if (t.embeddings_.empty())
            throw std::runtime_error("speaker_teacher: empty embedding index: " + index_path);
        return t;
    }

    std::size_t embedding_dim() const { return dim_; }
    bool is_synthetic() const { return kind_ == Kind::kSynthetic; }

    // Synthetic mode requires a speaker label (identical output for every
    // utterance of the speaker); external mode requires a stored entry.
    SpeakerTarget speaker_target(const std::string& utterance_id,
                                 const std::string& speaker_label) const {
        if (kind_ == Kind::kSynthetic) {
            if (speaker_label.empty())
                throw std::invalid_argument(
                    "speaker_teacher: synthetic provider needs a speaker label (utterance " +
                    utterance_id + ")");
            Rng rng(derive_seed(seed_, "speaker_teacher", fnv1a64(speaker_label)));
            Tensor v({dim_});
            for (std::size_t i = 0; i < dim_; ++i) v[i] = rng.gaussian();
            return SpeakerTarget::normalized(std::move(v));
        }
        auto it = embeddings_.find(utterance_id);
        if (it == embeddings_.end())
            throw std::out_of_range("speaker_teacher: no embedding for utterance " + utterance_id);
        return it->second;
    }

private:
    enum class Kind { kSynthetic, kExternal };
    Kind kind_ = Kind::kSynthetic;
    std::uint64_t seed_ = 0;
    std::size_t dim_ = 192;
    std::map<std::string, SpeakerTarget> embeddings_;
};

}  // namespace progre
