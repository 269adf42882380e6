// Copyright 2026 The progre Authors
// Checkpoint save/load: model parameters, buffers, optimizer moments, and
// run metadata in one named-array archive.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "progre/archive.hpp"
#include "progre/model.hpp"
#include "progre/objectives.hpp"

namespace progre {

inline constexpr int kCheckpointFormatVersion = 1;

inline nlohmann::json config_to_json(const ModelConfig& c) {
    nlohmann::json j;
    j["hidden_dim"] = c.hidden_dim;
    j["num_layers"] = c.num_layers;
    j["num_heads"] = c.num_heads;
    j["ffn_dim"] = c.ffn_dim;
    j["insert_layer"] = c.insert_layer;
    j["max_positions"] = c.max_positions;
    j["mask_start_prob"] = c.mask_start_prob;
    j["mask_span_len"] = c.mask_span_len;
    nlohmann::json fe = nlohmann::json::array();
    for (const auto& l : c.frontend)
        fe.push_back({{"channels", l.channels}, {"kernel", l.kernel}, {"stride", l.stride}});
    j["frontend"] = fe;
    j["frontend_norm"] = c.frontend_norm;
    j["pitch_channels"] = c.pitch_channels;
    j["pitch_kernel"] = c.pitch_kernel;
    j["pitch_gru_hidden"] = c.pitch_gru_hidden;
    j["speaker_hidden"] = c.speaker_hidden;
    j["speaker_embed_dim"] = c.speaker_embed_dim;
    j["unit_embed_dim"] = c.unit_embed_dim;
    j["num_units"] = c.num_units;
    j["content_temp"] = c.content_temp;
    j["pitch_combine"] = c.pitch_combine == CombineMode::kSubtract ? "subtract" : "add";
    j["speaker_combine"] = c.speaker_combine == CombineMode::kSubtract ? "subtract" : "add";
    return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
    c.insert_layer = j.at("insert_layer").get<std::size_t>();
    c.max_positions = j.at("max_positions").get<std::size_t>();
    c.mask_start_prob = j.at("mask_start_prob").get<double>();
    c.mask_span_len = j.at("mask_span_len").get<std::size_t>();
    c.frontend.clear();
    for (const auto& l : j.at("frontend"))
        c.frontend.push_back({l.at("channels").get<std::size_t>(),
                              l.at("kernel").get<std::size_t>(),
                              l.at("stride").get<std::size_t>()});
    c.frontend_norm = j.at("frontend_norm").get<bool>();
    c.pitch_channels = j.at("pitch_channels").get<std::size_t>();
    c.pitch_kernel = j.at("pitch_kernel").get<std::size_t>();
    c.pitch_gru_hidden = j.at("pitch_gru_hidden").get<std::size_t>();
    c.speaker_hidden = j.at("speaker_hidden").get<std::size_t>();
    c.speaker_embed_dim = j.at("speaker_embed_dim").get<std::size_t>();
    c.unit_embed_dim = j.at("unit_embed_dim").get<std::size_t>();
    c.num_units = j.at("num_units").get<std::size_t>();
    c.content_temp = j.at("content_temp").get<double>();
    c.pitch_combine = j.at("pitch_combine").get<std::string>() == "add" ? CombineMode::kAdd
                                                                        : CombineMode::kSubtract;
    c.speaker_combine = j.at("speaker_combine").get<std::string>() == "add"
                            ? CombineMode::kAdd
                            : CombineMode::kSubtract;
    return c;
}

// One CSV-row of training history kept in the checkpoint metadata.
struct LossHistoryRow {
    std::size_t step = 0;
    double l_f = 0.0, l_s = 0.0, l_c = 0.0, total = 0.0, lr = 0.0;
};

inline void save_checkpoint(const std::string& path, const ProgreModel& model,
                            const AdamOptimizer* adam, std::size_t step, std::uint64_t seed,
                            const std::vector<LossHistoryRow>& loss_tail = {}) {
    ArchiveWriter w;
    const ParameterStore& store = model.store();
    for (const std::string& name : store.param_names()) w.add_f64(name, store.get(name).value);
    for (const std::string& name : store.buffer_names())
        w.add_f64("buffers." + name, store.buffer(name));
    if (adam) {
        for (const auto& [name, mv] : adam->moments()) {
            w.add_f64("optimizer.m." + name, *mv.first);
            w.add_f64("optimizer.v." + name, *mv.second);
        }
    }
    nlohmann::json meta;
    meta["format_version"] = kCheckpointFormatVersion;
    meta["config"] = config_to_json(model.config());
    meta["step"] = step;
    meta["seed"] = seed;
    if (adam) meta["optimizer_steps"] = adam->steps_taken();
    nlohmann::json tail = nlohmann::json::array();
    for (const auto& r : loss_tail)
        tail.push_back({{"step", r.step}, {"l_f", r.l_f}, {"l_s", r.l_s}, {"l_c", r.l_c},
                        {"total", r.total}, {"lr", r.lr}});
    meta["loss_tail"] = tail;
    w.set_meta(meta);
    w.write(path);
}

struct LoadedCheckpoint {
    ModelConfig config;
    std::size_t step = 0;
    std::uint64_t seed = 0;
    nlohmann::json meta;
    Archive archive;
};

inline LoadedCheckpoint open_checkpoint(const std::string& path) {
    Archive a = Archive::load(path);
    const nlohmann::json& meta = a.meta();
    if (meta.value("format_version", -1) != kCheckpointFormatVersion)
        throw std::runtime_error("persistence_cli: checkpoint format version mismatch in " + path);
    LoadedCheckpoint c{config_from_json(meta.at("config")), meta.at("step").get<std::size_t>(),
                       meta.at("seed").get<std::uint64_t>(), meta, std::move(a)};
    return c;
}

// Copies parameters and buffers into an existing model. Every model
// parameter must be present with matching shape; the first offending array
// (sorted order) is named in the error.
inline void restore_model(const LoadedCheckpoint& ckpt, ProgreModel& model) {
    ParameterStore& store = model.store();
    for (const std::string& name : store.param_names()) {
        if (!ckpt.archive.has(name))
            throw std::runtime_error("persistence_cli: checkpoint is missing parameter " + name);
        Tensor t = ckpt.archive.tensor(name);
        ParamSlot& slot = store.get(name);
        if (!t.same_shape(slot.value))
            throw std::runtime_error("persistence_cli: shape mismatch for " + name +
                                     ": checkpoint " + t.shape_str() + " vs model " +
                                     slot.value.shape_str());
        slot.value = std::move(t);
    }
    for (const std::string& name : store.buffer_names()) {
        const std::string key = "buffers." + name;
        if (!ckpt.archive.has(key))
            throw std::runtime_error("persistence_cli: checkpoint is missing buffer " + name);
        Tensor t = ckpt.archive.tensor(key);
        if (!t.same_shape(store.buffer(name)))
            throw std::runtime_error("persistence_cli: shape mismatch for buffer " + name);
        store.buffer(name) = std::move(t);
    }
}

inline void restore_optimizer(const LoadedCheckpoint& ckpt, const ProgreModel& model,
                              AdamOptimizer& adam) {
    for (const std::string& name : model.store().param_names()) {
        const std::string mk = "optimizer.m." + name;
        const std::string vk = "optimizer.v." + name;
        if (ckpt.archive.has(mk) && ckpt.archive.has(vk))
            adam.restore_moments(name, ckpt.archive.tensor(mk), ckpt.archive.tensor(vk));
    }
    adam.set_steps_taken(ckpt.meta.value("optimizer_steps", std::size_t{0}));
}

// Builds a fresh model from the checkpoint's own config.
inline ProgreModel load_model(const std::string& path) {
    LoadedCheckpoint ckpt = open_checkpoint(path);
    ProgreModel model(ckpt.config, ckpt.seed);
    restore_model(ckpt, model);
    return model;
}

}  // namespace progre
