// Copyright 2026 The progre Authors
// Flat key=value run configuration with a typed schema and documented
// defaults. Every run echoes its fully resolved configuration.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "progre/model.hpp"
#include "progre/objectives.hpp"
#include "progre/pitch.hpp"

namespace progre {

struct RunConfig {
    std::string preset = "tiny";  // tiny | base | large
    ModelConfig model = ModelConfig::tiny();

    std::size_t train_steps = 200;
    std::size_t batch_size = 8;
    double peak_lr = 5e-4;
    double warmup_frac = 0.08;
    LossWeights loss_weights;
    AdamConfig adam;
    std::size_t checkpoint_every = 100;

    PitchParams pitch;

    std::size_t units_num_clusters = 0;  // 0: iteration default (100 / 500)
    std::size_t units_batch_frames = 10000;
    std::size_t units_restarts = 20;
    double units_subset_fraction = 0.1;
    std::size_t units_layer_index = 0;   // 0: three-quarter depth default
    std::size_t units_max_epochs = 100;
    double units_tol = 1e-4;

    std::size_t probe_steps = 500;
    double probe_lr = 1e-2;

    std::string teacher_kind = "synthetic";
    std::string teacher_index;
    std::string teacher_archive;
};

namespace config_detail {

struct Option {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

inline std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size() || x < 0) throw std::invalid_argument("negative");
        return static_cast<std::size_t>(x);
    } catch (...) {
        throw std::runtime_error("persistence_cli: config key " + key +
                                 " expects a non-negative integer, got '" + v + "'");
    }
}

inline double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (...) {
        throw std::runtime_error("persistence_cli: config key " + key +
                                 " expects a real number, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::runtime_error("persistence_cli: config key " + key + " expects true/false");
}

inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_size(key, item));
    return out;
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

inline std::string fmt_real(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline CombineMode parse_combine(const std::string& key, const std::string& v) {
    if (v == "subtract") return CombineMode::kSubtract;
    if (v == "add") return CombineMode::kAdd;
    throw std::runtime_error("persistence_cli: config key " + key + " expects subtract|add");
}

#define PROGRE_OPT_SIZE(key, field)                                                   \
    Option{key, [](const RunConfig& c) { return std::to_string(c.field); },           \
           [](RunConfig& c, const std::string& v) { c.field = parse_size(key, v); }}
#define PROGRE_OPT_REAL(key, field)                                                   \
    Option{key, [](const RunConfig& c) { return fmt_real(c.field); },                 \
           [](RunConfig& c, const std::string& v) { c.field = parse_real(key, v); }}

// Schema. model.preset is applied before any other model.* key, so a config
// file can name a preset and then override individual fields.
inline const std::vector<Option>& schema() {
    static const std::vector<Option> opts = {
        Option{"model.preset", [](const RunConfig& c) { return c.preset; },
               [](RunConfig& c, const std::string& v) {
                   if (v == "tiny") c.model = ModelConfig::tiny();
                   else if (v == "base") c.model = ModelConfig::base();
                   else if (v == "large") c.model = ModelConfig::large();
                   else
                       throw std::runtime_error(
                           "persistence_cli: model.preset expects tiny|base|large, got '" + v +
                           "'");
                   c.preset = v;
               }},
        PROGRE_OPT_SIZE("model.hidden_dim", model.hidden_dim),
        PROGRE_OPT_SIZE("model.num_layers", model.num_layers),
        PROGRE_OPT_SIZE("model.num_heads", model.num_heads),
        PROGRE_OPT_SIZE("model.ffn_dim", model.ffn_dim),
        PROGRE_OPT_SIZE("model.insert_layer", model.insert_layer),
        PROGRE_OPT_SIZE("model.max_positions", model.max_positions),
        PROGRE_OPT_REAL("model.mask_start_prob", model.mask_start_prob),
        PROGRE_OPT_SIZE("model.mask_span_len", model.mask_span_len),
        Option{"model.frontend_channels",
               [](const RunConfig& c) {
                   std::vector<std::size_t> v;
                   for (const auto& l : c.model.frontend) v.push_back(l.channels);
                   return join_sizes(v);
               },
               [](RunConfig& c, const std::string& v) {
                   const auto xs = parse_size_list("model.frontend_channels", v);
                   if (xs.size() != c.model.frontend.size()) c.model.frontend.resize(xs.size());
                   for (std::size_t i = 0; i < xs.size(); ++i) c.model.frontend[i].channels = xs[i];
               }},
        Option{"model.frontend_kernels",
               [](const RunConfig& c) {
                   std::vector<std::size_t> v;
                   for (const auto& l : c.model.frontend) v.push_back(l.kernel);
                   return join_sizes(v);
               },
               [](RunConfig& c, const std::string& v) {
                   const auto xs = parse_size_list("model.frontend_kernels", v);
                   if (xs.size() != c.model.frontend.size()) c.model.frontend.resize(xs.size());
                   for (std::size_t i = 0; i < xs.size(); ++i) c.model.frontend[i].kernel = xs[i];
               }},
        Option{"model.frontend_strides",
               [](const RunConfig& c) {
                   std::vector<std::size_t> v;
                   for (const auto& l : c.model.frontend) v.push_back(l.stride);
                   return join_sizes(v);
               },
               [](RunConfig& c, const std::string& v) {
                   const auto xs = parse_size_list("model.frontend_strides", v);
                   if (xs.size() != c.model.frontend.size()) c.model.frontend.resize(xs.size());
                   for (std::size_t i = 0; i < xs.size(); ++i) c.model.frontend[i].stride = xs[i];
               }},
        Option{"model.frontend_norm",
               [](const RunConfig& c) { return c.model.frontend_norm ? "true" : "false"; },
               [](RunConfig& c, const std::string& v) {
                   c.model.frontend_norm = parse_bool("model.frontend_norm", v);
               }},
        PROGRE_OPT_SIZE("model.pitch_channels", model.pitch_channels),
        PROGRE_OPT_SIZE("model.pitch_kernel", model.pitch_kernel),
        PROGRE_OPT_SIZE("model.pitch_gru_hidden", model.pitch_gru_hidden),
        PROGRE_OPT_SIZE("model.speaker_hidden", model.speaker_hidden),
        PROGRE_OPT_SIZE("model.speaker_embed_dim", model.speaker_embed_dim),
        PROGRE_OPT_SIZE("model.unit_embed_dim", model.unit_embed_dim),
        PROGRE_OPT_SIZE("model.num_units", model.num_units),
        PROGRE_OPT_REAL("model.content_temp", model.content_temp),
        Option{"model.pitch_combine",
               [](const RunConfig& c) {
                   return c.model.pitch_combine == CombineMode::kSubtract ? "subtract" : "add";
               },
               [](RunConfig& c, const std::string& v) {
                   c.model.pitch_combine = parse_combine("model.pitch_combine", v);
               }},
        Option{"model.speaker_combine",
               [](const RunConfig& c) {
                   return c.model.speaker_combine == CombineMode::kSubtract ? "subtract" : "add";
               },
               [](RunConfig& c, const std::string& v) {
                   c.model.speaker_combine = parse_combine("model.speaker_combine", v);
               }},
        PROGRE_OPT_SIZE("train.steps", train_steps),
        PROGRE_OPT_SIZE("train.batch_size", batch_size),
        PROGRE_OPT_REAL("train.peak_lr", peak_lr),
        PROGRE_OPT_REAL("train.warmup_frac", warmup_frac),
        PROGRE_OPT_REAL("train.lambda_f", loss_weights.lambda_f),
        PROGRE_OPT_REAL("train.lambda_s", loss_weights.lambda_s),
        PROGRE_OPT_REAL("train.lambda_c", loss_weights.lambda_c),
        PROGRE_OPT_REAL("train.adam_beta1", adam.beta1),
        PROGRE_OPT_REAL("train.adam_beta2", adam.beta2),
        PROGRE_OPT_REAL("train.adam_eps", adam.eps),
        PROGRE_OPT_REAL("train.weight_decay", adam.weight_decay),
        PROGRE_OPT_REAL("train.grad_clip_norm", adam.grad_clip_norm),
        PROGRE_OPT_SIZE("train.checkpoint_every", checkpoint_every),
        PROGRE_OPT_REAL("pitch.fmin", pitch.fmin),
        PROGRE_OPT_REAL("pitch.fmax", pitch.fmax),
        PROGRE_OPT_REAL("pitch.threshold", pitch.threshold),
        PROGRE_OPT_SIZE("units.num_clusters", units_num_clusters),
        PROGRE_OPT_SIZE("units.batch_frames", units_batch_frames),
        PROGRE_OPT_SIZE("units.restarts", units_restarts),
        PROGRE_OPT_REAL("units.subset_fraction", units_subset_fraction),
        PROGRE_OPT_SIZE("units.layer_index", units_layer_index),
        PROGRE_OPT_SIZE("units.max_epochs", units_max_epochs),
        PROGRE_OPT_REAL("units.tol", units_tol),
        PROGRE_OPT_SIZE("probe.steps", probe_steps),
        PROGRE_OPT_REAL("probe.lr", probe_lr),
        Option{"teacher.kind", [](const RunConfig& c) { return c.teacher_kind; },
               [](RunConfig& c, const std::string& v) {
                   if (v != "synthetic" && v != "external-file")
                       throw std::runtime_error(
                           "persistence_cli: teacher.kind expects synthetic|external-file");
                   c.teacher_kind = v;
               }},
        Option{"teacher.index", [](const RunConfig& c) { return c.teacher_index; },
               [](RunConfig& c, const std::string& v) { c.teacher_index = v; }},
        Option{"teacher.archive", [](const RunConfig& c) { return c.teacher_archive; },
               [](RunConfig& c, const std::string& v) { c.teacher_archive = v; }},
    };
    return opts;
}

#undef PROGRE_OPT_SIZE
#undef PROGRE_OPT_REAL

inline const Option* find_option(const std::string& key) {
    for (const Option& o : schema())
        if (o.key == key) return &o;
    return nullptr;
}

inline std::string trim(const std::string& s) {
    const char* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

}  // namespace config_detail

// Parses `key = value` lines ('#' starts a comment). Unknown keys are
// errors. Overrides (e.g. from CLI flags) are applied after the file.
inline RunConfig load_run_config(const std::string& path,
                                 const std::map<std::string, std::string>& overrides = {}) {
    using namespace config_detail;
    std::map<std::string, std::string> kv;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("persistence_cli: cannot open config: " + path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("persistence_cli: expected key=value at " + path + ":" +
                                         std::to_string(lineno));
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (!find_option(key))
                throw std::runtime_error("persistence_cli: unknown config key '" + key + "' at " +
                                         path + ":" + std::to_string(lineno));
            kv[key] = value;
        }
    }
    for (const auto& [k, v] : overrides) {
        if (!find_option(k))
            throw std::runtime_error("persistence_cli: unknown config key '" + k + "'");
        kv[k] = v;
    }

    RunConfig cfg;
    // Preset first, then remaining keys in schema order.
    if (auto it = kv.find("model.preset"); it != kv.end())
        find_option("model.preset")->set(cfg, it->second);
    for (const Option& o : schema()) {
        if (o.key == "model.preset") continue;
        if (auto it = kv.find(o.key); it != kv.end()) o.set(cfg, it->second);
    }
    cfg.model.validate();
    return cfg;
}

// Writes the fully resolved configuration (defaults filled in) so every run
// is reproducible from its output directory alone.
inline void write_resolved_config(const RunConfig& cfg, const std::string& path) {
    std::ostringstream out;
    for (const auto& o : config_detail::schema()) out << o.key << " = " << o.get(cfg) << "\n";
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("persistence_cli: cannot write resolved config: " + path);
    f << out.str();
}

}  // namespace progre
