// Copyright 2026 The progre Authors
// Pre-training loop: dataset assembly, batching, loss logging, checkpoints.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <deque>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "progre/checkpoint.hpp"
#include "progre/config_file.hpp"
#include "progre/manifest.hpp"
#include "progre/objectives.hpp"
#include "progre/pitch.hpp"
#include "progre/speaker_teacher.hpp"
#include "progre/unit_discovery.hpp"
#include "progre/wav.hpp"

namespace progre {

// Loads audio, computes normalized pitch, and attaches pseudo-labels and
// speaker targets for every manifest entry.
inline std::vector<TrainSample> prepare_dataset(const Manifest& manifest,
                                                const LabelStore& labels,
                                                const TeacherProvider& teacher,
                                                const PitchParams& pitch_params) {
    std::vector<TrainSample> out;
    out.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        TrainSample s;
        s.utterance_id = e.utterance_id;
        s.wave = load_waveform(e.audio_path);
        s.pitch = log_normalize(estimate_f0(s.wave, pitch_params));
        auto it = labels.labels.find(e.utterance_id);
        if (it == labels.labels.end())
            throw std::runtime_error("objectives: no pseudo-labels for " + e.utterance_id);
        s.labels = it->second;
        s.speaker = teacher.speaker_target(e.utterance_id, e.speaker_label);
        out.push_back(std::move(s));
    }
    return out;
}

struct PretrainResult {
    std::string checkpoint_path;
    std::vector<LossHistoryRow> history;
};

// Deterministic training loop: epoch-shuffled batches, linear
// warmup/decay schedule, per-step CSV logging, periodic checkpoints, and a
// final checkpoint. Everything derives from the master seed.
inline PretrainResult run_pretraining(const RunConfig& cfg, const std::vector<TrainSample>& data,
                                      std::uint64_t master_seed, const std::string& out_dir) {
    if (data.empty()) throw std::invalid_argument("objectives: empty training dataset");
    std::filesystem::create_directories(out_dir);

    ProgreModel model(cfg.model, derive_seed(master_seed, "model.init"));
    AdamOptimizer adam(cfg.adam);
    ScheduleConfig schedule{cfg.train_steps, cfg.peak_lr, cfg.warmup_frac};

    const std::string csv_path = out_dir + "/loss.csv";
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("persistence_cli: cannot write " + csv_path);
    csv << "step,l_f,l_s,l_c,total,lr\n";
    csv.precision(12);

    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    std::size_t epoch = 0;
    auto refill = [&]() {
        order.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) order[i] = i;
        Rng rng(derive_seed(master_seed, "data.order", epoch++));
        rng.shuffle(order);
        cursor = 0;
    };
    refill();

    PretrainResult result;
    std::deque<LossHistoryRow> tail;
    const std::size_t batch_size = std::min<std::size_t>(std::max<std::size_t>(cfg.batch_size, 1),
                                                         data.size());
    for (std::size_t step = 0; step < cfg.train_steps; ++step) {
        std::vector<const TrainSample*> batch;
        batch.reserve(batch_size);
        for (std::size_t b = 0; b < batch_size; ++b) {
            if (cursor >= order.size()) refill();
            batch.push_back(&data[order[cursor++]]);
        }
        const LossBreakdown loss =
            pretrain_step(model, adam, batch, step, schedule, cfg.loss_weights, master_seed);
        const double lr = learning_rate_at(step, schedule.total_steps, schedule.peak_lr,
                                           schedule.warmup_frac);
        LossHistoryRow row{step + 1, loss.l_f, loss.l_s, loss.l_c, loss.total, lr};
        result.history.push_back(row);
        tail.push_back(row);
        if (tail.size() > 50) tail.pop_front();
        csv << row.step << "," << row.l_f << "," << row.l_s << "," << row.l_c << ","
            << row.total << "," << row.lr << "\n";
        csv.flush();

        if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
            step + 1 != cfg.train_steps) {
            save_checkpoint(out_dir + "/checkpoint_step" + std::to_string(step + 1) + ".naa",
                            model, &adam, step + 1, master_seed,
                            std::vector<LossHistoryRow>(tail.begin(), tail.end()));
        }
    }

    result.checkpoint_path = out_dir + "/checkpoint_final.naa";
    save_checkpoint(result.checkpoint_path, model, &adam, cfg.train_steps, master_seed,
                    std::vector<LossHistoryRow>(tail.begin(), tail.end()));
    return result;
}

}  // namespace progre
