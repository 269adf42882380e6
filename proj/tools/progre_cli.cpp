// Copyright 2026 The progre Authors
// progre command-line interface.
//
// Licensed under the Apache License, Version 2.0

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "progre/archive.hpp"
#include "progre/checkpoint.hpp"
#include "progre/config_file.hpp"
#include "progre/corpus.hpp"
#include "progre/manifest.hpp"
#include "progre/probing.hpp"
#include "progre/speaker_teacher.hpp"
#include "progre/training.hpp"
#include "progre/unit_discovery.hpp"

namespace {

using namespace progre;

TeacherProvider make_teacher(const RunConfig& cfg, std::uint64_t seed) {
    if (cfg.teacher_kind == "external-file") {
        if (cfg.teacher_index.empty() || cfg.teacher_archive.empty())
            throw std::runtime_error(
                "speaker_teacher: external-file mode needs teacher.index and teacher.archive");
        return TeacherProvider::external_file(cfg.teacher_index, cfg.teacher_archive);
    }
    return TeacherProvider::synthetic(derive_seed(seed, "teacher"),
                                      cfg.model.speaker_embed_dim);
}

void echo_config(const RunConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_resolved_config(cfg, out_dir + "/resolved.cfg");
}

int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir, std::uint64_t seed,
                 std::size_t speakers, std::size_t utts, double duration) {
    CorpusSpec spec;
    spec.n_speakers = speakers;
    spec.n_utts = utts;
    spec.duration_s = duration;
    spec.seed = seed;
    echo_config(cfg, out_dir);
    Manifest m = gen_synthetic_corpus(spec, out_dir);
    std::printf("gen-data: wrote %zu utterances to %s\n", m.entries.size(), out_dir.c_str());
    return 0;
}

int cmd_units(const RunConfig& cfg, int iteration, const std::string& manifest_path,
              const std::string& checkpoint, const std::string& out_dir, std::uint64_t seed) {
    Manifest manifest = load_manifest(manifest_path);
    IterationConfig icfg;
    icfg.iteration = iteration;
    icfg.num_clusters = cfg.units_num_clusters;
    icfg.subset_fraction = cfg.units_subset_fraction;
    icfg.layer_index = cfg.units_layer_index;
    icfg.kmeans.batch_frames = cfg.units_batch_frames;
    icfg.kmeans.restarts = cfg.units_restarts;
    icfg.kmeans.max_epochs = cfg.units_max_epochs;
    icfg.kmeans.tol = cfg.units_tol;
    icfg.pitch = cfg.pitch;
    icfg.seed = seed;
    icfg.checkpoint_path = checkpoint;
    echo_config(cfg, out_dir);
    IterationReport rep = run_iteration(icfg, manifest, out_dir);
    std::printf(
        "units: iteration %d, %zu clusters from %zu utterances (%zu frames), "
        "inertia %.6g, labels for %zu utterances -> %s\n",
        iteration, rep.num_clusters, rep.fit_utterances, rep.fit_frames, rep.inertia,
        rep.labeled_utterances, out_dir.c_str());
    return 0;
}

int cmd_pretrain(const RunConfig& cfg, const std::string& manifest_path,
                 const std::string& labels_dir, const std::string& out_dir, std::uint64_t seed) {
    Manifest manifest = load_manifest(manifest_path);
    LabelStore labels =
        LabelStore::load(labels_dir + "/labels.naa", labels_dir + "/labels.index.json");
    RunConfig run = cfg;
    if (run.model.num_units != labels.num_units) {
        // The codebook defines the classifier size; follow the labels.
        run.model.num_units = labels.num_units;
    }
    echo_config(run, out_dir);
    TeacherProvider teacher = make_teacher(run, seed);
    std::vector<TrainSample> data = prepare_dataset(manifest, labels, teacher, run.pitch);
    PretrainResult res = run_pretraining(run, data, seed, out_dir);
    std::printf("pretrain: %zu steps, final checkpoint %s\n", run.train_steps,
                res.checkpoint_path.c_str());
    if (!res.history.empty())
        std::printf("pretrain: l_c first %.6f last %.6f\n", res.history.front().l_c,
                    res.history.back().l_c);
    return 0;
}

int cmd_dump_features(const RunConfig& cfg, const std::string& checkpoint_path,
                      const std::string& manifest_path, std::size_t layer,
                      const std::string& out_dir) {
    Manifest manifest = load_manifest(manifest_path);
    ProgreModel model = load_model(checkpoint_path);
    std::size_t k = layer != 0 ? layer : cfg.units_layer_index;
    if (k == 0) k = std::max<std::size_t>(1, (model.config().num_layers * 3 + 2) / 4);
    echo_config(cfg, out_dir);
    FeatureStore store = dump_layer_features(model, manifest, k, cfg.pitch);
    std::filesystem::create_directories(out_dir);
    store.save(out_dir + "/features.naa", out_dir + "/features.index.json");
    std::printf("dump-features: layer %zu, %zu utterances, dim %zu -> %s\n", k, store.size(),
                store.dim(), out_dir.c_str());
    return 0;
}

int cmd_finetune(const RunConfig& cfg, const std::string& task_name,
                 const std::string& checkpoint_path, const std::string& manifest_path,
                 const std::string& frame_labels_dir, const std::string& out_dir,
                 std::uint64_t seed) {
    const ProbeTask task = task_name == "frame" ? ProbeTask::kFrameClassification
                                                : ProbeTask::kUtteranceClassification;
    Manifest manifest = load_manifest(manifest_path);
    ProgreModel model = load_model(checkpoint_path);
    echo_config(cfg, out_dir);

    LabelStore frame_labels;
    if (task == ProbeTask::kFrameClassification) {
        if (frame_labels_dir.empty())
            throw std::runtime_error("probing: frame task needs --frame-labels");
        frame_labels = LabelStore::load(frame_labels_dir + "/frame_labels.naa",
                                        frame_labels_dir + "/frame_labels.index.json");
    }

    // Class vocabulary from probe labels (sorted), or frame-label store size.
    std::map<std::string, int> classes;
    if (task == ProbeTask::kUtteranceClassification) {
        for (const auto& e : manifest.entries) {
            if (e.probe_label.empty())
                throw std::runtime_error("probing: manifest entry " + e.utterance_id +
                                         " has no probe_label");
            classes.emplace(e.probe_label, 0);
        }
        int next = 0;
        for (auto& [k, v] : classes) v = next++;
    }

    std::vector<ProbeExample> examples;
    for (const auto& e : manifest.entries) {
        const Waveform wave = load_waveform(e.audio_path);
        const NormalizedPitch pitch = log_normalize(estimate_f0(wave, cfg.pitch));
        EncoderOutputs out = model.forward(wave, pitch, nullptr);
        ProbeExample ex;
        ex.stack = assemble_stack(out, model.config());
        if (task == ProbeTask::kUtteranceClassification) {
            ex.label = classes.at(e.probe_label);
        } else {
            auto it = frame_labels.labels.find(e.utterance_id);
            if (it == frame_labels.labels.end())
                throw std::runtime_error("probing: no frame labels for " + e.utterance_id);
            ex.frame_labels = it->second;
            const std::size_t T = ex.stack.entries[0].rep.rows();
            if (ex.frame_labels.size() < T)
                throw std::runtime_error("probing: frame labels shorter than frames for " +
                                         e.utterance_id);
            ex.frame_labels.resize(T);
        }
        examples.push_back(std::move(ex));
    }
    const std::size_t num_classes = task == ProbeTask::kUtteranceClassification
                                        ? classes.size()
                                        : frame_labels.num_units;

    ProbeConfig pcfg;
    pcfg.steps = cfg.probe_steps;
    pcfg.lr = cfg.probe_lr;
    ProbeResult res = train_probe(task, examples, num_classes, pcfg, seed);

    std::filesystem::create_directories(out_dir);
    ArchiveWriter w;
    w.add_f64("logits", res.layer_weights.logits);
    w.add_f64("weights", res.layer_weights.weights);
    w.add_f64("head.weight", res.head_weight);
    w.add_f64("head.bias", res.head_bias);
    nlohmann::json meta;
    meta["kind"] = "probe";
    meta["task"] = task_name;
    meta["accuracy"] = res.accuracy;
    meta["steps"] = res.steps;
    meta["tags"] = res.tags;
    meta["num_classes"] = num_classes;
    w.set_meta(meta);
    w.write(out_dir + "/probe.naa");

    nlohmann::json metrics = {{"task", task_name}, {"accuracy", res.accuracy},
                              {"steps", res.steps}};
    std::ofstream mf(out_dir + "/metrics.json", std::ios::trunc);
    mf << metrics.dump(2) << "\n";
    export_layer_weights(res.layer_weights, res.tags, out_dir + "/weights.csv");
    std::printf("finetune: task %s, accuracy %.4f after %zu steps -> %s\n", task_name.c_str(),
                res.accuracy, res.steps, out_dir.c_str());
    return 0;
}

int cmd_probe_weights(const std::string& probe_path, const std::string& out_csv, double clip) {
    Archive a = Archive::load(probe_path);
    LayerWeights w;
    w.logits = a.tensor("logits");
    w.weights = a.tensor("weights");
    const auto tags = a.meta().at("tags").get<std::vector<std::string>>();
    export_layer_weights(w, tags, out_csv, clip);
    std::printf("probe-weights: wrote %s\n", out_csv.c_str());
    return 0;
}

int cmd_extract(const RunConfig& cfg, const std::string& checkpoint_path,
                const std::string& audio_path, const std::string& out_path) {
    write_resolved_config(cfg, out_path + ".resolved.cfg");
    ProgreModel model = load_model(checkpoint_path);
    const Waveform wave = load_waveform(audio_path);
    const NormalizedPitch pitch = log_normalize(estimate_f0(wave, cfg.pitch));
    EncoderOutputs out = model.forward(wave, pitch, nullptr);
    ArchiveWriter w;
    w.add_f64("x_f", out.x_f);
    w.add_f64("pitch_repr", out.pitch_repr);
    w.add_f64("branch_x", out.branch_x);
    for (std::size_t k = 1; k <= out.layer_outputs.size(); ++k)
        w.add_f64("layer_" + std::to_string(k), out.layer_outputs[k - 1]);
    w.add_f64("speaker_repr", out.speaker_repr);
    w.add_f64("content_out", out.content_out);
    w.set_meta({{"kind", "encoder_outputs"}, {"audio", audio_path},
                {"insert_layer", model.config().insert_layer}});
    w.write(out_path);
    std::printf("extract: %zu frames -> %s\n", out.content_out.rows(), out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"progre: progressive-residual speech representation pre-training (desk scale)"};
    app.require_subcommand(1);

    std::string config_path, out_dir, manifest_path, labels_dir, checkpoint_path;
    std::string audio_path, probe_path, task_name = "utt", frame_labels_dir, out_csv;
    std::uint64_t seed = 0;
    std::size_t speakers = 4, utts = 8, steps = 0, clusters = 0, layer = 0;
    double duration = 2.0, clip = 0.0;
    int iteration = 1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key=value config file");
        cmd->add_option("--seed", seed, "master seed (default 0)");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
    add_common(gen);
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--speakers", speakers, "number of speakers");
    gen->add_option("--utts", utts, "utterances per speaker");
    gen->add_option("--duration", duration, "utterance length in seconds");

    CLI::App* units = app.add_subcommand("units", "unit discovery (pseudo-labels)");
    add_common(units);
    units->add_option("--iteration", iteration, "1 (MFCC) or 2 (layer features)");
    units->add_option("--manifest", manifest_path, "dataset manifest (JSON lines)");
    units->add_option("--checkpoint", checkpoint_path, "checkpoint (iteration 2)");
    units->add_option("--clusters", clusters, "override cluster count");
    units->add_option("--out", out_dir, "output directory")->required();

    CLI::App* pre = app.add_subcommand("pretrain", "run pre-training");
    add_common(pre);
    pre->add_option("--manifest", manifest_path, "dataset manifest")->required();
    pre->add_option("--labels", labels_dir, "unit-discovery output directory")->required();
    pre->add_option("--steps", steps, "override train.steps");
    pre->add_option("--out", out_dir, "output directory")->required();

    CLI::App* dump = app.add_subcommand("dump-features", "dump middle-layer features");
    add_common(dump);
    dump->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    dump->add_option("--manifest", manifest_path, "dataset manifest")->required();
    dump->add_option("--layer", layer, "1-based transformer layer");
    dump->add_option("--out", out_dir, "output directory")->required();

    CLI::App* fine = app.add_subcommand("finetune", "train a weighted-sum probe");
    add_common(fine);
    fine->add_option("--task", task_name, "utt | frame")->check(CLI::IsMember({"utt", "frame"}));
    fine->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    fine->add_option("--manifest", manifest_path, "dataset manifest")->required();
    fine->add_option("--frame-labels", frame_labels_dir, "frame-label directory (frame task)");
    fine->add_option("--steps", steps, "override probe.steps");
    fine->add_option("--out", out_dir, "output directory")->required();

    CLI::App* pw = app.add_subcommand("probe-weights", "export layer-weight report CSV");
    add_common(pw);
    pw->add_option("--probe", probe_path, "probe archive from finetune")->required();
    pw->add_option("--clip", clip, "clip plot values at this weight");
    pw->add_option("--out", out_csv, "output CSV path")->required();

    CLI::App* ext = app.add_subcommand("extract", "write encoder outputs for one audio file");
    add_common(ext);
    ext->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    ext->add_option("--audio", audio_path, "input WAV")->required();
    ext->add_option("--out", out_csv, "output archive path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        std::map<std::string, std::string> overrides;
        if (steps != 0) {
            if (app.got_subcommand(pre)) overrides["train.steps"] = std::to_string(steps);
            if (app.got_subcommand(fine)) overrides["probe.steps"] = std::to_string(steps);
        }
        if (clusters != 0) overrides["units.num_clusters"] = std::to_string(clusters);
        RunConfig cfg = load_run_config(config_path, overrides);

        if (app.got_subcommand(gen))
            return cmd_gen_data(cfg, out_dir, seed, speakers, utts, duration);
        if (app.got_subcommand(units)) {
            if (manifest_path.empty()) {
                std::fprintf(stderr, "units: --manifest is required\n%s\n",
                             units->help().c_str());
                return 2;
            }
            return cmd_units(cfg, iteration, manifest_path, checkpoint_path, out_dir, seed);
        }
        if (app.got_subcommand(pre)) return cmd_pretrain(cfg, manifest_path, labels_dir, out_dir, seed);
        if (app.got_subcommand(dump))
            return cmd_dump_features(cfg, checkpoint_path, manifest_path, layer, out_dir);
        if (app.got_subcommand(fine))
            return cmd_finetune(cfg, task_name, checkpoint_path, manifest_path, frame_labels_dir,
                                out_dir, seed);
        if (app.got_subcommand(pw)) return cmd_probe_weights(probe_path, out_csv, clip);
        if (app.got_subcommand(ext)) return cmd_extract(cfg, checkpoint_path, audio_path, out_csv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
