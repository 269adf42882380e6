// Copyright 2026 The progre Authors
// Archive, checkpoint, manifest, config, and synthetic-corpus tests.
//
// Licensed under the Apache License, Version 2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "progre/archive.hpp"
#include "progre/checkpoint.hpp"
#include "progre/config_file.hpp"
#include "progre/corpus.hpp"
#include "progre/manifest.hpp"
#include "progre/pitch.hpp"
#include "progre/rng.hpp"

using namespace progre;

namespace {

std::string temp_dir(const std::string& name) {
    auto d = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d.string();
}

std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.gaussian();
    return t;
}

TEST(ArchiveTest, RoundTripsTensorsAndInts) {
    const std::string dir = temp_dir("progre_archive_test");
    const std::string path = dir + "/a.naa";
    ArchiveWriter w;
    Tensor t1 = random_tensor({4, 7}, 1);
    Tensor t2 = random_tensor({3}, 2);
    std::vector<std::int32_t> ids = {5, -1, 7, 0};
    w.add_f64("x", t1);
    w.add_f32("y", t2);
    w.add_i32("z", ids);
    w.set_meta({{"kind", "test"}, {"n", 3}});
    w.write(path);

    Archive a = Archive::load(path);
    EXPECT_EQ(a.meta().at("kind"), "test");
    EXPECT_EQ(a.names(), (std::vector<std::string>{"x", "y", "z"}));
    EXPECT_EQ(max_abs_diff(a.tensor("x"), t1), 0.0);  // f64 is lossless
    EXPECT_LT(max_abs_diff(a.tensor("y"), t2), 1e-6);  // f32 rounds
    EXPECT_EQ(a.ints("z"), ids);
    EXPECT_TRUE(a.has("x"));
    EXPECT_FALSE(a.has("nope"));
    EXPECT_THROW(a.tensor("z"), std::runtime_error);
    EXPECT_THROW(a.ints("x"), std::runtime_error);
    EXPECT_THROW(a.tensor("nope"), std::out_of_range);
}

TEST(ArchiveTest, TamperedPayloadFailsChecksum) {
    const std::string dir = temp_dir("progre_archive_tamper");
    const std::string path = dir + "/a.naa";
    ArchiveWriter w;
    w.add_f64("x", random_tensor({8}, 3));
    w.write(path);
    auto bytes = read_bytes(path);
    bytes.back() ^= 0x01;  // flip one payload bit
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.close();
    try {
        Archive::load(path);
        FAIL() << "expected checksum error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
    }
}

TEST(ArchiveTest, NotAnArchiveRejected) {
    const std::string dir = temp_dir("progre_archive_bad");
    const std::string path = dir + "/x.naa";
    std::ofstream(path) << "hello";
    EXPECT_THROW(Archive::load(path), std::runtime_error);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    const std::string dir = temp_dir("progre_ckpt_test");
    ProgreModel model(ModelConfig::tiny(), 5);
    AdamOptimizer adam;
    // Give the optimizer some state.
    model.store().zero_grads();
    for (const auto& n : model.store().param_names())
        model.store().get(n).grad.fill(0.01);
    adam.step(model.store(), 1e-3);

    const std::string p1 = dir + "/c1.naa";
    save_checkpoint(p1, model, &adam, 17, 99, {{17, 0.1, 0.2, 0.3, 0.6, 1e-4}});

    ProgreModel model2(ModelConfig::tiny(), 1234);  // different init
    AdamOptimizer adam2;
    LoadedCheckpoint ckpt = open_checkpoint(p1);
    EXPECT_EQ(ckpt.step, 17u);
    EXPECT_EQ(ckpt.seed, 99u);
    restore_model(ckpt, model2);
    restore_optimizer(ckpt, model2, adam2);
    EXPECT_EQ(adam2.steps_taken(), adam.steps_taken());

    const std::string p2 = dir + "/c2.naa";
    save_checkpoint(p2, model2, &adam2, 17, 99, {{17, 0.1, 0.2, 0.3, 0.6, 1e-4}});
    EXPECT_EQ(read_bytes(p1), read_bytes(p2));
}

TEST(Checkpoint, ShapeMismatchNamesFirstOffendingArray) {
    const std::string dir = temp_dir("progre_ckpt_mismatch");
    ProgreModel tiny(ModelConfig::tiny(), 5);
    const std::string path = dir + "/tiny.naa";
    save_checkpoint(path, tiny, nullptr, 0, 0);

    ModelConfig bigger = ModelConfig::tiny();
    bigger.hidden_dim = 16;
    bigger.num_heads = 4;
    ProgreModel model(bigger, 5);
    LoadedCheckpoint ckpt = open_checkpoint(path);
    try {
        restore_model(ckpt, model);
        FAIL() << "expected shape mismatch";
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("shape mismatch"), std::string::npos);
        EXPECT_NE(msg.find("frontend.proj"), std::string::npos);  // first in sorted order
    }
}

TEST(Checkpoint, LoadModelRebuildsFromOwnConfig) {
    const std::string dir = temp_dir("progre_ckpt_roundtrip");
    ModelConfig cfg = ModelConfig::tiny();
    cfg.num_layers = 3;
    cfg.insert_layer = 2;
    ProgreModel model(cfg, 6);
    save_checkpoint(dir + "/m.naa", model, nullptr, 3, 42);
    ProgreModel loaded = load_model(dir + "/m.naa");
    EXPECT_EQ(loaded.config().num_layers, 3u);
    EXPECT_EQ(loaded.config().insert_layer, 2u);
    for (const auto& n : model.store().param_names())
        EXPECT_EQ(max_abs_diff(loaded.store().get(n).value, model.store().get(n).value), 0.0);
}

TEST(ManifestTest, RoundTripAndValidation) {
    const std::string dir = temp_dir("progre_manifest_test");
    write_wav_pcm16(dir + "/a.wav", std::vector<double>(800, 0.0));
    Manifest m;
    m.entries.push_back({"utt_a", dir + "/a.wav", "spk0", "class1", 0.05});
    save_manifest(m, dir + "/manifest.jsonl");
    Manifest loaded = load_manifest(dir + "/manifest.jsonl");
    ASSERT_EQ(loaded.entries.size(), 1u);
    EXPECT_EQ(loaded.entries[0].utterance_id, "utt_a");
    EXPECT_EQ(loaded.entries[0].speaker_label, "spk0");
    EXPECT_EQ(loaded.entries[0].probe_label, "class1");

    // Duplicate id rejected.
    std::ofstream f(dir + "/dup.jsonl");
    f << R"({"utterance_id":"u","audio_path":"a.wav","duration_s":0.05})" << "\n";
    f << R"({"utterance_id":"u","audio_path":"a.wav","duration_s":0.05})" << "\n";
    f.close();
    EXPECT_THROW(load_manifest(dir + "/dup.jsonl"), std::runtime_error);

    // Missing audio rejected.
    std::ofstream g(dir + "/missing.jsonl");
    g << R"({"utterance_id":"u","audio_path":"nope.wav","duration_s":0.05})" << "\n";
    g.close();
    EXPECT_THROW(load_manifest(dir + "/missing.jsonl"), std::runtime_error);
}

TEST(ConfigFile, DefaultsParseOverridesAndUnknownKeys) {
    const std::string dir = temp_dir("progre_config_test");
    {
        std::ofstream f(dir + "/run.cfg");
        f << "# desk run\n";
        f << "model.preset = tiny\n";
        f << "model.num_units = 16\n";
        f << "train.steps = 250   # comment\n";
        f << "pitch.fmax = 400\n";
    }
    RunConfig cfg = load_run_config(dir + "/run.cfg");
    EXPECT_EQ(cfg.model.num_units, 16u);
    EXPECT_EQ(cfg.train_steps, 250u);
    EXPECT_DOUBLE_EQ(cfg.pitch.fmax, 400.0);
    EXPECT_EQ(cfg.model.hidden_dim, ModelConfig::tiny().hidden_dim);
    // Documented schedule/optimizer defaults.
    EXPECT_DOUBLE_EQ(cfg.peak_lr, 5e-4);
    EXPECT_DOUBLE_EQ(cfg.warmup_frac, 0.08);
    EXPECT_DOUBLE_EQ(cfg.loss_weights.lambda_f, 10.0);
    EXPECT_DOUBLE_EQ(cfg.adam.beta1, 0.9);
    EXPECT_DOUBLE_EQ(cfg.adam.beta2, 0.98);
    EXPECT_DOUBLE_EQ(cfg.adam.eps, 1e-6);
    EXPECT_DOUBLE_EQ(cfg.adam.weight_decay, 0.01);
    EXPECT_EQ(cfg.units_batch_frames, 10000u);
    EXPECT_EQ(cfg.units_restarts, 20u);

    // CLI-style override wins over the file.
    RunConfig cfg2 = load_run_config(dir + "/run.cfg", {{"train.steps", "7"}});
    EXPECT_EQ(cfg2.train_steps, 7u);

    {
        std::ofstream f(dir + "/bad.cfg");
        f << "model.bogus_key = 3\n";
    }
    EXPECT_THROW(load_run_config(dir + "/bad.cfg"), std::runtime_error);
    {
        std::ofstream f(dir + "/bad2.cfg");
        f << "train.steps = banana\n";
    }
    EXPECT_THROW(load_run_config(dir + "/bad2.cfg"), std::runtime_error);
}

TEST(ConfigFile, ResolvedEchoReloadsIdentically) {
    const std::string dir = temp_dir("progre_config_echo");
    RunConfig cfg = load_run_config("", {{"model.preset", "base"},
                                         {"train.steps", "123"},
                                         {"model.insert_layer", "5"}});
    write_resolved_config(cfg, dir + "/resolved.cfg");
    RunConfig again = load_run_config(dir + "/resolved.cfg");
    EXPECT_EQ(again.train_steps, 123u);
    EXPECT_EQ(again.model.insert_layer, 5u);
    EXPECT_EQ(again.model.hidden_dim, 768u);
    EXPECT_EQ(again.model.frontend.size(), 7u);
    // Echo of the echo is byte-identical (fully resolved both times).
    write_resolved_config(again, dir + "/resolved2.cfg");
    EXPECT_EQ(read_bytes(dir + "/resolved.cfg"), read_bytes(dir + "/resolved2.cfg"));
}

TEST(Corpus, DeterministicAndWellFormed) {
    const std::string d1 = temp_dir("progre_corpus_a");
    const std::string d2 = temp_dir("progre_corpus_b");
    CorpusSpec spec;
    spec.n_speakers = 4;
    spec.n_utts = 2;
    spec.duration_s = 1.0;
    spec.seed = 5;
    Manifest m1 = gen_synthetic_corpus(spec, d1);
    Manifest m2 = gen_synthetic_corpus(spec, d2);
    EXPECT_EQ(m1.entries.size(), 8u);  // n_speakers * n_utts
    for (const auto& e : m1.entries) {
        const std::string rel = std::filesystem::path(e.audio_path).filename().string();
        EXPECT_EQ(read_bytes(e.audio_path), read_bytes(d2 + "/" + rel)) << rel;
    }
    // Manifest and frame labels byte-identical too.
    EXPECT_EQ(read_bytes(d1 + "/manifest.jsonl"), read_bytes(d2 + "/manifest.jsonl"));
    EXPECT_EQ(read_bytes(d1 + "/frame_labels.naa"), read_bytes(d2 + "/frame_labels.naa"));
}

TEST(Corpus, SpeakerPitchTargetsRecovered) {
    const std::string dir = temp_dir("progre_corpus_pitch");
    CorpusSpec spec;
    spec.n_speakers = 4;
    spec.n_utts = 1;
    spec.duration_s = 1.0;
    spec.seed = 9;
    Manifest m = gen_synthetic_corpus(spec, dir);
    const double targets[4] = {110.0, 165.0, 220.0, 330.0};
    for (std::size_t s = 0; s < 4; ++s) {
        const Waveform w = load_waveform(m.entries[s * spec.n_utts].audio_path);
        PitchContour c = estimate_f0(w);
        std::vector<double> voiced;
        for (std::size_t h = 0; h < c.f0.size(); ++h)
            if (c.voicing[h]) voiced.push_back(c.f0[h]);
        ASSERT_GE(voiced.size(), 10u) << "speaker " << s;
        std::nth_element(voiced.begin(), voiced.begin() + voiced.size() / 2, voiced.end());
        EXPECT_NEAR(voiced[voiced.size() / 2], targets[s], 2.0) << "speaker " << s;
    }
}

TEST(Corpus, FrameLabelsAlternateEveryTenFrames) {
    const std::string dir = temp_dir("progre_corpus_labels");
    CorpusSpec spec;
    spec.n_speakers = 1;
    spec.n_utts = 1;
    spec.duration_s = 1.0;
    spec.seed = 3;
    gen_synthetic_corpus(spec, dir);
    LabelStore store = LabelStore::load(dir + "/frame_labels.naa",
                                        dir + "/frame_labels.index.json");
    EXPECT_EQ(store.num_units, 2u);
    const auto& seq = store.labels.begin()->second;
    ASSERT_EQ(seq.size(), 50u);
    for (std::size_t t = 0; t < seq.size(); ++t)
        EXPECT_EQ(seq[t], static_cast<int>((t / 10) % 2));
}

}  // namespace
