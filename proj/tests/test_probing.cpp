// Copyright 2026 The progre Authors
// Weighted-sum assembly, probe training, and weight-report tests.
//
// Licensed under the Apache License, Version 2.0

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "progre/archive.hpp"
#include "progre/checkpoint.hpp"
#include "progre/pitch.hpp"
#include "progre/probing.hpp"
#include "progre/rng.hpp"

using namespace progre;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.gaussian();
    return t;
}

// Synthetic encoder outputs with the right list lengths; probing is purely
// structural over these.
EncoderOutputs fake_outputs(const ModelConfig& cfg, std::size_t T, std::uint64_t seed) {
    EncoderOutputs out;
    out.x_f = random_tensor({T, cfg.frontend_channels()}, seed);
    out.pitch_repr = random_tensor({T, cfg.hidden_dim}, seed + 1);
    out.branch_x = random_tensor({T, cfg.hidden_dim}, seed + 2);
    for (std::size_t k = 0; k < cfg.num_layers; ++k) {
        out.block_inputs.push_back(random_tensor({T, cfg.hidden_dim}, seed + 10 + k));
        out.layer_outputs.push_back(random_tensor({T, cfg.hidden_dim}, seed + 100 + k));
    }
    out.speaker_repr = random_tensor({T, cfg.hidden_dim}, seed + 3);
    out.content_out = out.layer_outputs.back();
    out.mask = MaskSpec::none(T);
    return out;
}

TEST(AssembleStack, BasePresetGivesThirteenEntries) {
    ModelConfig cfg = ModelConfig::base();  // n=12, i=4
    cfg.hidden_dim = 8;                     // widths are irrelevant to assembly
    cfg.num_heads = 2;
    cfg.ffn_dim = 16;
    RepresentationStack stack = assemble_stack(fake_outputs(cfg, 5, 1), cfg);
    EXPECT_EQ(stack.size(), 13u);  // 2 extractors + 11 retained layers
    EXPECT_EQ(stack.entries[0].tag, "pitch");
    EXPECT_EQ(stack.entries[1].tag, "speaker");
    for (const auto& e : stack.entries) EXPECT_NE(e.tag, "layer_4");  // O_i dropped
    EXPECT_EQ(stack.entries[2].tag, "layer_1");
    EXPECT_EQ(stack.entries.back().tag, "layer_12");
}

TEST(AssembleStack, LargePresetGivesTwentyFiveEntries) {
    ModelConfig cfg = ModelConfig::large();  // n=24, i=6
    cfg.hidden_dim = 8;
    cfg.num_heads = 2;
    cfg.ffn_dim = 16;
    RepresentationStack stack = assemble_stack(fake_outputs(cfg, 4, 2), cfg);
    EXPECT_EQ(stack.size(), 25u);  // 2 + 23
    for (const auto& e : stack.entries) EXPECT_NE(e.tag, "layer_6");
}

TEST(AssembleStack, FirstEntryIsPitchRepresentation) {
    ModelConfig cfg = ModelConfig::tiny();
    EncoderOutputs out = fake_outputs(cfg, 6, 3);
    RepresentationStack stack = assemble_stack(out, cfg);
    EXPECT_EQ(stack.size(), cfg.num_layers + 1);
    EXPECT_EQ(stack.entries[0].tag, "pitch");
    EXPECT_EQ(max_abs_diff(stack.entries[0].rep, out.pitch_repr), 0.0);
    EXPECT_EQ(max_abs_diff(stack.entries[1].rep, out.speaker_repr), 0.0);
}

TEST(WeightedSum, OneHotSelectionIsBitExact) {
    ModelConfig cfg = ModelConfig::tiny();
    RepresentationStack stack = assemble_stack(fake_outputs(cfg, 5, 4), cfg);
    for (std::size_t k = 0; k < stack.size(); ++k) {
        Tensor w = Tensor::zeros({stack.size()});
        w[k] = 1.0;
        Tensor r = weighted_sum(stack, LayerWeights::from_weights(w));
        EXPECT_EQ(max_abs_diff(r, stack.entries[k].rep), 0.0) << "entry " << k;
    }
}

TEST(WeightedSum, UniformAverageOfConstants) {
    RepresentationStack stack;
    stack.entries.push_back({"a", Tensor::full({3, 2}, 1.0)});
    stack.entries.push_back({"b", Tensor::full({3, 2}, 3.0)});
    Tensor w({2}, {0.5, 0.5});
    Tensor r = weighted_sum(stack, LayerWeights::from_weights(w));
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_DOUBLE_EQ(r[i], 2.0);
}

TEST(WeightedSum, CountMismatchRejected) {
    RepresentationStack stack;
    stack.entries.push_back({"a", Tensor::zeros({2, 2})});
    EXPECT_THROW(weighted_sum(stack, LayerWeights::from_weights(Tensor::zeros({3}))),
                 std::invalid_argument);
}

TEST(LayerWeightsTest, SoftmaxNormalization) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Tensor logits = random_tensor({9}, seed, 5.0);
        LayerWeights w = LayerWeights::from_logits(logits);
        double sum = 0.0;
        for (std::size_t i = 0; i < w.weights.size(); ++i) {
            EXPECT_GT(w.weights[i], 0.0);
            sum += w.weights[i];
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);
    }
    LayerWeights uniform = LayerWeights::from_logits(Tensor::zeros({7}));
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(uniform.weights[i], 1.0 / 7.0, 1e-6);
}

TEST(WeightedSum, PermutationEquivariance) {
    ModelConfig cfg = ModelConfig::tiny();
    RepresentationStack stack = assemble_stack(fake_outputs(cfg, 4, 6), cfg);
    Tensor logits = random_tensor({stack.size()}, 7);
    LayerWeights w = LayerWeights::from_logits(logits);
    Tensor base = weighted_sum(stack, w);

    RepresentationStack permuted;
    permuted.insert_layer = stack.insert_layer;
    std::vector<std::size_t> order = {2, 0, 1};
    Tensor plogits({stack.size()});
    for (std::size_t i = 0; i < order.size(); ++i) {
        permuted.entries.push_back(stack.entries[order[i]]);
        plogits[i] = logits[order[i]];
    }
    Tensor out = weighted_sum(permuted, LayerWeights::from_logits(plogits));
    EXPECT_LT(max_abs_diff(base, out), 1e-6);
}

// ---- probe training ----

// Stacks where entry `informative` carries the class signal and the rest is
// noise: the trained weight should concentrate there, and accuracy should be
// high.
std::vector<ProbeExample> synthetic_probe_corpus(std::size_t n_per_class, std::size_t classes,
                                                 std::size_t entries, std::size_t informative,
                                                 std::size_t T, std::size_t D,
                                                 std::uint64_t seed) {
    std::vector<ProbeExample> out;
    Rng rng(seed);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t n = 0; n < n_per_class; ++n) {
            ProbeExample ex;
            ex.label = static_cast<int>(c);
            for (std::size_t e = 0; e < entries; ++e) {
                Tensor rep({T, D});
                for (std::size_t i = 0; i < rep.size(); ++i) rep[i] = 0.5 * rng.gaussian();
                if (e == informative)
                    for (std::size_t t = 0; t < T; ++t) rep.at(t, c % D) += 3.0;
                ex.stack.entries.push_back({"e" + std::to_string(e), std::move(rep)});
            }
            out.push_back(std::move(ex));
        }
    }
    return out;
}

TEST(TrainProbe, UtteranceProbeLearnsAndConcentratesWeight) {
    auto examples = synthetic_probe_corpus(6, 3, 4, 1, 10, 8, 42);
    ProbeConfig cfg;
    cfg.steps = 300;
    cfg.lr = 0.05;
    ProbeResult res = train_probe(ProbeTask::kUtteranceClassification, examples, 3, cfg, 1);
    EXPECT_GE(res.accuracy, 0.99);
    // Weight on the informative entry exceeds the mean of the others.
    const Tensor& w = res.layer_weights.weights;
    double others = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (i != 1) others += w[i];
    others /= static_cast<double>(w.size() - 1);
    EXPECT_GT(w[1], others);
}

TEST(TrainProbe, FrameProbeReachesCeilingOnSeparableFrames) {
    // Frame labels encoded directly in one stack entry.
    std::vector<ProbeExample> examples;
    Rng rng(7);
    for (int u = 0; u < 6; ++u) {
        ProbeExample ex;
        const std::size_t T = 20, D = 6;
        Tensor signal({T, D});
        Tensor noise({T, D});
        ex.frame_labels.resize(T);
        for (std::size_t t = 0; t < T; ++t) {
            const int cls = static_cast<int>((t / 5) % 2);
            ex.frame_labels[t] = cls;
            for (std::size_t j = 0; j < D; ++j) {
                signal.at(t, j) = (cls == 0 ? 1.0 : -1.0) * (j == 0 ? 2.0 : 0.1) +
                                  0.05 * rng.gaussian();
                noise.at(t, j) = rng.gaussian();
            }
        }
        ex.stack.entries.push_back({"sig", std::move(signal)});
        ex.stack.entries.push_back({"noise", std::move(noise)});
        examples.push_back(std::move(ex));
    }
    ProbeConfig cfg;
    cfg.steps = 300;
    cfg.lr = 0.05;
    ProbeResult res = train_probe(ProbeTask::kFrameClassification, examples, 2, cfg, 2);
    EXPECT_GE(res.accuracy, 0.99);
}

TEST(TrainProbe, InputValidation) {
    EXPECT_THROW(train_probe(ProbeTask::kUtteranceClassification, {}, 2, ProbeConfig(), 1),
                 std::invalid_argument);
}

TEST(TrainProbe, EncoderStaysFrozen) {
    // The freezing contract: the encoder's parameter archive is
    // bit-identical before and after probe training.
    ProgreModel model(ModelConfig::tiny(), 99);
    const std::string before =
        (std::filesystem::temp_directory_path() / "progre_frozen_before.naa").string();
    const std::string after =
        (std::filesystem::temp_directory_path() / "progre_frozen_after.naa").string();
    save_checkpoint(before, model, nullptr, 0, 99);

    Waveform w;
    w.samples.resize(16000);
    for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = 0.4 * std::sin(2.0 * M_PI * 220.0 * i / 16000.0);
    NormalizedPitch p = log_normalize(estimate_f0(w));
    std::vector<ProbeExample> examples;
    for (int c = 0; c < 2; ++c) {
        ProbeExample ex;
        ex.label = c;
        EncoderOutputs out = model.forward(w, p, nullptr);
        ex.stack = assemble_stack(out, model.config());
        examples.push_back(std::move(ex));
    }
    ProbeConfig cfg;
    cfg.steps = 20;
    train_probe(ProbeTask::kUtteranceClassification, examples, 2, cfg, 1);

    save_checkpoint(after, model, nullptr, 0, 99);
    std::ifstream a(before, std::ios::binary), b(after, std::ios::binary);
    std::vector<char> ba((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::vector<char> bb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    EXPECT_EQ(ba, bb);
}

// ---- export ----

TEST(ExportWeights, CsvColumnsClipAndTop2) {
    LayerWeights w = LayerWeights::from_logits(Tensor({4}, {2.0, 0.0, 1.0, -1.0}));
    const std::string path =
        (std::filesystem::temp_directory_path() / "progre_weights.csv").string();
    export_layer_weights(w, {"pitch", "speaker", "layer_1", "layer_2"}, path, 0.45);

    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "tag,weight,plot_weight,top2");
    double weight_sum = 0.0;
    std::size_t top2_count = 0;
    std::string line;
    std::vector<double> weights, plots;
    std::vector<int> markers;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string tag, ws, ps, ms;
        std::getline(ss, tag, ',');
        std::getline(ss, ws, ',');
        std::getline(ss, ps, ',');
        std::getline(ss, ms, ',');
        weights.push_back(std::stod(ws));
        plots.push_back(std::stod(ps));
        markers.push_back(std::stoi(ms));
        weight_sum += weights.back();
        top2_count += markers.back();
    }
    ASSERT_EQ(weights.size(), 4u);
    EXPECT_NEAR(weight_sum, 1.0, 1e-6);
    EXPECT_EQ(top2_count, 2u);
    // Largest logits 2.0 and 1.0 -> entries 0 and 2 are the top-2 markers.
    EXPECT_EQ(markers[0], 1);
    EXPECT_EQ(markers[2], 1);
    // Plot values are clipped at 0.45; raw weights are not.
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_LE(plots[i], 0.45 + 1e-12);
        EXPECT_NEAR(plots[i], std::min(weights[i], 0.45), 1e-9);
    }
    EXPECT_GT(weights[0], 0.45);  // the dominant weight really was clipped
}

}  // namespace
