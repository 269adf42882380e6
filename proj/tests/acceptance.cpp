// Copyright 2026 The progre Authors
// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. argv[1] must be the CLI binary path (used by the end-to-end
// criteria).
//
// Licensed under the Apache License, Version 2.0

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "progre/archive.hpp"
#include "progre/checkpoint.hpp"
#include "progre/corpus.hpp"
#include "progre/mask.hpp"
#include "progre/model.hpp"
#include "progre/objectives.hpp"
#include "progre/pitch.hpp"
#include "progre/probing.hpp"
#include "progre/speaker_teacher.hpp"
#include "progre/training.hpp"
#include "progre/unit_discovery.hpp"

using namespace progre;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;
std::string g_cli;
std::string g_workspace;

void report(int criterion, const std::string& name, bool pass, const std::string& detail,
            double seconds) {
    std::printf("[%s] criterion %d: %s (%s, %.1f s)\n", pass ? "PASS" : "FAIL", criterion,
                name.c_str(), detail.c_str(), seconds);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

void run_criterion(int criterion, const std::string& name,
                   const std::function<std::pair<bool, std::string>()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = false;
    std::string detail;
    try {
        auto [p, d] = body();
        pass = p;
        detail = d;
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report(criterion, name, pass, detail, secs);
}

int run_cli(const std::string& args) {
    const std::string cmd = g_cli + " " + args + " >> " + g_workspace + "/cli_log.txt 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
}

std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Waveform tone(double freq, std::size_t samples, double amp = 0.4) {
    Waveform w;
    w.samples.resize(samples);
    for (std::size_t i = 0; i < samples; ++i)
        w.samples[i] = amp * std::sin(2.0 * M_PI * freq * i / kSampleRate);
    return w;
}

// ---- criterion 1: gradient suite ----

std::pair<bool, std::string> criterion_gradients() {
    ModelConfig cfg = ModelConfig::tiny();  // D=8, n=2, i=1
    cfg.num_units = 8;
    cfg.mask_span_len = 2;
    cfg.mask_start_prob = 0.3;
    cfg.max_positions = 16;
    ProgreModel model(cfg, 1001);

    const std::size_t L = 1680;  // exactly T = 5 frames
    Waveform wave = tone(220.0, L);
    const std::size_t T = cfg.frontend_output_length(L);
    if (T != 5) return {false, "expected T=5, got " + std::to_string(T)};
    NormalizedPitch pitch = log_normalize(estimate_f0(wave));
    MaskSpec mask = sample_mask(T, cfg.mask_start_prob, cfg.mask_span_len, 7);
    std::vector<int> labels = {3, 1, 4, 1, 5};
    SpeakerTarget target =
        TeacherProvider::synthetic(5, cfg.speaker_embed_dim).speaker_target("u", "spk1");
    LossWeights weights;  // 10, 1, 1

    auto loss_graph = [&](Graph& g) {
        EncoderVars ev = model.forward_graph(g, wave, pitch, &mask, nullptr);
        Var l_f = feature_penalty_graph(g, ev.x_f);
        Var l_s = speaker_loss_graph(g, ev.speaker_repr, target,
                                     g.param(model.store().get("projections.A_s")), mask);
        Var l_c = content_loss_graph(g, ev.content_out, labels,
                                     g.param(model.store().get("projections.A_c")),
                                     g.param(model.store().get("unit_embeddings.E")), mask,
                                     cfg.content_temp);
        return g.add(g.add(g.mul_scalar(l_f, weights.lambda_f),
                           g.mul_scalar(l_s, weights.lambda_s)),
                     g.mul_scalar(l_c, weights.lambda_c));
    };

    model.store().zero_grads();
    {
        Graph g(true);
        g.backward(loss_graph(g));
    }
    auto eval = [&]() {
        Graph g(true);
        return g.value(loss_graph(g))[0];
    };

    const double h = 1e-6;
    double max_rel = 0.0;
    std::string worst;
    std::size_t checked = 0;
    for (const std::string& name : model.store().param_names()) {
        ParamSlot& slot = model.store().get(name);
        for (std::size_t i = 0; i < slot.value.size(); ++i) {
            const double saved = slot.value[i];
            slot.value[i] = saved + h;
            const double up = eval();
            slot.value[i] = saved - h;
            const double down = eval();
            slot.value[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = slot.grad[i];
            const double rel =
                std::fabs(analytic - numeric) / std::max({std::fabs(analytic),
                                                          std::fabs(numeric), 1e-3});
            ++checked;
            if (rel > max_rel) {
                max_rel = rel;
                worst = name + "[" + std::to_string(i) + "]";
            }
        }
    }
    std::ostringstream os;
    os << checked << " params across all groups, max rel err " << max_rel << " at " << worst;
    return {max_rel < 1e-4, os.str()};
}

// ---- criterion 2: pitch normalization invariants ----

std::pair<bool, std::string> criterion_pitch_normalization() {
    double worst_mean = 0.0, worst_std = 0.0, worst_scale = 0.0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        Rng rng(derive_seed(2024, "acc2", seed));
        const std::size_t n = 10 + rng.uniform_below(60);
        PitchContour c;
        c.f0.resize(n);
        c.voicing.assign(n, false);
        for (std::size_t i = 0; i < n; ++i) {
            if (rng.uniform() < 0.75) {
                c.f0[i] = 60.0 + 400.0 * rng.uniform();
                c.voicing[i] = true;
            } else {
                c.f0[i] = 0.0;
            }
        }
        NormalizedPitch p = log_normalize(c);
        std::vector<double> voiced;
        for (std::size_t i = 0; i < n; ++i)
            if (c.voicing[i]) voiced.push_back(p.values[i]);
        if (voiced.size() < 2) continue;
        double mean = 0.0;
        for (double v : voiced) mean += v;
        mean /= static_cast<double>(voiced.size());
        double var = 0.0;
        for (double v : voiced) var += (v - mean) * (v - mean);
        var /= static_cast<double>(voiced.size());
        worst_mean = std::max(worst_mean, std::fabs(mean));
        worst_std = std::max(worst_std, std::fabs(std::sqrt(var) - 1.0));
        for (double scale : {0.5, 2.0, 10.0}) {
            PitchContour cs = c;
            for (std::size_t i = 0; i < n; ++i) cs.f0[i] *= c.voicing[i] ? scale : 1.0;
            NormalizedPitch ps = log_normalize(cs);
            for (std::size_t i = 0; i < n; ++i)
                worst_scale = std::max(worst_scale, std::fabs(ps.values[i] - p.values[i]));
        }
    }
    std::ostringstream os;
    os << "1000 contours: max |mean| " << worst_mean << ", max |std-1| " << worst_std
       << ", max scale drift " << worst_scale;
    return {worst_mean < 1e-6 && worst_std < 1e-6 && worst_scale < 1e-6, os.str()};
}

// ---- criterion 3: masked-frame locality ----

std::pair<bool, std::string> criterion_locality() {
    const std::size_t T = 15, D = 6, E = 5, U = 7, K = 192;
    Rng gen(31337);
    auto rand_tensor = [&](std::vector<std::size_t> shape) {
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = gen.gaussian();
        return t;
    };
    Tensor a_c = rand_tensor({D, E});
    Tensor units = rand_tensor({U, E});
    Tensor a_s = rand_tensor({D, K});
    SpeakerTarget target = SpeakerTarget::normalized(rand_tensor({K}));
    std::size_t cases = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Tensor o = rand_tensor({T, D});
        MaskSpec m = sample_mask(T, 0.25, 3, seed);
        std::vector<int> z(T);
        for (auto& v : z) v = static_cast<int>(gen.uniform_below(U));
        const double lc0 = content_loss(o, z, a_c, units, m, 0.1);
        const double ls0 = speaker_loss(o, target, a_s, m);

        std::vector<int> z2 = z;
        Tensor o2 = o;
        for (std::size_t t = 0; t < T; ++t) {
            if (m.masked[t]) continue;
            z2[t] = (z[t] + 1) % static_cast<int>(U);
            for (std::size_t j = 0; j < D; ++j) o2.at(t, j) += gen.gaussian();
        }
        if (content_loss(o, z2, a_c, units, m, 0.1) != lc0)
            return {false, "l_c changed for unmasked mutation at seed " + std::to_string(seed)};
        if (speaker_loss(o2, target, a_s, m) != ls0)
            return {false, "l_s changed for unmasked mutation at seed " + std::to_string(seed)};

        const std::size_t mt = m.masked_indices()[0];
        std::vector<int> z3 = z;
        z3[mt] = (z[mt] + 1) % static_cast<int>(U);
        Tensor o3 = o;
        o3.at(mt, 0) += 1.0;
        if (content_loss(o, z3, a_c, units, m, 0.1) == lc0)
            return {false, "l_c blind to masked mutation at seed " + std::to_string(seed)};
        if (speaker_loss(o3, target, a_s, m) == ls0)
            return {false, "l_s blind to masked mutation at seed " + std::to_string(seed)};
        ++cases;
    }
    return {true, std::to_string(cases) + " seeded cases, all exact"};
}

// ---- criterion 4: loss anchor values ----

std::pair<bool, std::string> criterion_loss_anchors() {
    const std::size_t D = 4, K = 192;
    Tensor a_s = Tensor::zeros({D, K});
    a_s.at(0, 0) = 1.0;
    a_s.at(1, 1) = 1.0;
    Tensor s_vec = Tensor::zeros({K});
    s_vec[0] = 1.0;
    SpeakerTarget target{s_vec};
    MaskSpec mask = MaskSpec::from_flags({true, true});

    Tensor o_pos = Tensor::zeros({2, D});
    o_pos.at(0, 0) = 2.0;
    o_pos.at(1, 0) = 0.5;
    Tensor o_orth = Tensor::zeros({2, D});
    o_orth.at(0, 1) = 1.0;
    o_orth.at(1, 1) = 3.0;
    Tensor o_neg = Tensor::zeros({2, D});
    o_neg.at(0, 0) = -1.0;
    o_neg.at(1, 0) = -4.0;

    const double e_pos = std::fabs(speaker_loss(o_pos, target, a_s, mask) -
                                   std::log(1.0 + std::exp(-1.0)));
    const double e_orth = std::fabs(speaker_loss(o_orth, target, a_s, mask) - std::log(2.0));
    const double e_neg = std::fabs(speaker_loss(o_neg, target, a_s, mask) -
                                   std::log(1.0 + std::exp(1.0)));

    Tensor a_c({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor units1({1, 2}, {0.3, 0.7});
    Tensor o_any({1, 2}, {1.0, -2.0});
    const double e_u1 = std::fabs(content_loss(o_any, {0}, a_c, units1,
                                               MaskSpec::from_flags({true}), 0.1));
    Tensor units2({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor o_sym({1, 2}, {1.0, 1.0});
    const double e_u2 = std::fabs(content_loss(o_sym, {0}, a_c, units2,
                                               MaskSpec::from_flags({true}), 0.1) -
                                  std::log(2.0));
    std::ostringstream os;
    os << "errors: pos " << e_pos << ", orth " << e_orth << ", anti " << e_neg << ", U1 " << e_u1
       << ", U2-sym " << e_u2;
    const double tol = 1e-9;
    return {e_pos < tol && e_orth < tol && e_neg < tol && e_u1 < tol && e_u2 < tol, os.str()};
}

// ---- criterion 5: residual contract ----

std::pair<bool, std::string> criterion_residual_contract() {
    double worst_sub = 0.0, worst_add = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ModelConfig cfg = ModelConfig::tiny();
        cfg.num_layers = 2 + seed % 2;
        cfg.insert_layer = 1 + seed % cfg.num_layers;
        if (cfg.insert_layer >= cfg.num_layers) cfg.insert_layer = cfg.num_layers - 1;
        for (CombineMode mode : {CombineMode::kSubtract, CombineMode::kAdd}) {
            cfg.speaker_combine = mode;
            ProgreModel model(cfg, 500 + seed);
            Waveform w = tone(140.0 + 30.0 * seed, 12800 + 320 * seed);
            NormalizedPitch p = log_normalize(estimate_f0(w));
            MaskSpec mask = sample_mask(cfg.frontend_output_length(w.samples.size()), 0.1, 5,
                                        seed);
            EncoderOutputs out = model.forward(w, p, &mask);
            const std::size_t i = cfg.insert_layer;
            Tensor recon = model.remove_and_normalize(out.layer_outputs[i - 1], out.speaker_repr,
                                                      "speaker_extractor.removal_ln", mode);
            const double err = max_abs_diff(recon, out.block_inputs[i]);
            if (mode == CombineMode::kSubtract)
                worst_sub = std::max(worst_sub, err);
            else
                worst_add = std::max(worst_add, err);
            // The flipped sign must NOT reconstruct.
            const CombineMode flipped =
                mode == CombineMode::kSubtract ? CombineMode::kAdd : CombineMode::kSubtract;
            Tensor wrong = model.remove_and_normalize(out.layer_outputs[i - 1], out.speaker_repr,
                                                      "speaker_extractor.removal_ln", flipped);
            if (max_abs_diff(wrong, out.block_inputs[i]) < 1e-4)
                return {false, "sign flip did not change the residual step"};
        }
    }
    std::ostringstream os;
    os << "max recon err: subtract " << worst_sub << ", add " << worst_add;
    return {worst_sub < 1e-6 && worst_add < 1e-6, os.str()};
}

// ---- criterion 6: k-means oracle ----

std::pair<bool, std::string> criterion_kmeans() {
    // Exact nearest-center agreement on 50 random instances.
    Rng gen(8899);
    for (std::uint64_t inst = 0; inst < 50; ++inst) {
        const std::size_t U = 2 + gen.uniform_below(10);
        const std::size_t F = 1 + gen.uniform_below(5);
        Tensor centers({U, F});
        for (std::size_t i = 0; i < centers.size(); ++i) centers[i] = 2.0 * gen.gaussian();
        Tensor pts({80, F});
        for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = 2.0 * gen.gaussian();
        Codebook cb{centers, 0.0};
        PseudoLabelSequence got = assign_units(pts, cb);
        for (std::size_t t = 0; t < pts.rows(); ++t) {
            std::size_t best = 0;
            double best_d = HUGE_VAL;
            for (std::size_t u = 0; u < U; ++u) {
                double d = 0.0;
                for (std::size_t j = 0; j < F; ++j) {
                    const double diff = pts.at(t, j) - centers.at(u, j);
                    d += diff * diff;
                }
                if (d < best_d) {
                    best_d = d;
                    best = u;
                }
            }
            if (got[t] != static_cast<int>(best))
                return {false, "assign_units mismatch at instance " + std::to_string(inst)};
        }
    }

    // Separated clouds across 20 seeds.
    std::size_t hits = 0;
    const double cx[3] = {0.0, 10.0, 0.0};
    const double cy[3] = {0.0, 0.0, 10.0};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(derive_seed(4242, "clouds", seed));
        Tensor data({180, 2});
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < 60; ++i) {
                data.at(c * 60 + i, 0) = cx[c] + 0.25 * rng.gaussian();
                data.at(c * 60 + i, 1) = cy[c] + 0.25 * rng.gaussian();
            }
        Codebook cb = fit_minibatch_kmeans(data, 3, KmeansOptions(), seed);
        double worst = 0.0;
        std::vector<bool> used(3, false);
        for (std::size_t u = 0; u < 3; ++u) {
            double best = HUGE_VAL;
            std::size_t bv = 0;
            for (std::size_t v = 0; v < 3; ++v) {
                if (used[v]) continue;
                const double dx = cb.centers.at(u, 0) - cx[v];
                const double dy = cb.centers.at(u, 1) - cy[v];
                if (dx * dx + dy * dy < best) {
                    best = dx * dx + dy * dy;
                    bv = v;
                }
            }
            used[bv] = true;
            worst = std::max(worst, std::sqrt(best));
        }
        if (worst < 0.2) ++hits;
    }
    std::ostringstream os;
    os << "assign exact on 50 instances; cloud recovery " << hits << "/20 seeds";
    return {hits >= 19, os.str()};
}

// ---- criterion 7: weighted-sum identities ----

std::pair<bool, std::string> criterion_weighted_sum() {
    auto fake_outputs = [](const ModelConfig& cfg, std::size_t T, std::uint64_t seed) {
        Rng rng(seed);
        auto rnd = [&](std::vector<std::size_t> shape) {
            Tensor t(std::move(shape));
            for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.gaussian();
            return t;
        };
        EncoderOutputs out;
        out.pitch_repr = rnd({T, cfg.hidden_dim});
        out.speaker_repr = rnd({T, cfg.hidden_dim});
        for (std::size_t k = 0; k < cfg.num_layers; ++k)
            out.layer_outputs.push_back(rnd({T, cfg.hidden_dim}));
        out.content_out = out.layer_outputs.back();
        return out;
    };

    ModelConfig base = ModelConfig::base();
    base.hidden_dim = 8;
    ModelConfig large = ModelConfig::large();
    large.hidden_dim = 8;
    RepresentationStack sb = assemble_stack(fake_outputs(base, 4, 1), base);
    RepresentationStack sl = assemble_stack(fake_outputs(large, 4, 2), large);
    if (sb.size() != 13) return {false, "base stack size " + std::to_string(sb.size())};
    if (sl.size() != 25) return {false, "large stack size " + std::to_string(sl.size())};

    for (std::size_t k = 0; k < sb.size(); ++k) {
        Tensor w = Tensor::zeros({sb.size()});
        w[k] = 1.0;
        Tensor r = weighted_sum(sb, LayerWeights::from_weights(w));
        if (max_abs_diff(r, sb.entries[k].rep) != 0.0)
            return {false, "one-hot selection not bit-exact at entry " + std::to_string(k)};
    }

    double worst = 0.0;
    Rng rng(55);
    for (int rep = 0; rep < 50; ++rep) {
        Tensor logits({13});
        for (std::size_t i = 0; i < 13; ++i) logits[i] = 6.0 * rng.gaussian();
        LayerWeights w = LayerWeights::from_logits(logits);
        double sum = 0.0;
        for (std::size_t i = 0; i < 13; ++i) {
            if (w.weights[i] <= 0.0) return {false, "non-positive softmax weight"};
            sum += w.weights[i];
        }
        worst = std::max(worst, std::fabs(sum - 1.0));
    }
    std::ostringstream os;
    os << "stack sizes 13/25, one-hot bit-exact, softmax sum err " << worst;
    return {worst < 1e-6, os.str()};
}

// ---- criterion 8: end-to-end desk run ----

struct CsvRow {
    std::size_t step;
    double l_f, l_s, l_c, total, lr;
};

std::vector<CsvRow> read_loss_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing loss csv: " + path);
    std::vector<CsvRow> rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        CsvRow r{};
        std::stringstream ss(line);
        std::string tok;
        std::getline(ss, tok, ',');
        r.step = std::stoul(tok);
        std::getline(ss, tok, ',');
        r.l_f = std::stod(tok);
        std::getline(ss, tok, ',');
        r.l_s = std::stod(tok);
        std::getline(ss, tok, ',');
        r.l_c = std::stod(tok);
        std::getline(ss, tok, ',');
        r.total = std::stod(tok);
        std::getline(ss, tok, ',');
        r.lr = std::stod(tok);
        rows.push_back(r);
    }
    return rows;
}

std::pair<bool, std::string> criterion_end_to_end() {
    const std::string d = g_workspace + "/e2e";
    fs::create_directories(d);

    if (run_cli("gen-data --out " + d + "/corpus --speakers 4 --utts 8 --duration 2.0 --seed 11") != 0)
        return {false, "gen-data failed"};
    if (run_cli("units --iteration 1 --manifest " + d + "/corpus/manifest.jsonl --clusters 16 "
                "--out " + d + "/units --seed 11") != 0)
        return {false, "units failed"};
    const std::string pretrain_args = "pretrain --manifest " + d +
                                      "/corpus/manifest.jsonl --labels " + d +
                                      "/units --steps 200 --seed 11 --out ";
    if (run_cli(pretrain_args + d + "/run1") != 0) return {false, "pretrain run 1 failed"};
    if (run_cli(pretrain_args + d + "/run2") != 0) return {false, "pretrain run 2 failed"};

    const auto rows = read_loss_csv(d + "/run1/loss.csv");
    if (rows.size() != 200) return {false, "expected 200 csv rows"};
    const double first = rows.front().l_c;
    const double last = rows.back().l_c;
    if (!(last <= 0.5 * first)) {
        std::ostringstream os;
        os << "l_c did not halve: step1 " << first << " -> step200 " << last;
        return {false, os.str()};
    }
    const auto b1 = read_bytes(d + "/run1/checkpoint_final.naa");
    const auto b2 = read_bytes(d + "/run2/checkpoint_final.naa");
    if (b1.empty() || b1 != b2) return {false, "checkpoints not bit-identical across reruns"};
    std::ostringstream os;
    os << "l_c " << first << " -> " << last << " (x" << last / first
       << "), rerun checkpoint bit-identical (" << b1.size() << " bytes)";
    return {true, os.str()};
}

// ---- criterion 9: speaker-probe weight concentration ----

std::pair<bool, std::string> criterion_probe_weights() {
    const std::string d = g_workspace + "/e2e";
    const std::string ckpt = d + "/run1/checkpoint_final.naa";
    if (!fs::exists(ckpt)) return {false, "criterion 8 checkpoint missing"};
    if (run_cli("finetune --task utt --checkpoint " + ckpt + " --manifest " + d +
                "/corpus/manifest.jsonl --steps 400 --seed 11 --out " + d + "/probe") != 0)
        return {false, "finetune failed"};

    Archive probe = Archive::load(d + "/probe/probe.naa");
    Tensor weights = probe.tensor("weights");
    const auto tags = probe.meta().at("tags").get<std::vector<std::string>>();
    std::size_t spk_idx = SIZE_MAX;
    for (std::size_t i = 0; i < tags.size(); ++i)
        if (tags[i] == "speaker") spk_idx = i;
    if (spk_idx == SIZE_MAX) return {false, "no speaker entry in stack"};
    double others = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i)
        if (i != spk_idx) others += weights[i];
    others /= static_cast<double>(weights.size() - 1);

    std::ostringstream os;
    os << "weights [";
    for (std::size_t i = 0; i < weights.size(); ++i)
        os << tags[i] << "=" << weights[i] << (i + 1 < weights.size() ? ", " : "");
    os << "], speaker " << weights[spk_idx] << " vs mean(others) " << others << ", accuracy "
       << probe.meta().at("accuracy").get<double>();
    return {weights[spk_idx] > others, os.str()};
}

// ---- criterion 10: pitch pipeline ----

std::pair<bool, std::string> criterion_pitch_pipeline() {
    Waveform w = tone(220.0, 16000, 0.5);
    PitchContour c = estimate_f0(w);
    const std::size_t interior_end = (w.samples.size() - 1024) / 320;
    std::size_t good = 0, total = 0;
    for (std::size_t h = 0; h <= interior_end; ++h) {
        ++total;
        if (c.voicing[h] && std::fabs(c.f0[h] - 220.0) <= 1.0) ++good;
    }
    const double frac = static_cast<double>(good) / static_cast<double>(total);

    // Self-correlation on a varying contour (vibrato tone).
    Waveform v;
    v.samples.resize(16000);
    double phase = 0.0;
    for (std::size_t i = 0; i < v.samples.size(); ++i) {
        const double t = static_cast<double>(i) / kSampleRate;
        phase += 2.0 * M_PI * 200.0 * (1.0 + 0.05 * std::sin(2.0 * M_PI * 3.0 * t)) / kSampleRate;
        v.samples[i] = 0.5 * std::sin(phase);
    }
    PitchContour cv = estimate_f0(v);
    PearsonResult self = f0_pearson(cv, cv);
    std::ostringstream os;
    os << "220 Hz within +-1 Hz on " << good << "/" << total << " interior frames ("
       << 100.0 * frac << "%), self-correlation " << self.value;
    return {frac >= 0.95 && !self.degenerate && self.value == 1.0, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: acceptance <path-to-progre-cli>\n");
        return 64;
    }
    g_cli = argv[1];
    g_workspace = (fs::temp_directory_path() / "progre_acceptance").string();
    fs::remove_all(g_workspace);
    fs::create_directories(g_workspace);

    run_criterion(1, "gradient suite (tiny config, all parameter groups)", criterion_gradients);
    run_criterion(2, "pitch normalization invariants", criterion_pitch_normalization);
    run_criterion(3, "masked-frame locality", criterion_locality);
    run_criterion(4, "loss anchor values", criterion_loss_anchors);
    run_criterion(5, "residual contract and additive ablation", criterion_residual_contract);
    run_criterion(6, "k-means oracle and cloud recovery", criterion_kmeans);
    run_criterion(7, "weighted-sum identities", criterion_weighted_sum);
    run_criterion(8, "end-to-end desk run (gen-data/units/pretrain x2)", criterion_end_to_end);
    run_criterion(9, "speaker-probe weight concentration", criterion_probe_weights);
    run_criterion(10, "pitch pipeline", criterion_pitch_pipeline);

    if (g_failures == 0)
        std::printf("acceptance: all criteria passed\n");
    else
        std::printf("acceptance: %d criteria FAILED\n", g_failures);
    return g_failures;
}
