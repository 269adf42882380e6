// Copyright 2026 The progre Authors
// Offline pseudo-label pipeline: mini-batch k-means over MFCCs (iteration 1)
// or dumped middle-layer features (iteration 2).
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "progre/archive.hpp"
#include "progre/checkpoint.hpp"
#include "progre/manifest.hpp"
#include "progre/mfcc.hpp"
#include "progre/model.hpp"
#include "progre/pitch.hpp"
#include "progre/rng.hpp"

namespace progre {

struct Codebook {
    Tensor centers;        // U x F
    double inertia = 0.0;  // summed squared distance over the fit data
};

// Per-utterance feature matrices with a uniform dimension. Backed on disk by
// a named-array archive plus a JSON index {utterance_id: {array,
// frame_count}}; entries are keyed, so the stored bytes are independent of
// insertion order.
class FeatureStore {
public:
    FeatureStore() = default;

    explicit FeatureStore(std::string source_tag) : source_(std::move(source_tag)) {}

    void add(const std::string& utterance_id, Tensor features) {
        if (features.rank() != 2)
            throw std::invalid_argument("unit_discovery: features must be T x F");
        if (dim_ == 0) dim_ = features.cols();
        if (features.cols() != dim_)
            throw std::invalid_argument("unit_discovery: inconsistent feature dimension for " +
                                        utterance_id);
        if (!features_.emplace(utterance_id, std::move(features)).second)
            throw std::invalid_argument("unit_discovery: duplicate utterance " + utterance_id);
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return features_.size(); }
    const std::string& source() const { return source_; }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : features_) out.push_back(k);
        return out;
    }

    const Tensor& at(const std::string& id) const {
        auto it = features_.find(id);
        if (it == features_.end())
            throw std::out_of_range("unit_discovery: no features for " + id);
        return it->second;
    }

    std::size_t total_frames() const {
        std::size_t n = 0;
        for (const auto& [k, v] : features_) n += v.rows();
        return n;
    }

    // All frames concatenated in sorted-utterance order.
    Tensor stacked() const {
        Tensor out({total_frames(), dim_});
        std::size_t row = 0;
        for (const auto& [k, v] : features_) {
            for (std::size_t t = 0; t < v.rows(); ++t)
                for (std::size_t j = 0; j < dim_; ++j) out.at(row + t, j) = v.at(t, j);
            row += v.rows();
        }
        return out;
    }

    void save(const std::string& archive_path, const std::string& index_path) const {
        ArchiveWriter w;
        nlohmann::json index = nlohmann::json::object();
        for (const auto& [id, feats] : features_) {
            const std::string array = "features." + id;
            w.add_f64(array, feats);
            index[id] = {{"array", array}, {"frame_count", feats.rows()}};
        }
        w.set_meta({{"dim", dim_}, {"source", source_}, {"kind", "feature_store"}});
        w.write(archive_path);
        std::ofstream f(index_path, std::ios::trunc);
        if (!f) throw std::runtime_error("unit_discovery: cannot write index: " + index_path);
        f << index.dump(2) << "\n";
    }

    static FeatureStore load(const std::string& archive_path, const std::string& index_path) {
        std::ifstream f(index_path);
        if (!f) throw std::runtime_error("unit_discovery: cannot open index: " + index_path);
        nlohmann::json index = nlohmann::json::parse(f);
        Archive a = Archive::load(archive_path);
        FeatureStore store(a.meta().value("source", ""));
        for (const auto& [id, desc] : index.items())
            store.add(id, a.tensor(desc.at("array").get<std::string>()));
        return store;
    }

private:
    std::map<std::string, Tensor> features_;
    std::size_t dim_ = 0;
    std::string source_;
};

using PseudoLabelSequence = std::vector<int>;

namespace kmeans_detail {

inline double sq_dist(const Tensor& data, std::size_t row, const Tensor& centers,
                      std::size_t center) {
    const std::size_t F = data.cols();
    double acc = 0.0;
    for (std::size_t j = 0; j < F; ++j) {
        const double d = data.at(row, j) - centers.at(center, j);
        acc += d * d;
    }
    return acc;
}

// Nearest center; ties break to the lowest index (strict < keeps the first
// minimum found).
inline std::size_t nearest_center(const Tensor& data, std::size_t row, const Tensor& centers) {
    std::size_t best = 0;
    double best_d = sq_dist(data, row, centers, 0);
    for (std::size_t u = 1; u < centers.rows(); ++u) {
        const double d = sq_dist(data, row, centers, u);
        if (d < best_d) {
            best_d = d;
            best = u;
        }
    }
    return best;
}

inline double inertia_on(const Tensor& data, const std::vector<std::size_t>& rows,
                         const Tensor& centers) {
    double total = 0.0;
    for (std::size_t r : rows) {
        double best = sq_dist(data, r, centers, 0);
        for (std::size_t u = 1; u < centers.rows(); ++u)
            best = std::min(best, sq_dist(data, r, centers, u));
        total += best;
    }
    return total;
}

// k-means++ seeding: first center uniform, then proportional to squared
// distance from the nearest chosen center. Points coinciding with a chosen
// center carry zero weight, so duplicates are only possible when no distinct
// point remains.
inline Tensor kmeanspp_init(const Tensor& data, std::size_t U, Rng& rng) {
    const std::size_t N = data.rows(), F = data.cols();
    Tensor centers({U, F});
    std::vector<double> d2(N, 0.0);
    const std::size_t first = static_cast<std::size_t>(rng.uniform_below(N));
    for (std::size_t j = 0; j < F; ++j) centers.at(0, j) = data.at(first, j);
    for (std::size_t u = 1; u < U; ++u) {
        double total = 0.0;
        for (std::size_t r = 0; r < N; ++r) {
            double best = sq_dist(data, r, centers, 0);
            for (std::size_t c = 1; c < u; ++c) best = std::min(best, sq_dist(data, r, centers, c));
            d2[r] = best;
            total += best;
        }
        std::size_t pick;
        if (total <= 0.0) {
            throw std::runtime_error(
                "unit_discovery: fewer distinct frames than clusters (k-means++ exhausted)");
        }
        double x = rng.uniform() * total;
        pick = N - 1;
        for (std::size_t r = 0; r < N; ++r) {
            x -= d2[r];
            if (x <= 0.0) {
                pick = r;
                break;
            }
        }
        for (std::size_t j = 0; j < F; ++j) centers.at(u, j) = data.at(pick, j);
    }
    return centers;
}

}  // namespace kmeans_detail

struct KmeansOptions {
    std::size_t batch_frames = 10000;
    std::size_t restarts = 20;
    std::size_t max_epochs = 100;
    double tol = 1e-4;  // stop when no center moved more than this in a batch
};

// Mini-batch k-means with per-center 1/count learning rates, initialized by
// the best of `restarts` k-means++ seedings (scored by inertia on a held
// sample). Deterministic given the seed.
inline Codebook fit_minibatch_kmeans(const Tensor& data, std::size_t U,
                                     const KmeansOptions& opts, std::uint64_t seed) {
    const std::size_t N = data.rows();
    if (U == 0) throw std::invalid_argument("unit_discovery: cluster count must be positive");
    if (N < U)
        throw std::invalid_argument("unit_discovery: fewer frames (" + std::to_string(N) +
                                    ") than clusters (" + std::to_string(U) + ")");

    // Held sample for scoring the restarts.
    Rng held_rng(derive_seed(seed, "kmeans.held"));
    const std::size_t held_n = std::min<std::size_t>(N, std::max<std::size_t>(opts.batch_frames, 256));
    std::vector<std::size_t> held(held_n);
    for (std::size_t i = 0; i < held_n; ++i)
        held[i] = static_cast<std::size_t>(held_rng.uniform_below(N));

    Tensor best_centers;
    double best_score = HUGE_VAL;
    const std::size_t restarts = std::max<std::size_t>(1, opts.restarts);
    for (std::size_t r = 0; r < restarts; ++r) {
        Rng rng(derive_seed(seed, "kmeans.init", r));
        Tensor centers = kmeans_detail::kmeanspp_init(data, U, rng);
        const double score = kmeans_detail::inertia_on(data, held, centers);
        if (score < best_score) {
            best_score = score;
            best_centers = std::move(centers);
        }
    }

    // Mini-batch optimization with per-center running counts.
    Tensor centers = std::move(best_centers);
    std::vector<double> counts(U, 0.0);
    const std::size_t F = data.cols();
    const std::size_t batch = std::max<std::size_t>(1, std::min(opts.batch_frames, N));
    Rng order_rng(derive_seed(seed, "kmeans.order"));
    std::vector<std::size_t> perm(N);
    bool converged = false;
    for (std::size_t epoch = 0; epoch < opts.max_epochs && !converged; ++epoch) {
        for (std::size_t i = 0; i < N; ++i) perm[i] = i;
        order_rng.shuffle(perm);
        for (std::size_t start = 0; start < N && !converged; start += batch) {
            const std::size_t end = std::min(N, start + batch);
            // Assignments are computed against the batch-start centers, then
            // centers move; movement below tol ends the fit.
            std::vector<std::size_t> assign(end - start);
            for (std::size_t i = start; i < end; ++i)
                assign[i - start] = kmeans_detail::nearest_center(data, perm[i], centers);
            Tensor before = centers;
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t c = assign[i - start];
                counts[c] += 1.0;
                const double eta = 1.0 / counts[c];
                for (std::size_t j = 0; j < F; ++j)
                    centers.at(c, j) += eta * (data.at(perm[i], j) - centers.at(c, j));
            }
            double moved = 0.0;
            for (std::size_t u = 0; u < U; ++u) {
                double d2 = 0.0;
                for (std::size_t j = 0; j < F; ++j) {
                    const double d = centers.at(u, j) - before.at(u, j);
                    d2 += d * d;
                }
                moved = std::max(moved, std::sqrt(d2));
            }
            if (moved < opts.tol) converged = true;
        }
    }

    Codebook cb;
    cb.centers = std::move(centers);
    std::vector<std::size_t> all(N);
    for (std::size_t i = 0; i < N; ++i) all[i] = i;
    cb.inertia = kmeans_detail::inertia_on(data, all, cb.centers);
    return cb;
}

inline Codebook fit_minibatch_kmeans(const FeatureStore& store, std::size_t U,
                                     const KmeansOptions& opts, std::uint64_t seed) {
    return fit_minibatch_kmeans(store.stacked(), U, opts, seed);
}

// Nearest-center label per frame (exact, exhaustive).
inline PseudoLabelSequence assign_units(const Tensor& features, const Codebook& cb) {
    if (features.cols() != cb.centers.cols())
        throw std::invalid_argument("unit_discovery: feature/codebook dimension mismatch");
    PseudoLabelSequence labels(features.rows());
    for (std::size_t t = 0; t < features.rows(); ++t)
        labels[t] = static_cast<int>(kmeans_detail::nearest_center(features, t, cb.centers));
    return labels;
}

inline std::map<std::string, PseudoLabelSequence> assign_units(const FeatureStore& store,
                                                               const Codebook& cb) {
    std::map<std::string, PseudoLabelSequence> out;
    for (const std::string& id : store.ids()) out.emplace(id, assign_units(store.at(id), cb));
    return out;
}

// ---- label store ----

inline void save_labels(const std::map<std::string, PseudoLabelSequence>& labels,
                        std::size_t num_units, const std::string& source,
                        const std::string& archive_path, const std::string& index_path) {
    ArchiveWriter w;
    nlohmann::json index = nlohmann::json::object();
    for (const auto& [id, seq] : labels) {
        std::vector<std::int32_t> v(seq.begin(), seq.end());
        const std::string array = "labels." + id;
        w.add_i32(array, v);
        index[id] = {{"array", array}, {"frame_count", seq.size()}};
    }
    w.set_meta({{"num_units", num_units}, {"source", source}, {"kind", "label_store"}});
    w.write(archive_path);
    std::ofstream f(index_path, std::ios::trunc);
    if (!f) throw std::runtime_error("unit_discovery: cannot write label index: " + index_path);
    f << index.dump(2) << "\n";
}

struct LabelStore {
    std::map<std::string, PseudoLabelSequence> labels;
    std::size_t num_units = 0;
    std::string source;

    static LabelStore load(const std::string& archive_path, const std::string& index_path) {
        std::ifstream f(index_path);
        if (!f) throw std::runtime_error("unit_discovery: cannot open label index: " + index_path);
        nlohmann::json index = nlohmann::json::parse(f);
        Archive a = Archive::load(archive_path);
        LabelStore store;
        store.num_units = a.meta().at("num_units").get<std::size_t>();
        store.source = a.meta().value("source", "");
        for (const auto& [id, desc] : index.items()) {
            const auto v = a.ints(desc.at("array").get<std::string>());
            store.labels.emplace(id, PseudoLabelSequence(v.begin(), v.end()));
        }
        return store;
    }
};

// ---- feature dumping (iteration 2 input) ----

// Inference-mode layer_outputs[layer_index] for every utterance.
// layer_index is 1-based.
inline FeatureStore dump_layer_features(ProgreModel& model, const Manifest& manifest,
                                        std::size_t layer_index, const PitchParams& pitch_params) {
    if (layer_index < 1 || layer_index > model.config().num_layers)
        throw std::invalid_argument("unit_discovery: invalid layer index " +
                                    std::to_string(layer_index));
    FeatureStore store("layer_" + std::to_string(layer_index));
    for (const auto& e : manifest.entries) {
        const Waveform wave = load_waveform(e.audio_path);
        const NormalizedPitch pitch = log_normalize(estimate_f0(wave, pitch_params));
        EncoderOutputs out = model.forward(wave, pitch, nullptr);
        store.add(e.utterance_id, out.layer_outputs[layer_index - 1]);
    }
    return store;
}

// ---- iteration driver ----

struct IterationConfig {
    int iteration = 1;                 // 1: MFCC features, 2: layer features
    std::size_t num_clusters = 0;      // 0: 100 for iteration 1, 500 for iteration 2
    double subset_fraction = 0.1;      // utterance fraction used for fitting
    std::size_t layer_index = 0;       // 0: three-quarter depth
    KmeansOptions kmeans;
    PitchParams pitch;
    std::uint64_t seed = 0;
    std::string checkpoint_path;       // iteration 2 only
};

struct IterationReport {
    std::size_t num_clusters = 0;
    std::size_t fit_utterances = 0;
    std::size_t fit_frames = 0;
    std::size_t labeled_utterances = 0;
    double inertia = 0.0;
    std::string source;
};

// Runs one unit-discovery iteration over the manifest and writes the label
// store (labels.naa + labels.index.json) and codebook (codebook.naa) into
// out_dir.
inline IterationReport run_iteration(const IterationConfig& cfg, const Manifest& manifest,
                                     const std::string& out_dir) {
    if (manifest.entries.empty())
        throw std::invalid_argument("unit_discovery: empty manifest");
    std::filesystem::create_directories(out_dir);

    FeatureStore features;
    std::unique_ptr<ProgreModel> model;
    std::size_t layer_index = 0;
    if (cfg.iteration == 1) {
        features = FeatureStore("mfcc");
        for (const auto& e : manifest.entries) {
            const Waveform wave = load_waveform(e.audio_path);
            features.add(e.utterance_id, compute_mfcc(wave).values);
        }
    } else if (cfg.iteration == 2) {
        if (cfg.checkpoint_path.empty())
            throw std::invalid_argument("unit_discovery: iteration 2 needs a checkpoint");
        model = std::make_unique<ProgreModel>(load_model(cfg.checkpoint_path));
        layer_index = cfg.layer_index;
        if (layer_index == 0) {
            // Three-quarter depth: layer 9 of 12 (base), 18 of 24 (large).
            layer_index = std::max<std::size_t>(
                1, (model->config().num_layers * 3 + 2) / 4);
        }
        features = dump_layer_features(*model, manifest, layer_index, cfg.pitch);
    } else {
        throw std::invalid_argument("unit_discovery: iteration must be 1 or 2");
    }

    const std::size_t U = cfg.num_clusters != 0 ? cfg.num_clusters
                          : (cfg.iteration == 1 ? 100 : 500);

    // Seeded uniform utterance subset; all frames of selected utterances.
    std::vector<std::string> ids = features.ids();
    const std::size_t n_fit = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(cfg.subset_fraction * ids.size())));
    Rng subset_rng(derive_seed(cfg.seed, "units.subset"));
    subset_rng.shuffle(ids);
    ids.resize(std::min(n_fit, ids.size()));
    std::sort(ids.begin(), ids.end());

    std::size_t fit_frames = 0;
    for (const auto& id : ids) fit_frames += features.at(id).rows();
    Tensor fit_data({fit_frames, features.dim()});
    std::size_t row = 0;
    for (const auto& id : ids) {
        const Tensor& f = features.at(id);
        for (std::size_t t = 0; t < f.rows(); ++t)
            for (std::size_t j = 0; j < f.cols(); ++j) fit_data.at(row + t, j) = f.at(t, j);
        row += f.rows();
    }

    Codebook cb = fit_minibatch_kmeans(fit_data, U, cfg.kmeans,
                                       derive_seed(cfg.seed, "units.kmeans"));
    auto labels = assign_units(features, cb);

    const std::string source = features.source();
    save_labels(labels, U, source, out_dir + "/labels.naa", out_dir + "/labels.index.json");
    ArchiveWriter cbw;
    cbw.add_f64("centers", cb.centers);
    cbw.set_meta({{"num_units", U}, {"inertia", cb.inertia}, {"source", source},
                  {"kind", "codebook"}});
    cbw.write(out_dir + "/codebook.naa");

    IterationReport rep;
    rep.num_clusters = U;
    rep.fit_utterances = ids.size();
    rep.fit_frames = fit_frames;
    rep.labeled_utterances = labels.size();
    rep.inertia = cb.inertia;
    rep.source = source;
    return rep;
}

}  // namespace progre
