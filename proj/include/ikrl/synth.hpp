#pragma once
// Synthetic knowledge graph with planted translational structure. True entity vectors
// live on the unit sphere, relations are short translations, and each triple's tail is
// the entity nearest to head + relation. Informative image features are a fixed
// orthonormal embedding of the true entity vector plus Gaussian noise; noise images are
// pure Gaussian vectors of matching expected norm.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "evaluation.hpp"
#include "io.hpp"
#include "kg.hpp"
#include "matrix.hpp"
#include "model.hpp"

namespace ikrl {

struct SynthConfig {
    std::size_t n_entities = 50;
    std::size_t n_relations = 5;
    std::size_t dim = 16;        // d_s
    std::size_t image_dim = 64;  // d_i
    std::size_t triples_per_relation = 40;
    std::size_t images_per_entity = 4;
    std::size_t noise_images_per_entity = 1;
    double feature_noise_sigma = 0.05;
    double relation_norm = 0.5;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_entities < 1 || n_relations < 1 || dim < 1 || image_dim < 1 || triples_per_relation < 1 ||
            images_per_entity < 1)
            throw std::invalid_argument("synth: counts and dimensions must be >= 1");
        if (image_dim < dim) throw std::invalid_argument("synth: image_dim must be >= dim");
        if (!(feature_noise_sigma >= 0.0)) throw std::invalid_argument("synth: sigma must be >= 0");
    }
};

struct SynthTruth {
    Matrix entities;   // n_entities x dim, unit rows
    Matrix relations;  // n_relations x dim
    Matrix embedding;  // image_dim x dim, orthonormal columns
    std::vector<std::vector<std::size_t>> noise_images;  // per entity, positions of noise images
};

struct SynthData {
    Dataset dataset;
    FeatureStore features;
    SynthTruth truth;
};

namespace detail {

inline void gaussian_fill(std::span<double> v, Rng& rng, double sigma = 1.0) {
    std::normal_distribution<double> n(0.0, sigma);
    for (double& x : v) x = n(rng);
}

// Gram-Schmidt over columns.
inline void orthonormalize_columns(Matrix& a) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double d = 0.0;
            for (std::size_t i = 0; i < a.rows(); ++i) d += a(i, j) * a(i, k);
            for (std::size_t i = 0; i < a.rows(); ++i) a(i, j) -= d * a(i, k);
        }
        double n = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) n += a(i, j) * a(i, j);
        n = std::sqrt(n);
        for (std::size_t i = 0; i < a.rows(); ++i) a(i, j) /= n;
    }
}

}  // namespace detail

// Entity t != h minimising ||e_h + r - e_t||_2, lowest index on ties.
inline std::size_t planted_tail(const SynthTruth& truth, std::size_t h, std::size_t r) {
    const Vec target = translation_residual(truth.entities.row(h), truth.relations.row(r), Vec(truth.entities.cols(), 0.0));
    std::size_t best = h;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < truth.entities.rows(); ++t) {
        if (t == h) continue;
        double d = 0.0;
        const auto e = truth.entities.row(t);
        for (std::size_t k = 0; k < e.size(); ++k) d += (target[k] - e[k]) * (target[k] - e[k]);
        if (d < best_d) {
            best_d = d;
            best = t;
        }
    }
    return best;
}

inline SynthData generate(const SynthConfig& cfg) {
    cfg.validate();
    if (cfg.n_entities < 2 || cfg.triples_per_relation > cfg.n_entities)
        throw GenerationShortfall("synth: each relation has at most one triple per head entity (" +
                                  std::to_string(cfg.n_entities < 2 ? 0 : cfg.n_entities) +
                                  " distinct), requested " + std::to_string(cfg.triples_per_relation));
    Rng rng(cfg.seed);
    SynthData out;
    SynthTruth& truth = out.truth;

    truth.entities = Matrix(cfg.n_entities, cfg.dim);
    for (std::size_t e = 0; e < cfg.n_entities; ++e) {
        auto row = truth.entities.row(e);
        do detail::gaussian_fill(row, rng);
        while (l2(row) == 0.0);
        const double n = l2(row);
        for (double& x : row) x /= n;
    }
    truth.relations = Matrix(cfg.n_relations, cfg.dim);
    for (std::size_t r = 0; r < cfg.n_relations; ++r) {
        auto row = truth.relations.row(r);
        do detail::gaussian_fill(row, rng);
        while (l2(row) == 0.0);
        const double n = l2(row);
        for (double& x : row) x *= cfg.relation_norm / n;
    }
    truth.embedding = Matrix(cfg.image_dim, cfg.dim);
    detail::gaussian_fill(truth.embedding.flat(), rng);
    detail::orthonormalize_columns(truth.embedding);

    Dataset& ds = out.dataset;
    for (std::size_t e = 0; e < cfg.n_entities; ++e) ds.vocab.entities.intern("e" + std::to_string(e));
    for (std::size_t r = 0; r < cfg.n_relations; ++r) ds.vocab.relations.intern("r" + std::to_string(r));

    std::vector<Triple> triples;
    std::vector<std::uint32_t> heads(cfg.n_entities);
    std::iota(heads.begin(), heads.end(), 0u);
    for (std::size_t r = 0; r < cfg.n_relations; ++r) {
        std::shuffle(heads.begin(), heads.end(), rng);
        for (std::size_t k = 0; k < cfg.triples_per_relation; ++k)
            triples.push_back({heads[k], static_cast<std::uint32_t>(r),
                               static_cast<std::uint32_t>(planted_tail(truth, heads[k], r))});
    }
    std::shuffle(triples.begin(), triples.end(), rng);

    const auto tenth = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(triples.size())));
    std::vector<char> seen(cfg.n_entities, 0);
    ds.train.assign(triples.begin() + static_cast<std::ptrdiff_t>(2 * tenth), triples.end());
    for (const auto& x : ds.train) seen[x.h] = seen[x.t] = 1;
    // Held-out triples touching entities unseen in training move to the training split.
    for (std::size_t i = 0; i < 2 * tenth; ++i) {
        const Triple& x = triples[i];
        if (!seen[x.h] || !seen[x.t]) {
            ds.train.push_back(x);
            seen[x.h] = seen[x.t] = 1;
        } else {
            (i < tenth ? ds.valid : ds.test).push_back(x);
        }
    }
    ds.rebuild_all_true();

    out.features = FeatureStore(cfg.n_entities, cfg.image_dim);
    const double noise_scale =
        std::sqrt((1.0 + static_cast<double>(cfg.image_dim) * cfg.feature_noise_sigma * cfg.feature_noise_sigma) /
                  static_cast<double>(cfg.image_dim));
    truth.noise_images.assign(cfg.n_entities, {});
    const std::size_t total = cfg.images_per_entity + cfg.noise_images_per_entity;
    for (std::size_t e = 0; e < cfg.n_entities; ++e) {
        std::vector<char> is_noise(total, 0);
        std::fill(is_noise.begin(), is_noise.begin() + static_cast<std::ptrdiff_t>(cfg.noise_images_per_entity), 1);
        std::shuffle(is_noise.begin(), is_noise.end(), rng);
        const Vec clean = matvec(truth.embedding, truth.entities.row(e));
        for (std::size_t i = 0; i < total; ++i) {
            Vec f(cfg.image_dim);
            if (is_noise[i]) {
                detail::gaussian_fill(f, rng, noise_scale);
                truth.noise_images[e].push_back(i);
            } else {
                f = clean;
                if (cfg.feature_noise_sigma > 0.0) {
                    Vec eps(cfg.image_dim);
                    detail::gaussian_fill(eps, rng, cfg.feature_noise_sigma);
                    axpy(1.0, eps, f);
                }
            }
            out.features.add_image(e, std::move(f));
        }
    }
    return out;
}

// Re-derives each triple's tail from the stored ground truth.
inline bool satisfies_construction(const SynthData& data) {
    for (const auto* split : {&data.dataset.train, &data.dataset.valid, &data.dataset.test})
        for (const auto& x : *split)
            if (planted_tail(data.truth, x.h, x.r) != x.t) return false;
    return true;
}

// Text sidecar: "entity <i> v..", "relation <j> v..", "noise <i> k.." lines.
inline std::string format_truth(const SynthTruth& truth) {
    std::ostringstream out;
    auto vec = [&](const char* tag, std::size_t i, std::span<const double> v) {
        out << tag << ' ' << i;
        char buf[32];
        for (double x : v) {
            std::snprintf(buf, sizeof buf, " %.17g", x);
            out << buf;
        }
        out << '\n';
    };
    for (std::size_t e = 0; e < truth.entities.rows(); ++e) vec("entity", e, truth.entities.row(e));
    for (std::size_t r = 0; r < truth.relations.rows(); ++r) vec("relation", r, truth.relations.row(r));
    for (std::size_t e = 0; e < truth.noise_images.size(); ++e) {
        if (truth.noise_images[e].empty()) continue;
        out << "noise " << e;
        for (auto i : truth.noise_images[e]) out << ' ' << i;
        out << '\n';
    }
    return out.str();
}

// Writes entities.txt, relations.txt, {train,valid,test}.txt, {valid,test}_neg.txt,
// features.bin and ground_truth.txt into dir.
inline void write_synthetic(const std::string& dir, const SynthData& data, std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const auto& ds = data.dataset;
    auto text = [&](const std::string& name, const std::string& body) { write_file_atomic((fs::path(dir) / name).string(), body); };
    auto names = [](const NameIndex& idx) {
        std::string s;
        for (const auto& n : idx.names()) s += n + '\n';
        return s;
    };
    auto triples = [&](const std::vector<Triple>& v) {
        std::ostringstream o;
        write_triples(o, v, ds.vocab);
        return o.str();
    };
    text("entities.txt", names(ds.vocab.entities));
    text("relations.txt", names(ds.vocab.relations));
    text("train.txt", triples(ds.train));
    text("valid.txt", triples(ds.valid));
    text("test.txt", triples(ds.test));
    Rng neg_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    text("valid_neg.txt", triples(classification_negatives(ds.valid, ds.num_entities(), ds.all_true, neg_rng)));
    text("test_neg.txt", triples(classification_negatives(ds.test, ds.num_entities(), ds.all_true, neg_rng)));
    write_features((fs::path(dir) / "features.bin").string(), data.features);
    text("ground_truth.txt", format_truth(data.truth));
}

}  // namespace ikrl
