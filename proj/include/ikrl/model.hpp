#pragma once
// Model parameters, image projection, instance attention, aggregation and the
// four-term translational energy.

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "errors.hpp"
#include "kg.hpp"
#include "matrix.hpp"

namespace ikrl {

enum class Aggregation { Att, Avg, Max };

inline std::string to_string(Aggregation a) {
    switch (a) {
        case Aggregation::Att: return "att";
        case Aggregation::Avg: return "avg";
        case Aggregation::Max: return "max";
    }
    return "?";
}

inline std::string to_string(Norm n) { return n == Norm::L1 ? "l1" : "l2"; }

struct ModelParams {
    Matrix entities;    // |E| x d_s, structure-based representations
    Matrix relations;   // |R| x d_s
    Matrix projection;  // d_s x d_i, maps image features into entity space

    ModelParams() = default;
    ModelParams(std::size_t num_entities, std::size_t num_relations, std::size_t dim,
                std::size_t image_dim)
        : entities(num_entities, dim), relations(num_relations, dim), projection(dim, image_dim) {}

    std::size_t dim() const noexcept { return entities.cols(); }
    std::size_t image_dim() const noexcept { return projection.cols(); }
    std::size_t num_entities() const noexcept { return entities.rows(); }
    std::size_t num_relations() const noexcept { return relations.rows(); }

    bool finite() const {
        return all_finite(entities.flat()) && all_finite(relations.flat()) &&
               all_finite(projection.flat());
    }

    bool operator==(const ModelParams&) const = default;
};

// Fixed image feature vectors per entity; row i of images(e) is f(img_i).
class FeatureStore {
public:
    FeatureStore() = default;
    FeatureStore(std::size_t num_entities, std::size_t image_dim)
        : image_dim_(image_dim), images_(num_entities) {}

    std::size_t image_dim() const noexcept { return image_dim_; }
    std::size_t num_entities() const noexcept { return images_.size(); }

    bool has(std::size_t entity) const {
        return entity < images_.size() && !images_[entity].empty();
    }

    std::size_t count(std::size_t entity) const {
        return entity < images_.size() ? images_[entity].size() : 0;
    }

    const std::vector<Vec>& images(std::size_t entity) const {
        if (!has(entity)) throw MissingFeatures(entity);
        return images_[entity];
    }

    void add_image(std::size_t entity, Vec feature) {
        if (feature.size() != image_dim_)
            throw std::invalid_argument("feature has dimension " + std::to_string(feature.size()) +
                                        ", store expects " + std::to_string(image_dim_));
        if (entity >= images_.size()) images_.resize(entity + 1);
        images_[entity].push_back(std::move(feature));
    }

    void set_images(std::size_t entity, std::vector<Vec> features) {
        if (entity >= images_.size()) images_.resize(entity + 1);
        images_[entity].clear();
        for (auto& f : features) add_image(entity, std::move(f));
    }

    void resize(std::size_t num_entities) { images_.resize(num_entities); }

    // Checks the store covers every entity in [0, num_entities) with 1..max_images vectors.
    void validate(std::size_t num_entities, std::size_t max_images) const {
        for (std::size_t e = 0; e < num_entities; ++e) {
            if (!has(e)) throw MissingFeatures(e);
            if (count(e) > max_images)
                throw std::invalid_argument("entity " + std::to_string(e) + " has " +
                                            std::to_string(count(e)) + " images, limit is " +
                                            std::to_string(max_images));
        }
    }

    bool operator==(const FeatureStore&) const = default;

private:
    std::size_t image_dim_ = 0;
    std::vector<std::vector<Vec>> images_;
};

// p = M f
inline Vec project(const Matrix& projection, std::span<const double> feature) {
    return matvec(projection, feature);
}

// Softmax over p_i . e_S with max-subtraction.
inline Vec attention(const std::vector<Vec>& projected, std::span<const double> entity) {
    if (projected.empty()) throw std::invalid_argument("attention: no image vectors");
    Vec w(projected.size());
    for (std::size_t i = 0; i < projected.size(); ++i) w[i] = dot(projected[i], entity);
    const double top = *std::max_element(w.begin(), w.end());
    double z = 0.0;
    for (double& x : w) z += (x = std::exp(x - top));
    for (double& x : w) x /= z;
    return w;
}

inline std::size_t argmax_lowest(std::span<const double> w) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < w.size(); ++i)
        if (w[i] > w[best]) best = i;
    return best;
}

// Aggregated image-based representation plus the intermediates needed for backprop.
struct IbrTrace {
    std::vector<Vec> projected;
    Vec weights;  // attention weights (also computed for AVG/MAX, used by MAX for selection)
    std::size_t selected = 0;  // MAX only
    Vec value;
};

inline IbrTrace aggregate_trace(std::vector<Vec> projected, std::span<const double> entity,
                                Aggregation mode) {
    IbrTrace tr;
    tr.weights = attention(projected, entity);
    tr.projected = std::move(projected);
    const std::size_t n = tr.projected.size();
    const std::size_t d = tr.projected.front().size();
    tr.value.assign(d, 0.0);
    switch (mode) {
        case Aggregation::Att:
            for (std::size_t i = 0; i < n; ++i) axpy(tr.weights[i], tr.projected[i], tr.value);
            break;
        case Aggregation::Avg:
            for (std::size_t i = 0; i < n; ++i) axpy(1.0, tr.projected[i], tr.value);
            for (double& x : tr.value) x /= static_cast<double>(n);
            break;
        case Aggregation::Max:
            tr.selected = argmax_lowest(tr.weights);
            tr.value = tr.projected[tr.selected];
            break;
    }
    return tr;
}

inline Vec aggregate(const std::vector<Vec>& projected, std::span<const double> entity,
                     Aggregation mode) {
    return aggregate_trace(projected, entity, mode).value;
}

inline IbrTrace entity_ibr_trace(std::size_t entity, const ModelParams& params,
                                 const FeatureStore& store, Aggregation mode) {
    const auto& feats = store.images(entity);
    std::vector<Vec> projected;
    projected.reserve(feats.size());
    for (const auto& f : feats) projected.push_back(project(params.projection, f));
    return aggregate_trace(std::move(projected), params.entities.row(entity), mode);
}

inline Vec entity_ibr(std::size_t entity, const ModelParams& params, const FeatureStore& store,
                      Aggregation mode) {
    return entity_ibr_trace(entity, params, store, mode).value;
}

// IBR for every entity, one row each.
inline Matrix all_entity_ibr(const ModelParams& params, const FeatureStore& store,
                             Aggregation mode) {
    Matrix out(params.num_entities(), params.dim());
    for (std::size_t e = 0; e < params.num_entities(); ++e) {
        const Vec v = entity_ibr(e, params, store, mode);
        std::copy(v.begin(), v.end(), out.row(e).begin());
    }
    return out;
}

struct EnergyTerms {
    double total = 0.0;
    double ss = 0.0;
    double si = 0.0;
    double is = 0.0;
    double ii = 0.0;
};

inline EnergyTerms energy_from(std::span<const double> hs, std::span<const double> hi,
                               std::span<const double> r, std::span<const double> ts,
                               std::span<const double> ti, Norm kind) {
    EnergyTerms e;
    e.ss = norm(translation_residual(hs, r, ts), kind);
    e.si = norm(translation_residual(hs, r, ti), kind);
    e.is = norm(translation_residual(hi, r, ts), kind);
    e.ii = norm(translation_residual(hi, r, ti), kind);
    e.total = e.ss + e.si + e.is + e.ii;
    return e;
}

inline EnergyTerms energy(const Triple& x, const ModelParams& params, const FeatureStore& store,
                          Aggregation mode, Norm kind) {
    const Vec hi = entity_ibr(x.h, params, store, mode);
    const Vec ti = entity_ibr(x.t, params, store, mode);
    return energy_from(params.entities.row(x.h), hi, params.relations.row(x.r),
                       params.entities.row(x.t), ti, kind);
}

inline double transe_energy(const Triple& x, const ModelParams& params, Norm kind) {
    return norm(translation_residual(params.entities.row(x.h), params.relations.row(x.r),
                                     params.entities.row(x.t)),
                kind);
}

}  // namespace ikrl
