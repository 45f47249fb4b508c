#pragma once
// Margin ranking objective, analytic gradients and the mini-batch SGD loop.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "config.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "kg.hpp"
#include "matrix.hpp"
#include "model.hpp"
#include "parallel.hpp"

namespace ikrl {

inline double triple_energy(const Triple& x, const ModelParams& params, const FeatureStore& store,
                            const TrainConfig& cfg) {
    if (cfg.model == EnergyModel::TransE) return transe_energy(x, params, cfg.norm);
    return energy(x, params, store, cfg.aggregation, cfg.norm).total;
}

// max(margin + E(pos) - E(neg), 0)
inline double pair_loss(const Triple& pos, const Triple& neg, const ModelParams& params,
                        const FeatureStore& store, const TrainConfig& cfg) {
    return std::max(cfg.margin + triple_energy(pos, params, store, cfg) -
                        triple_energy(neg, params, store, cfg),
                    0.0);
}

// Sparse gradient of one pair loss. The projection gradient is kept as a sum of rank-1
// terms u (x) f, which avoids materialising d_s x d_i per pair.
struct Gradients {
    struct Row {
        std::uint32_t index;
        Vec grad;
    };
    struct RankOne {
        Vec left;                       // length d_s
        std::span<const double> right;  // image feature, length d_i
    };

    double loss = 0.0;
    std::vector<Row> entity_rows;
    std::vector<Row> relation_rows;
    std::vector<RankOne> projection_terms;

    bool empty() const noexcept {
        return entity_rows.empty() && relation_rows.empty() && projection_terms.empty();
    }

    Matrix dense_projection(std::size_t dim, std::size_t image_dim) const {
        Matrix m(dim, image_dim);
        for (const auto& term : projection_terms)
            for (std::size_t r = 0; r < dim; ++r) axpy(term.left[r], term.right, m.row(r));
        return m;
    }

    Vec entity(std::uint32_t index, std::size_t dim) const { return find(entity_rows, index, dim); }
    Vec relation(std::uint32_t index, std::size_t dim) const { return find(relation_rows, index, dim); }

private:
    static Vec find(const std::vector<Row>& rows, std::uint32_t index, std::size_t dim) {
        for (const auto& row : rows)
            if (row.index == index) return row.grad;
        return Vec(dim, 0.0);
    }
};

namespace detail {

inline void accumulate(std::vector<Gradients::Row>& rows, std::uint32_t index, double scale,
                       std::span<const double> g) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& r) { return r.index == index; });
    if (it == rows.end()) {
        rows.push_back({index, Vec(g.size(), 0.0)});
        it = std::prev(rows.end());
    }
    axpy(scale, g, it->grad);
}

// Pushes dLoss/d e_I back into the projection matrix and, through the attention
// logits, into the entity's structure-based row.
inline void backprop_ibr(const IbrTrace& tr, std::span<const double> upstream, std::uint32_t entity,
                         const ModelParams& params, const FeatureStore& store, const TrainConfig& cfg,
                         Gradients& out) {
    const auto& feats = store.images(entity);
    const std::size_t n = tr.projected.size();
    const std::size_t d = upstream.size();
    switch (cfg.aggregation) {
        case Aggregation::Avg: {
            Vec u(upstream.begin(), upstream.end());
            for (double& x : u) x /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) out.projection_terms.push_back({u, feats[i]});
            break;
        }
        case Aggregation::Max:
            // The argmax is piecewise constant, so no gradient reaches the logits.
            out.projection_terms.push_back({Vec(upstream.begin(), upstream.end()), feats[tr.selected]});
            break;
        case Aggregation::Att: {
            const auto es = params.entities.row(entity);
            const double g_dot_ei = dot(upstream, tr.value);
            Vec d_es(d, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double w = tr.weights[i];
                const double dlogit = w * (dot(upstream, tr.projected[i]) - g_dot_ei);
                Vec u(d);
                for (std::size_t k = 0; k < d; ++k) u[k] = w * upstream[k] + dlogit * es[k];
                out.projection_terms.push_back({std::move(u), feats[i]});
                axpy(dlogit, tr.projected[i], d_es);
            }
            if (!cfg.attention_detached) accumulate(out.entity_rows, entity, 1.0, d_es);
            break;
        }
    }
}

// Adds scale * dE(x)/dtheta to out.
inline void energy_gradient(const Triple& x, double scale, const ModelParams& params,
                            const FeatureStore& store, const TrainConfig& cfg, Gradients& out) {
    const auto hs = params.entities.row(x.h);
    const auto ts = params.entities.row(x.t);
    const auto r = params.relations.row(x.r);
    const Vec g_ss = norm_gradient(translation_residual(hs, r, ts), cfg.norm);
    if (cfg.model == EnergyModel::TransE) {
        accumulate(out.entity_rows, x.h, scale, g_ss);
        accumulate(out.relation_rows, x.r, scale, g_ss);
        accumulate(out.entity_rows, x.t, -scale, g_ss);
        return;
    }
    const IbrTrace hi = entity_ibr_trace(x.h, params, store, cfg.aggregation);
    const IbrTrace ti = entity_ibr_trace(x.t, params, store, cfg.aggregation);
    const Vec g_si = norm_gradient(translation_residual(hs, r, ti.value), cfg.norm);
    const Vec g_is = norm_gradient(translation_residual(hi.value, r, ts), cfg.norm);
    const Vec g_ii = norm_gradient(translation_residual(hi.value, r, ti.value), cfg.norm);

    const std::size_t d = hs.size();
    Vec d_hs(d), d_ts(d), d_r(d), d_hi(d), d_ti(d);
    for (std::size_t k = 0; k < d; ++k) {
        d_hs[k] = scale * (g_ss[k] + g_si[k]);
        d_ts[k] = -scale * (g_ss[k] + g_is[k]);
        d_r[k] = scale * (g_ss[k] + g_si[k] + g_is[k] + g_ii[k]);
        d_hi[k] = scale * (g_is[k] + g_ii[k]);
        d_ti[k] = -scale * (g_si[k] + g_ii[k]);
    }
    accumulate(out.entity_rows, x.h, 1.0, d_hs);
    accumulate(out.entity_rows, x.t, 1.0, d_ts);
    accumulate(out.relation_rows, x.r, 1.0, d_r);
    backprop_ibr(hi, d_hi, x.h, params, store, cfg, out);
    backprop_ibr(ti, d_ti, x.t, params, store, cfg, out);
}

}  // namespace detail

// Gradient of pair_loss; empty (all zero) when the margin is satisfied.
inline Gradients gradients(const Triple& pos, const Triple& neg, const ModelParams& params,
                           const FeatureStore& store, const TrainConfig& cfg) {
    Gradients g;
    g.loss = pair_loss(pos, neg, params, store, cfg);
    if (g.loss <= 0.0) return g;
    detail::energy_gradient(pos, 1.0, params, store, cfg, g);
    detail::energy_gradient(neg, -1.0, params, store, cfg, g);
    return g;
}

// Learning rate for epoch k (0-based) of K, declining linearly from lr_start to lr_end.
inline double learning_rate(const TrainConfig& cfg, std::size_t epoch) {
    if (cfg.epochs <= 1) return cfg.lr_start;
    return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * static_cast<double>(epoch) /
                              static_cast<double>(cfg.epochs - 1);
}

inline void apply_gradients(ModelParams& params, const Gradients& g, double lr) {
    for (const auto& row : g.entity_rows) axpy(-lr, row.grad, params.entities.row(row.index));
    for (const auto& row : g.relation_rows) axpy(-lr, row.grad, params.relations.row(row.index));
    for (const auto& term : g.projection_terms)
        for (std::size_t r = 0; r < params.dim(); ++r)
            axpy(-lr * term.left[r], term.right, params.projection.row(r));
}

inline void renormalize(ModelParams& params) {
    for (std::size_t e = 0; e < params.num_entities(); ++e) clamp_unit_norm(params.entities.row(e));
    for (std::size_t r = 0; r < params.num_relations(); ++r) clamp_unit_norm(params.relations.row(r));
}

// Uniform in +-6/sqrt(d_s) for E and R; M uses the same bound divided by sqrt(d_i).
// TransE leaves M at zero.
inline ModelParams initialize(std::size_t num_entities, std::size_t num_relations,
                              const TrainConfig& cfg, Rng& rng) {
    ModelParams p(num_entities, num_relations, cfg.dim, cfg.image_dim);
    const double bound = 6.0 / std::sqrt(static_cast<double>(cfg.dim));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& x : p.entities.flat()) x = u(rng);
    for (double& x : p.relations.flat()) x = u(rng);
    if (cfg.model == EnergyModel::Ikrl) {
        const double mbound = bound / std::sqrt(static_cast<double>(cfg.image_dim));
        std::uniform_real_distribution<double> um(-mbound, mbound);
        for (double& x : p.projection.flat()) x = um(rng);
    }
    return p;
}

struct EpochStats {
    std::size_t epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    std::string checkpoint;  // set by callers that persist the result
};

// Runs SGD from the given starting point. Each batch's pair gradients are computed
// against the same parameters (in parallel when cfg.threads != 1) and applied in pair order.
inline TrainReport train_from(ModelParams& params, const Dataset& data, const FeatureStore& store,
                              const TrainConfig& cfg, Rng& rng, std::ostream* log = nullptr) {
    TrainReport report;
    if (cfg.epochs == 0) return report;
    BatchSampler sampler(data.train, data.all_true, data.num_entities(), data.num_relations());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        const double lr = learning_rate(cfg, epoch);
        double loss_sum = 0.0;
        std::size_t pairs = 0;
        do {
            const auto batch = sampler.next(cfg.batch_size, rng);
            std::vector<Gradients> grads(batch.size());
            parallel_for(batch.size(), cfg.threads, [&](std::size_t i) {
                grads[i] = gradients(batch[i].pos, batch[i].neg, params, store, cfg);
            });
            for (const auto& g : grads) {
                if (!std::isfinite(g.loss))
                    throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
                loss_sum += g.loss;
                apply_gradients(params, g, lr);
            }
            pairs += batch.size();
            renormalize(params);
        } while (!sampler.epoch_done());
        EpochStats st;
        st.epoch = epoch;
        st.lr = lr;
        st.mean_loss = loss_sum / static_cast<double>(pairs);
        st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        report.epochs.push_back(st);
        if (log) *log << "epoch=" << epoch << " lr=" << lr << " mean_loss=" << st.mean_loss << '\n';
    }
    if (!params.finite()) throw NumericError("non-finite parameters after training");
    return report;
}

inline std::pair<ModelParams, TrainReport> train(const Dataset& data, const FeatureStore& store,
                                                 const TrainConfig& cfg, std::ostream* log = nullptr) {
    cfg.validate();
    if (data.train.empty()) throw std::invalid_argument("train: empty training split");
    if (cfg.model == EnergyModel::Ikrl) {
        store.validate(data.num_entities(), cfg.max_images);
        if (store.image_dim() != cfg.image_dim)
            throw ConfigError("feature dimension " + std::to_string(store.image_dim()) +
                              " does not match image_dim " + std::to_string(cfg.image_dim));
    }
    Rng rng(cfg.seed);
    ModelParams params = initialize(data.num_entities(), data.num_relations(), cfg, rng);
    if (cfg.init == InitMode::Pretrained) {
        // Structure side warm-starts from the checkpoint; M keeps its random initialisation.
        const ModelParams warm = load_checkpoint(cfg.pretrained_checkpoint, data.num_entities(),
                                                 data.num_relations(), cfg.dim);
        params.entities = warm.entities;
        params.relations = warm.relations;
    }
    TrainReport report = train_from(params, data, store, cfg, rng, log);
    return {std::move(params), std::move(report)};
}

inline std::pair<ModelParams, TrainReport> train_transe(const Dataset& data, TrainConfig cfg,
                                                        std::ostream* log = nullptr) {
    cfg.model = EnergyModel::TransE;
    return train(data, FeatureStore{}, cfg, log);
}

}  // namespace ikrl
