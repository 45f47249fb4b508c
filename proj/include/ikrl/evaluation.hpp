#pragma once
// Entity prediction (raw/filter), triple classification with per-relation thresholds,
// attention inspection and the relation regularity probe.

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "kg.hpp"
#include "matrix.hpp"
#include "model.hpp"
#include "parallel.hpp"

namespace ikrl {

struct ScoringMode {
    enum Kind { Sbr, Ibr, Union };
    Kind kind = Ibr;
    double alpha = 0.5;  // Union only: weight on the structure-based dissimilarity

    static ScoringMode sbr() { return {Sbr, 1.0}; }
    static ScoringMode ibr() { return {Ibr, 0.0}; }
    static ScoringMode union_of(double alpha) {
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("union alpha must be in [0,1]");
        return {Union, alpha};
    }

    bool needs_images() const { return kind != Sbr; }

    std::string name() const {
        switch (kind) {
            case Sbr: return "sbr";
            case Ibr: return "ibr";
            case Union: return "union";
        }
        return "?";
    }
};

// Frozen entity tables for fast repeated scoring.
class Scorer {
public:
    Scorer(const ModelParams& params, const FeatureStore& store, ScoringMode mode,
           Aggregation aggregation, Norm norm)
        : params_(&params), mode_(mode), norm_(norm) {
        if (mode.needs_images()) ibr_ = all_entity_ibr(params, store, aggregation);
    }

    double operator()(std::uint32_t h, std::uint32_t r, std::uint32_t t) const {
        const auto rel = params_->relations.row(r);
        switch (mode_.kind) {
            case ScoringMode::Sbr: return sbr(h, r, t);
            case ScoringMode::Ibr: return norm(translation_residual(ibr_.row(h), rel, ibr_.row(t)), norm_);
            case ScoringMode::Union:
                return mode_.alpha * sbr(h, r, t) +
                       (1.0 - mode_.alpha) * norm(translation_residual(ibr_.row(h), rel, ibr_.row(t)), norm_);
        }
        return 0.0;
    }

    double operator()(const Triple& x) const { return (*this)(x.h, x.r, x.t); }

    std::size_t num_entities() const { return params_->num_entities(); }

private:
    double sbr(std::uint32_t h, std::uint32_t r, std::uint32_t t) const {
        return norm(translation_residual(params_->entities.row(h), params_->relations.row(r),
                                         params_->entities.row(t)),
                    norm_);
    }

    const ModelParams* params_;
    ScoringMode mode_;
    Norm norm_;
    Matrix ibr_;
};

inline double dissimilarity(const Triple& x, const ModelParams& params, const FeatureStore& store,
                            ScoringMode mode, Aggregation aggregation, Norm norm_kind) {
    const double s = norm(translation_residual(params.entities.row(x.h), params.relations.row(x.r),
                                               params.entities.row(x.t)),
                          norm_kind);
    if (mode.kind == ScoringMode::Sbr) return s;
    const Vec hi = entity_ibr(x.h, params, store, aggregation);
    const Vec ti = entity_ibr(x.t, params, store, aggregation);
    const double i = norm(translation_residual(hi, params.relations.row(x.r), ti), norm_kind);
    if (mode.kind == ScoringMode::Ibr) return i;
    return mode.alpha * s + (1.0 - mode.alpha) * i;
}

enum class PredictSlots { Head, Tail, Both };

struct RankMetrics {
    double mean_rank = 0.0;
    double hits_at_10 = 0.0;
};

struct LinkPredReport {
    std::string mode;
    RankMetrics raw;
    RankMetrics filter;
    // One entry per (test triple, slot): triple-major, head before tail.
    std::vector<std::size_t> raw_ranks;
    std::vector<std::size_t> filter_ranks;
};

namespace detail {

inline RankMetrics summarize(const std::vector<std::size_t>& ranks) {
    RankMetrics m;
    if (ranks.empty()) return m;
    double sum = 0.0;
    std::size_t hits = 0;
    for (auto r : ranks) {
        sum += static_cast<double>(r);
        hits += r <= 10;
    }
    m.mean_rank = sum / static_cast<double>(ranks.size());
    m.hits_at_10 = static_cast<double>(hits) / static_cast<double>(ranks.size());
    return m;
}

}  // namespace detail

// Rank of the true entity is 1 + number of candidates scoring strictly lower, so ties
// resolve in the true entity's favour. Filter skips candidates that form known-true triples.
inline LinkPredReport predict_entities(const std::vector<Triple>& test, const TripleSet& all_true,
                                       const Scorer& score, PredictSlots slots = PredictSlots::Both,
                                       std::size_t threads = 1) {
    if (test.empty()) throw std::invalid_argument("predict_entities: empty test split");
    const std::size_t per = slots == PredictSlots::Both ? 2 : 1;
    const auto n = static_cast<std::uint32_t>(score.num_entities());
    std::vector<std::size_t> raw(test.size() * per), filt(test.size() * per);

    parallel_for(test.size(), threads, [&](std::size_t i) {
        const Triple& x = test[i];
        std::size_t k = 0;
        for (Slot slot : {Slot::Head, Slot::Tail}) {
            if ((slot == Slot::Head && slots == PredictSlots::Tail) ||
                (slot == Slot::Tail && slots == PredictSlots::Head))
                continue;
            const std::uint32_t truth = slot == Slot::Head ? x.h : x.t;
            const double target = score(x);
            std::size_t below_raw = 0, below_filt = 0;
            for (std::uint32_t c = 0; c < n; ++c) {
                if (c == truth) continue;
                Triple y = x;
                (slot == Slot::Head ? y.h : y.t) = c;
                if (score(y) < target) {
                    ++below_raw;
                    if (!all_true.count(y)) ++below_filt;
                }
            }
            raw[i * per + k] = 1 + below_raw;
            filt[i * per + k] = 1 + below_filt;
            ++k;
        }
    });

    LinkPredReport rep;
    rep.raw = detail::summarize(raw);
    rep.filter = detail::summarize(filt);
    rep.raw_ranks = std::move(raw);
    rep.filter_ranks = std::move(filt);
    return rep;
}

inline LinkPredReport predict_entities(const Dataset& data, const ModelParams& params,
                                       const FeatureStore& store, ScoringMode mode,
                                       Aggregation aggregation, Norm norm_kind,
                                       PredictSlots slots = PredictSlots::Both, std::size_t threads = 1) {
    const Scorer score(params, store, mode, aggregation, norm_kind);
    auto rep = predict_entities(data.test, data.all_true, score, slots, threads);
    rep.mode = mode.name();
    return rep;
}

// Writes "metric.<mode>.<setting>.<name>=<value>" lines.
inline void write_metric_lines(std::ostream& out, const LinkPredReport& rep) {
    out << std::setprecision(10);
    for (const auto& [setting, m] : {std::pair{"raw", rep.raw}, std::pair{"filter", rep.filter}}) {
        out << "metric." << rep.mode << '.' << setting << ".mean_rank=" << m.mean_rank << '\n';
        out << "metric." << rep.mode << '.' << setting << ".hits_at_10=" << m.hits_at_10 << '\n';
    }
}

inline void write_table(std::ostream& out, const LinkPredReport& rep) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-8s %10s %10s %10s %10s\n", "mode", "MR raw", "MR filt", "H@10 raw",
                  "H@10 filt");
    out << buf;
    std::snprintf(buf, sizeof buf, "%-8s %10.2f %10.2f %9.1f%% %9.1f%%\n", rep.mode.c_str(), rep.raw.mean_rank,
                  rep.filter.mean_rank, 100.0 * rep.raw.hits_at_10, 100.0 * rep.filter.hits_at_10);
    out << buf;
}

// One negative per positive, replacing the head or the tail (never the relation).
inline std::vector<Triple> classification_negatives(const std::vector<Triple>& positives,
                                                    std::size_t num_entities, const TripleSet& all_true,
                                                    Rng& rng) {
    std::vector<Triple> out;
    out.reserve(positives.size());
    std::bernoulli_distribution head(0.5);
    for (const auto& x : positives) {
        const Slot first = head(rng) ? Slot::Head : Slot::Tail;
        try {
            out.push_back(corrupt(x, first, num_entities, 0, rng, all_true));
        } catch (const SamplingExhausted&) {
            out.push_back(corrupt(x, first == Slot::Head ? Slot::Tail : Slot::Head, num_entities, 0, rng,
                                  all_true));
        }
    }
    return out;
}

struct Threshold {
    double value = 0.0;
    double accuracy = 0.0;
};

// Triples scoring <= threshold are predicted positive.
inline double threshold_accuracy(const std::vector<double>& pos, const std::vector<double>& neg,
                                 double threshold) {
    std::size_t correct = 0;
    for (double s : pos) correct += s <= threshold;
    for (double s : neg) correct += s > threshold;
    return static_cast<double>(correct) / static_cast<double>(pos.size() + neg.size());
}

// Searches midpoints between consecutive distinct scores plus one sentinel below the
// minimum and one above the maximum. Ties go to the smallest threshold.
inline Threshold best_threshold(std::vector<double> pos, std::vector<double> neg) {
    if (pos.empty() && neg.empty()) throw std::invalid_argument("best_threshold: no scores");
    std::vector<double> all(pos);
    all.insert(all.end(), neg.begin(), neg.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());

    std::vector<double> candidates;
    candidates.reserve(all.size() + 1);
    candidates.push_back(all.front() - 1.0);
    for (std::size_t i = 0; i + 1 < all.size(); ++i) candidates.push_back(0.5 * (all[i] + all[i + 1]));
    candidates.push_back(all.back() + 1.0);

    // Candidates ascend, so the <= counts can be swept with two cursors.
    const double total = static_cast<double>(pos.size() + neg.size());
    std::size_t pi = 0, ni = 0;
    Threshold best{candidates.front(), -1.0};
    for (double c : candidates) {
        while (pi < pos.size() && pos[pi] <= c) ++pi;
        while (ni < neg.size() && neg[ni] <= c) ++ni;
        const double acc = static_cast<double>(pi + (neg.size() - ni)) / total;
        if (acc > best.accuracy) best = {c, acc};
    }
    return best;
}

struct ClassifyReport {
    std::vector<double> thresholds;     // per relation; global value where validation had none
    std::vector<bool> from_validation;  // false where the global fallback was used
    double global_threshold = 0.0;
    double valid_accuracy = 0.0;
    double test_accuracy = 0.0;
};

inline ClassifyReport classify_triples(const std::vector<Triple>& valid_pos, const std::vector<Triple>& valid_neg,
                                       const std::vector<Triple>& test_pos, const std::vector<Triple>& test_neg,
                                       const Scorer& score, std::size_t num_relations) {
    if (valid_pos.size() != valid_neg.size() || test_pos.size() != test_neg.size())
        throw std::invalid_argument("classify_triples: negative sets must match positive sets in size");
    if (valid_pos.empty() || test_pos.empty())
        throw std::invalid_argument("classify_triples: empty validation or test set");

    std::vector<std::vector<double>> vpos(num_relations), vneg(num_relations);
    std::vector<double> all_pos, all_neg;
    for (const auto& x : valid_pos) vpos.at(x.r).push_back(score(x));
    for (const auto& x : valid_neg) vneg.at(x.r).push_back(score(x));
    for (std::size_t r = 0; r < num_relations; ++r) {
        all_pos.insert(all_pos.end(), vpos[r].begin(), vpos[r].end());
        all_neg.insert(all_neg.end(), vneg[r].begin(), vneg[r].end());
    }

    ClassifyReport rep;
    rep.global_threshold = best_threshold(all_pos, all_neg).value;
    rep.thresholds.assign(num_relations, rep.global_threshold);
    rep.from_validation.assign(num_relations, false);
    for (std::size_t r = 0; r < num_relations; ++r) {
        if (vpos[r].empty() && vneg[r].empty()) continue;
        rep.thresholds[r] = best_threshold(vpos[r], vneg[r]).value;
        rep.from_validation[r] = true;
    }

    auto accuracy = [&](const std::vector<Triple>& pos, const std::vector<Triple>& neg) {
        std::size_t correct = 0;
        for (const auto& x : pos) correct += score(x) <= rep.thresholds.at(x.r);
        for (const auto& x : neg) correct += score(x) > rep.thresholds.at(x.r);
        return static_cast<double>(correct) / static_cast<double>(pos.size() + neg.size());
    };
    rep.valid_accuracy = accuracy(valid_pos, valid_neg);
    rep.test_accuracy = accuracy(test_pos, test_neg);
    return rep;
}

struct AttentionEntry {
    std::size_t image;
    double weight;
};

// Attention weights of an entity's images, highest first.
inline std::vector<AttentionEntry> inspect_attention(std::size_t entity, const ModelParams& params,
                                                     const FeatureStore& store) {
    std::vector<Vec> projected;
    for (const auto& f : store.images(entity)) projected.push_back(project(params.projection, f));
    const Vec w = attention(projected, params.entities.row(entity));
    std::vector<AttentionEntry> out;
    for (std::size_t i = 0; i < w.size(); ++i) out.push_back({i, w[i]});
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.weight > b.weight; });
    return out;
}

struct RelationMatch {
    std::size_t relation;
    double distance;
};

// Ranks relations by ||(e_I(a) - e_I(b)) - r||, closest first.
inline std::vector<RelationMatch> regularity_probe(std::size_t a, std::size_t b, const ModelParams& params,
                                                   const FeatureStore& store, Aggregation aggregation,
                                                   Norm norm_kind) {
    const Vec ia = entity_ibr(a, params, store, aggregation);
    const Vec ib = entity_ibr(b, params, store, aggregation);
    std::vector<RelationMatch> out;
    Vec diff(ia.size());
    for (std::size_t r = 0; r < params.num_relations(); ++r) {
        const auto rel = params.relations.row(r);
        for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = (ia[k] - ib[k]) - rel[k];
        out.push_back({r, norm(diff, norm_kind)});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.distance < y.distance; });
    return out;
}

}  // namespace ikrl
