#pragma once
// Vocabulary, triples, dataset splits and negative sampling.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace ikrl {

using Rng = std::mt19937_64;

class NameIndex {
public:
    // Returns the existing index or appends the name.
    std::size_t intern(const std::string& name) {
        auto [it, inserted] = index_.try_emplace(name, names_.size());
        if (inserted) names_.push_back(name);
        return it->second;
    }

    std::size_t lookup(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("unknown name: " + name);
        return it->second;
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const std::string& name_of(std::size_t i) const { return names_.at(i); }
    std::size_t size() const noexcept { return names_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct Vocabulary {
    NameIndex entities;
    NameIndex relations;
};

struct Triple {
    std::uint32_t h = 0;
    std::uint32_t r = 0;
    std::uint32_t t = 0;

    bool operator==(const Triple&) const = default;
    auto operator<=>(const Triple&) const = default;
};

struct TripleHash {
    std::size_t operator()(const Triple& x) const noexcept {
        std::uint64_t k = (std::uint64_t{x.h} << 32) ^ (std::uint64_t{x.r} << 16) ^ x.t;
        k ^= k >> 33;
        k *= 0xff51afd7ed558ccdULL;
        k ^= k >> 33;
        return static_cast<std::size_t>(k);
    }
};

using TripleSet = std::unordered_set<Triple, TripleHash>;

struct Dataset {
    Vocabulary vocab;
    std::vector<Triple> train;
    std::vector<Triple> valid;
    std::vector<Triple> test;
    TripleSet all_true;

    std::size_t num_entities() const { return vocab.entities.size(); }
    std::size_t num_relations() const { return vocab.relations.size(); }

    void rebuild_all_true() {
        all_true.clear();
        for (const auto* split : {&train, &valid, &test}) all_true.insert(split->begin(), split->end());
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    constexpr std::string_view ws = " \t\r\n\v\f";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

}  // namespace detail

// Parses "head<TAB>relation<TAB>tail" lines. Blank lines are skipped; fields are trimmed.
inline std::vector<Triple> load_triples(std::istream& in, Vocabulary& vocab,
                                        const std::string& source = "<stream>") {
    std::vector<Triple> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        std::array<std::string_view, 3> fields;
        std::size_t count = 0;
        std::string_view rest = line;
        while (true) {
            const auto tab = rest.find('\t');
            if (count < 3) fields[count] = detail::trim(rest.substr(0, tab));
            ++count;
            if (tab == std::string_view::npos) break;
            rest.remove_prefix(tab + 1);
        }
        if (count != 3)
            throw ParseError(source, lineno,
                             "expected 3 tab-separated fields, got " + std::to_string(count));
        for (auto f : fields)
            if (f.empty()) throw ParseError(source, lineno, "empty field");
        Triple tr;
        tr.h = static_cast<std::uint32_t>(vocab.entities.intern(std::string(fields[0])));
        tr.r = static_cast<std::uint32_t>(vocab.relations.intern(std::string(fields[1])));
        tr.t = static_cast<std::uint32_t>(vocab.entities.intern(std::string(fields[2])));
        out.push_back(tr);
    }
    return out;
}

inline std::vector<Triple> load_triples(const std::string& path, Vocabulary& vocab) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open triple file: " + path);
    return load_triples(in, vocab, path);
}

// One name per line; line number is the index. Used to pin entity/relation order.
inline void load_names(const std::string& path, NameIndex& index) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open name list: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto name = detail::trim(line);
        if (name.empty()) continue;
        if (index.contains(std::string(name)))
            throw ParseError(path, lineno, "duplicate name '" + std::string(name) + "'");
        index.intern(std::string(name));
    }
}

inline void write_triples(std::ostream& out, const std::vector<Triple>& triples,
                          const Vocabulary& vocab) {
    for (const auto& x : triples)
        out << vocab.entities.name_of(x.h) << '\t' << vocab.relations.name_of(x.r) << '\t'
            << vocab.entities.name_of(x.t) << '\n';
}

enum class Slot { Head, Tail, Relation };

// Replaces the chosen slot with a uniformly drawn different value such that the result
// is not a known-true triple.
inline Triple corrupt(const Triple& x, Slot slot, std::size_t num_entities,
                      std::size_t num_relations, Rng& rng, const TripleSet& all_true) {
    const std::size_t domain = slot == Slot::Relation ? num_relations : num_entities;
    const std::uint32_t current = slot == Slot::Head ? x.h : slot == Slot::Tail ? x.t : x.r;
    if (domain < 2) throw SamplingExhausted("corrupt: fewer than two values to choose from");

    auto with = [&](std::uint32_t v) {
        Triple y = x;
        (slot == Slot::Head ? y.h : slot == Slot::Tail ? y.t : y.r) = v;
        return y;
    };

    // Draw from the domain minus the current value.
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(domain - 2));
    const std::size_t candidates = domain - 1;
    for (std::size_t attempt = 0; attempt < candidates; ++attempt) {
        std::uint32_t v = pick(rng);
        if (v >= current) ++v;
        const Triple y = with(v);
        if (!all_true.count(y)) return y;
    }

    std::vector<std::uint32_t> valid;
    for (std::uint32_t v = 0; v < domain; ++v)
        if (v != current && !all_true.count(with(v))) valid.push_back(v);
    if (valid.empty())
        throw SamplingExhausted("corrupt: every replacement of the chosen slot is a true triple");
    std::uniform_int_distribution<std::size_t> pick_valid(0, valid.size() - 1);
    return with(valid[pick_valid(rng)]);
}

struct TriplePair {
    Triple pos;
    Triple neg;
};

// Draws a uniformly random slot among {head, tail, relation}, falling back to the
// remaining slots in order if the chosen one has no negative replacement.
inline Triple corrupt_any_slot(const Triple& x, std::size_t num_entities,
                               std::size_t num_relations, Rng& rng, const TripleSet& all_true) {
    std::uniform_int_distribution<int> slot_dist(0, 2);
    const int first = slot_dist(rng);
    for (int k = 0; k < 3; ++k) {
        const auto slot = static_cast<Slot>((first + k) % 3);
        try {
            return corrupt(x, slot, num_entities, num_relations, rng, all_true);
        } catch (const SamplingExhausted&) {
        }
    }
    throw SamplingExhausted("corrupt: no negative exists for triple (" + std::to_string(x.h) + "," +
                            std::to_string(x.r) + "," + std::to_string(x.t) + ")");
}

// Shuffled-epoch mini-batch sampler. Batches never span an epoch boundary, so the last
// batch of an epoch may be short.
class BatchSampler {
public:
    BatchSampler(const std::vector<Triple>& train, const TripleSet& all_true,
                 std::size_t num_entities, std::size_t num_relations)
        : train_(&train), all_true_(&all_true), num_entities_(num_entities),
          num_relations_(num_relations) {
        if (train.empty()) throw std::invalid_argument("BatchSampler: empty training set");
    }

    std::vector<TriplePair> next(std::size_t batch_size, Rng& rng) {
        if (batch_size == 0) throw std::invalid_argument("BatchSampler: batch_size must be >= 1");
        if (cursor_ == order_.size()) start_epoch(rng);
        const std::size_t end = std::min(order_.size(), cursor_ + batch_size);
        std::vector<TriplePair> out;
        out.reserve(end - cursor_);
        for (; cursor_ < end; ++cursor_) {
            const Triple& pos = (*train_)[order_[cursor_]];
            out.push_back({pos, corrupt_any_slot(pos, num_entities_, num_relations_, rng, *all_true_)});
        }
        return out;
    }

    // True once the current epoch's permutation has been fully consumed.
    bool epoch_done() const noexcept { return cursor_ == order_.size(); }

    std::vector<std::vector<TriplePair>> epoch(std::size_t batch_size, Rng& rng) {
        std::vector<std::vector<TriplePair>> batches;
        do {
            batches.push_back(next(batch_size, rng));
        } while (!epoch_done());
        return batches;
    }

private:
    void start_epoch(Rng& rng) {
        order_.resize(train_->size());
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        std::shuffle(order_.begin(), order_.end(), rng);
        cursor_ = 0;
    }

    const std::vector<Triple>* train_;
    const TripleSet* all_true_;
    std::size_t num_entities_;
    std::size_t num_relations_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

inline std::vector<TriplePair> sample_batch(BatchSampler& sampler, std::size_t batch_size, Rng& rng) {
    return sampler.next(batch_size, rng);
}

}  // namespace ikrl
