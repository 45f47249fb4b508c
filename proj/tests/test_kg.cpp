#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "ikrl/kg.hpp"

using namespace ikrl;

namespace {

std::vector<Triple> parse(const std::string& text, Vocabulary& vocab) {
    std::istringstream in(text);
    return load_triples(in, vocab, "test.txt");
}

TripleSet set_of(std::initializer_list<Triple> xs) { return TripleSet(xs.begin(), xs.end()); }

}  // namespace

TEST(LoadTriples, SingleLineAssignsFirstSeenIndices) {
    Vocabulary v;
    const auto t = parse("a\tlikes\tb\n", v);
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(t[0], (Triple{0, 0, 1}));
    EXPECT_EQ(v.entities.names(), (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(v.relations.names(), (std::vector<std::string>{"likes"}));
}

TEST(LoadTriples, KeepsDuplicateLines) {
    Vocabulary v;
    const auto t = parse("a\tlikes\tb\na\tlikes\tb\n", v);
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t[0], t[1]);
}

TEST(LoadTriples, ArityViolationReportsLine) {
    Vocabulary v;
    try {
        parse("a\tlikes\n", v);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 1u);
    }
    Vocabulary w;
    try {
        parse("a\tr\tb\n\nx\ty\tz\tw\n", w);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
}

TEST(LoadTriples, EmptyInputIsEmptyList) {
    Vocabulary v;
    EXPECT_TRUE(parse("", v).empty());
    EXPECT_TRUE(parse("\n  \n", v).empty());
}

TEST(LoadTriples, TrimsFieldsAndHandlesCrlf) {
    Vocabulary v;
    const auto t = parse(" a \t likes\tb \r\n", v);
    ASSERT_EQ(t.size(), 1u);
    EXPECT_EQ(v.entities.name_of(0), "a");
    EXPECT_EQ(v.entities.name_of(1), "b");
}

TEST(Vocabulary, LookupInvertsNameOf) {
    Vocabulary v;
    parse("x\tr1\ty\ny\tr2\tz\nz\tr1\tx\n", v);
    for (std::size_t i = 0; i < v.entities.size(); ++i) EXPECT_EQ(v.entities.lookup(v.entities.name_of(i)), i);
    for (std::size_t i = 0; i < v.relations.size(); ++i) EXPECT_EQ(v.relations.lookup(v.relations.name_of(i)), i);
}

TEST(Dataset, AllTrueCollapsesDuplicates) {
    Dataset ds;
    ds.train = {{0, 0, 1}, {0, 0, 1}, {1, 0, 2}};
    ds.test = {{2, 0, 0}};
    ds.rebuild_all_true();
    EXPECT_EQ(ds.all_true.size(), 3u);
}

// KG {a=0, b=1}, relation likes=0, all_true = {(a, likes, b)}.
TEST(Corrupt, ForcedTailCandidate) {
    Rng rng(1);
    const auto truth = set_of({{0, 0, 1}});
    EXPECT_EQ(corrupt({0, 0, 1}, Slot::Tail, 2, 1, rng, truth), (Triple{0, 0, 0}));
}

TEST(Corrupt, ForcedHeadCandidate) {
    Rng rng(1);
    const auto truth = set_of({{0, 0, 1}});
    EXPECT_EQ(corrupt({0, 0, 1}, Slot::Head, 2, 1, rng, truth), (Triple{1, 0, 1}));
}

TEST(Corrupt, CompleteGraphIsExhausted) {
    // All 4 triples over 2 entities and 1 relation are true.
    const auto truth = set_of({{0, 0, 0}, {0, 0, 1}, {1, 0, 0}, {1, 0, 1}});
    Rng rng(3);
    for (const auto& x : truth) {
        EXPECT_THROW(corrupt(x, Slot::Head, 2, 1, rng, truth), SamplingExhausted);
        EXPECT_THROW(corrupt(x, Slot::Tail, 2, 1, rng, truth), SamplingExhausted);
        EXPECT_THROW(corrupt(x, Slot::Relation, 2, 1, rng, truth), SamplingExhausted);
        EXPECT_THROW(corrupt_any_slot(x, 2, 1, rng, truth), SamplingExhausted);
    }
}

TEST(Corrupt, ChangesExactlyTheChosenSlotAndAvoidsTruth) {
    // Dense small KG: every sampled negative checked against all_true exhaustively.
    Rng rng(7);
    TripleSet truth;
    std::vector<Triple> pos;
    std::uniform_int_distribution<std::uint32_t> e(0, 5), r(0, 2);
    for (int i = 0; i < 40; ++i) {
        Triple x{e(rng), r(rng), e(rng)};
        if (truth.insert(x).second) pos.push_back(x);
    }
    for (const auto& x : pos)
        for (Slot s : {Slot::Head, Slot::Tail, Slot::Relation})
            for (int k = 0; k < 20; ++k) {
                Triple y;
                try {
                    y = corrupt(x, s, 6, 3, rng, truth);
                } catch (const SamplingExhausted&) {
                    continue;
                }
                EXPECT_FALSE(truth.count(y));
                EXPECT_EQ(y.h != x.h, s == Slot::Head);
                EXPECT_EQ(y.t != x.t, s == Slot::Tail);
                EXPECT_EQ(y.r != x.r, s == Slot::Relation);
            }
}

TEST(Corrupt, UniformOverValidReplacements) {
    // Entities 0..4; (0,0,1) and (0,0,2) are true, so tail candidates are {0,3,4}.
    const auto truth = set_of({{0, 0, 1}, {0, 0, 2}});
    Rng rng(11);
    std::map<std::uint32_t, int> counts;
    const int n = 30000;
    for (int i = 0; i < n; ++i) counts[corrupt({0, 0, 1}, Slot::Tail, 5, 1, rng, truth).t]++;
    ASSERT_EQ(counts.size(), 3u);
    const double p = 1.0 / 3.0, sd = std::sqrt(n * p * (1 - p));
    for (auto [v, c] : counts) EXPECT_NEAR(c, n * p, 4 * sd) << "tail " << v;
}

TEST(BatchSampler, FullBatchCoversEpochOnce) {
    std::vector<Triple> train = {{0, 0, 1}, {1, 0, 2}, {2, 0, 3}, {3, 0, 4}, {4, 0, 0}};
    TripleSet truth(train.begin(), train.end());
    BatchSampler s(train, truth, 5, 1);
    Rng rng(5);
    for (int epoch = 0; epoch < 3; ++epoch) {
        auto batch = s.next(train.size(), rng);
        EXPECT_TRUE(s.epoch_done());
        std::vector<Triple> seen;
        for (auto& p : batch) seen.push_back(p.pos);
        std::sort(seen.begin(), seen.end());
        auto sorted = train;
        std::sort(sorted.begin(), sorted.end());
        EXPECT_EQ(seen, sorted);
    }
}

TEST(BatchSampler, UnitBatchesOverThreeEpochs) {
    std::vector<Triple> train = {{0, 0, 1}, {1, 0, 2}, {2, 0, 0}};
    TripleSet truth(train.begin(), train.end());
    BatchSampler s(train, truth, 3, 1);
    Rng rng(9);
    std::map<Triple, int> counts;
    int pairs = 0;
    for (int epoch = 0; epoch < 3; ++epoch)
        for (auto& batch : s.epoch(1, rng)) {
            ASSERT_EQ(batch.size(), 1u);
            counts[batch[0].pos]++;
            ++pairs;
        }
    EXPECT_EQ(pairs, 9);
    for (auto& x : train) EXPECT_EQ(counts[x], 3);
}

TEST(BatchSampler, DeterministicForSeed) {
    std::vector<Triple> train = {{0, 0, 1}, {1, 1, 2}, {2, 0, 3}, {3, 1, 0}};
    TripleSet truth(train.begin(), train.end());
    auto run = [&] {
        BatchSampler s(train, truth, 4, 2);
        Rng rng(42);
        std::vector<Triple> seq;
        for (int i = 0; i < 10; ++i)
            for (auto& p : s.next(3, rng)) {
                seq.push_back(p.pos);
                seq.push_back(p.neg);
            }
        return seq;
    };
    EXPECT_EQ(run(), run());
}

TEST(BatchSampler, SlotFrequenciesNearOneThird) {
    std::vector<Triple> train;
    for (std::uint32_t i = 0; i < 20; ++i) train.push_back({i, i % 4, (i + 1) % 20});
    TripleSet truth(train.begin(), train.end());
    BatchSampler s(train, truth, 20, 4);
    Rng rng(123);
    std::array<int, 3> slots{};
    int n = 0;
    while (n < 12000)
        for (auto& p : s.next(20, rng)) {
            ++n;
            if (p.neg.h != p.pos.h) slots[0]++;
            else if (p.neg.t != p.pos.t) slots[1]++;
            else slots[2]++;
            EXPECT_FALSE(truth.count(p.neg));
        }
    const double sd = std::sqrt(n * (1.0 / 3) * (2.0 / 3));
    for (int c : slots) EXPECT_NEAR(c, n / 3.0, 3 * sd);
}

TEST(BatchSampler, RejectsEmptyTrain) {
    std::vector<Triple> train;
    TripleSet truth;
    EXPECT_THROW(BatchSampler(train, truth, 2, 1), std::invalid_argument);
}
