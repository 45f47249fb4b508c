#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "ikrl/ikrl.hpp"
#include "oracles.hpp"

using namespace ikrl;

namespace {

TrainConfig grad_config(Aggregation agg, Norm n, EnergyModel model = EnergyModel::Ikrl) {
    TrainConfig cfg;
    cfg.margin = 1.0;
    cfg.aggregation = agg;
    cfg.norm = n;
    cfg.model = model;
    cfg.dim = 8;
    cfg.image_dim = 16;
    return cfg;
}

// Runs the gradient check on `want` stable instances, resampling unstable ones.
void check_gradients(const TrainConfig& cfg, std::uint64_t seed, int want) {
    std::mt19937_64 rng(seed);
    int checked = 0, drawn = 0;
    while (checked < want) {
        ASSERT_LT(++drawn, 50 * want) << "too many unstable instances";
        const auto inst = oracle::random_instance(rng);
        if (!oracle::fd_stable(inst, cfg)) continue;
        EXPECT_LT(oracle::gradient_check_error(inst, cfg), 1e-4) << "instance " << drawn;
        ++checked;
    }
}

SynthData small_synth(std::uint64_t seed = 0) {
    SynthConfig sc;
    sc.n_entities = 20;
    sc.n_relations = 3;
    sc.dim = 6;
    sc.image_dim = 12;
    sc.triples_per_relation = 15;
    sc.seed = seed;
    return generate(sc);
}

TrainConfig small_train_config() {
    TrainConfig cfg;
    cfg.dim = 6;
    cfg.image_dim = 12;
    cfg.epochs = 5;
    cfg.batch_size = 7;
    cfg.margin = 1.0;
    cfg.lr_start = 0.01;
    cfg.lr_end = 0.002;
    return cfg;
}

}  // namespace

class GradientCheck : public ::testing::TestWithParam<std::tuple<Aggregation, Norm>> {};

TEST_P(GradientCheck, AnalyticMatchesFiniteDifferences) {
    const auto [agg, n] = GetParam();
    check_gradients(grad_config(agg, n), 1000 + static_cast<int>(agg) * 10 + static_cast<int>(n), 30);
}

INSTANTIATE_TEST_SUITE_P(AllModes, GradientCheck,
                         ::testing::Combine(::testing::Values(Aggregation::Att, Aggregation::Avg, Aggregation::Max),
                                            ::testing::Values(Norm::L1, Norm::L2)),
                         [](const auto& info) {
                             return to_string(std::get<0>(info.param)) + "_" + to_string(std::get<1>(info.param));
                         });

TEST(GradientCheck, TransEBothNorms) {
    check_gradients(grad_config(Aggregation::Att, Norm::L1, EnergyModel::TransE), 7, 30);
    check_gradients(grad_config(Aggregation::Att, Norm::L2, EnergyModel::TransE), 8, 30);
}

TEST(GradientCheck, MultiImageCountsAndWiderDims) {
    auto cfg = grad_config(Aggregation::Att, Norm::L2);
    std::mt19937_64 rng(77);
    int checked = 0;
    while (checked < 10) {
        const auto inst = oracle::random_instance(rng, 5, 9, 1 + checked % 6);
        if (!oracle::fd_stable(inst, cfg)) continue;
        EXPECT_LT(oracle::gradient_check_error(inst, cfg), 1e-4);
        ++checked;
    }
}

TEST(Gradients, DetachedAttentionOnlyDropsTheLogitPath) {
    auto cfg = grad_config(Aggregation::Att, Norm::L2);
    std::mt19937_64 rng(3);
    auto inst = oracle::random_instance(rng);
    while (!oracle::fd_stable(inst, cfg)) inst = oracle::random_instance(rng);
    auto detached = cfg;
    detached.attention_detached = true;
    const auto full = oracle::densify(gradients(inst.pos, inst.neg, inst.params, inst.store, cfg), inst.params);
    const auto det = oracle::densify(gradients(inst.pos, inst.neg, inst.params, inst.store, detached), inst.params);
    EXPECT_EQ(full.relations, det.relations);
    EXPECT_EQ(full.projection, det.projection);
    EXPECT_NE(full.entities, det.entities);

    // AVG has no logits, so detaching changes nothing.
    cfg.aggregation = detached.aggregation = Aggregation::Avg;
    EXPECT_EQ(oracle::densify(gradients(inst.pos, inst.neg, inst.params, inst.store, cfg), inst.params),
              oracle::densify(gradients(inst.pos, inst.neg, inst.params, inst.store, detached), inst.params));
}

TEST(PairLoss, HingeExamples) {
    // e0 = e1, r0 = 0: E(0,0,1) = 0. r1 = (1,1): E(0,1,1) = 2 under L1.
    ModelParams p(2, 2, 2, 1);
    p.relations(1, 0) = p.relations(1, 1) = 1.0;
    TrainConfig cfg;
    cfg.model = EnergyModel::TransE;
    cfg.norm = Norm::L1;
    const FeatureStore none;
    cfg.margin = 1.0;
    EXPECT_DOUBLE_EQ(pair_loss({0, 0, 1}, {0, 1, 1}, p, none, cfg), 0.0);
    EXPECT_TRUE(gradients({0, 0, 1}, {0, 1, 1}, p, none, cfg).empty());
    cfg.margin = 4.0;
    EXPECT_DOUBLE_EQ(pair_loss({0, 0, 1}, {0, 1, 1}, p, none, cfg), 2.0);
    EXPECT_DOUBLE_EQ(pair_loss({0, 1, 1}, {0, 0, 1}, p, none, cfg), 6.0);
    EXPECT_FALSE(gradients({0, 0, 1}, {0, 1, 1}, p, none, cfg).empty());
}

TEST(PairLoss, ZeroGradientWheneverMarginSatisfied) {
    auto cfg = grad_config(Aggregation::Att, Norm::L1);
    cfg.margin = 1e-6;
    std::mt19937_64 rng(12);
    int seen = 0;
    for (int i = 0; i < 200; ++i) {
        const auto inst = oracle::random_instance(rng);
        if (pair_loss(inst.pos, inst.neg, inst.params, inst.store, cfg) > 0.0) continue;
        const auto g = gradients(inst.pos, inst.neg, inst.params, inst.store, cfg);
        EXPECT_TRUE(g.empty());
        EXPECT_EQ(g.loss, 0.0);
        ++seen;
    }
    EXPECT_GT(seen, 0);
}

TEST(LearningRate, LinearScheduleEndpoints) {
    TrainConfig cfg;
    cfg.lr_start = 0.01;
    cfg.lr_end = 0.002;
    cfg.epochs = 2;
    EXPECT_DOUBLE_EQ(learning_rate(cfg, 0), 0.01);
    EXPECT_DOUBLE_EQ(learning_rate(cfg, 1), 0.002);
    cfg.epochs = 5;
    EXPECT_DOUBLE_EQ(learning_rate(cfg, 2), 0.006);
    cfg.epochs = 1;
    EXPECT_DOUBLE_EQ(learning_rate(cfg, 0), 0.01);
}

TEST(Initialize, BoundsAndTransEProjection) {
    TrainConfig cfg;
    cfg.dim = 9;
    cfg.image_dim = 25;
    Rng rng(1);
    const auto p = initialize(30, 4, cfg, rng);
    for (double x : p.entities.flat()) EXPECT_LE(std::abs(x), 2.0);
    for (double x : p.projection.flat()) EXPECT_LE(std::abs(x), 2.0 / 5.0);
    cfg.model = EnergyModel::TransE;
    const auto q = initialize(30, 4, cfg, rng);
    for (double x : q.projection.flat()) EXPECT_EQ(x, 0.0);
}

TEST(Train, ZeroEpochsReturnsInitialization) {
    const auto data = small_synth();
    auto cfg = small_train_config();
    cfg.epochs = 0;
    const auto [params, report] = train(data.dataset, data.features, cfg);
    Rng rng(cfg.seed);
    EXPECT_EQ(params, initialize(data.dataset.num_entities(), data.dataset.num_relations(), cfg, rng));
    EXPECT_TRUE(report.epochs.empty());
}

TEST(Train, RowsStayInUnitBall) {
    const auto data = small_synth();
    for (auto agg : {Aggregation::Att, Aggregation::Avg, Aggregation::Max}) {
        auto cfg = small_train_config();
        cfg.aggregation = agg;
        cfg.epochs = 3;
        const auto [p, _] = train(data.dataset, data.features, cfg);
        for (std::size_t e = 0; e < p.num_entities(); ++e) EXPECT_LE(l2(p.entities.row(e)), 1.0 + 1e-9);
        for (std::size_t r = 0; r < p.num_relations(); ++r) EXPECT_LE(l2(p.relations.row(r)), 1.0 + 1e-9);
    }
}

TEST(Train, DeterministicAndThreadCountInvariant) {
    const auto data = small_synth(4);
    auto cfg = small_train_config();
    const auto a = train(data.dataset, data.features, cfg).first;
    const auto b = train(data.dataset, data.features, cfg).first;
    EXPECT_EQ(a, b);
    cfg.threads = 3;
    EXPECT_EQ(train(data.dataset, data.features, cfg).first, a);
    cfg.seed = 1;
    EXPECT_NE(train(data.dataset, data.features, cfg).first, a);
}

TEST(Train, LogsOneLinePerEpoch) {
    const auto data = small_synth();
    auto cfg = small_train_config();
    cfg.epochs = 3;
    std::ostringstream log;
    const auto report = train(data.dataset, data.features, cfg, &log).second;
    ASSERT_EQ(report.epochs.size(), 3u);
    const std::string text = log.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
    EXPECT_NE(text.find("epoch=2 lr=0.002 mean_loss="), std::string::npos);
}

// Net decrease from epoch 0 to epoch 9. Fresh negatives each epoch make the per-epoch
// mean too noisy for a monotone check.
TEST(Train, TransELossDecreasesEarly) {
    int decreasing = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SynthConfig sc;
        sc.seed = seed;
        const auto data = generate(sc);
        TrainConfig cfg;
        cfg.dim = 16;
        cfg.margin = 1.0;
        cfg.norm = Norm::L2;
        cfg.lr_start = cfg.lr_end = 0.01;
        cfg.batch_size = 10;
        cfg.epochs = 10;
        cfg.seed = seed;
        const auto rep = train_transe(data.dataset, cfg).second;
        decreasing += rep.epochs.back().mean_loss < rep.epochs.front().mean_loss;
    }
    EXPECT_GE(decreasing, 9);
}

TEST(Train, NonFiniteLossRaisesNumericError) {
    auto data = small_synth();
    FeatureStore bad = data.features;
    auto imgs = bad.images(0);
    imgs[0][3] = std::numeric_limits<double>::quiet_NaN();
    bad.set_images(0, imgs);
    auto cfg = small_train_config();
    EXPECT_THROW(train(data.dataset, bad, cfg), NumericError);
}

TEST(Train, RejectsMismatchedFeaturesAndBadConfig) {
    const auto data = small_synth();
    auto cfg = small_train_config();
    cfg.image_dim = 13;
    EXPECT_THROW(train(data.dataset, data.features, cfg), ConfigError);
    cfg = small_train_config();
    cfg.max_images = 2;
    EXPECT_THROW(train(data.dataset, data.features, cfg), std::invalid_argument);
    cfg = small_train_config();
    cfg.margin = 0.0;
    EXPECT_THROW(train(data.dataset, data.features, cfg), ConfigError);
    cfg = small_train_config();
    cfg.init = InitMode::Pretrained;
    EXPECT_THROW(train(data.dataset, data.features, cfg), ConfigError);
}

TEST(Train, PretrainedInitCopiesStructureSide) {
    const auto data = small_synth();
    auto cfg = small_train_config();
    const auto warm = train_transe(data.dataset, cfg).first;
    const auto path = (std::filesystem::temp_directory_path() / "ikrl_warm_start.bin").string();
    save_checkpoint(path, warm);
    cfg.init = InitMode::Pretrained;
    cfg.pretrained_checkpoint = path;
    cfg.epochs = 0;
    const auto p = train(data.dataset, data.features, cfg).first;
    const auto stored = load_checkpoint(path);  // float32 on disk
    EXPECT_EQ(p.entities, stored.entities);
    EXPECT_EQ(p.relations, stored.relations);
    bool any_nonzero = false;
    for (double x : p.projection.flat()) any_nonzero |= x != 0.0;
    EXPECT_TRUE(any_nonzero);
    std::filesystem::remove(path);
}
