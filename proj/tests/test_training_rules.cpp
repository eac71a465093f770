#include <gtest/gtest.h>

#include "letterform/class_weights.hpp"
#include "letterform/config.hpp"
#include "letterform/early_stopping.hpp"
#include "letterform/random.hpp"

using namespace letterform;

namespace {

std::vector<EpochRecord> history_of(std::initializer_list<double> avg) {
    std::vector<EpochRecord> h;
    std::size_t epoch = 0;
    for (double a : avg) h.push_back(EpochRecord::make(++epoch, 1.0, 1.0, a, a));
    return h;
}

bool stops_at(const std::vector<EpochRecord>& h, std::size_t epoch, std::size_t patience) {
    return early_stop(std::span(h).first(epoch), patience);
}

}  // namespace

TEST(ClassWeights, BalancedCountsGiveOnes) {
    const std::vector<std::size_t> counts{25, 25, 25, 25};
    const auto w = compute_class_weights(counts, 100);
    for (double x : w) EXPECT_EQ(x, 1.0);
}

TEST(ClassWeights, ImbalancedExamples) {
    const std::vector<std::size_t> counts{40, 30, 20, 10};
    const auto w = compute_class_weights(counts, 100);
    const double want[] = {0.625, 100.0 / 120.0, 1.25, 2.5};
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w[i], want[i], 1e-9);

    const std::vector<std::size_t> rare{99, 1};
    const auto r = compute_class_weights(rare, 100);
    EXPECT_NEAR(r[0], 100.0 / 198.0, 1e-12);
    EXPECT_NEAR(r[1], 50.0, 1e-12);
}

TEST(ClassWeights, AbsentClassesGetZeroAndDoNotCountTowardK) {
    const std::vector<std::size_t> counts{10, 0, 30, 0};
    const auto w = compute_class_weights(counts);
    EXPECT_EQ(w[1], 0.0);
    EXPECT_EQ(w[3], 0.0);
    EXPECT_DOUBLE_EQ(w[0], 40.0 / 20.0);
    EXPECT_DOUBLE_EQ(w[2], 40.0 / 60.0);
}

TEST(ClassWeights, Errors) {
    const std::vector<std::size_t> zeros{0, 0, 0};
    EXPECT_THROW(compute_class_weights(zeros), Error);
    const std::vector<std::size_t> counts{1, 2};
    EXPECT_THROW(compute_class_weights(counts, 4), Error);
}

TEST(ClassWeights, FrequencyWeightedMeanIsOne) {
    RandomSource rng(21);
    for (int t = 0; t < 500; ++t) {
        std::vector<std::size_t> counts(1 + rng.below(28));
        std::size_t n = 0;
        for (auto& c : counts) n += (c = rng.below(5) == 0 ? 0 : 1 + rng.below(500));
        if (n == 0) continue;
        const auto w = compute_class_weights(counts, n);
        double mean = 0;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            mean += static_cast<double>(counts[i]) / static_cast<double>(n) * w[i];
            if (counts[i] > 0) EXPECT_GT(w[i], 0.0);
        }
        EXPECT_NEAR(mean, 1.0, 1e-12);
    }
}

TEST(EarlyStop, PlateauAfterEpochTwoStopsAtSeven) {
    const auto h = history_of({0.5, 0.6, 0.59, 0.58, 0.57, 0.56, 0.55});
    for (std::size_t e = 1; e <= 6; ++e) EXPECT_FALSE(stops_at(h, e, 5)) << e;
    EXPECT_TRUE(stops_at(h, 7, 5));
}

TEST(EarlyStop, MonotoneAndShortSequencesNeverStop) {
    std::vector<EpochRecord> h;
    for (std::size_t e = 1; e <= 60; ++e) {
        h.push_back(EpochRecord::make(e, 0, 0, e / 100.0, e / 100.0));
        EXPECT_FALSE(early_stop(h, 5));
    }
    EXPECT_FALSE(early_stop(history_of({0.9, 0.1, 0.1}), 5));
}

TEST(EarlyStop, TiesAreNotImprovements) {
    const auto h = history_of({0.7, 0.7, 0.7, 0.7, 0.7, 0.7});
    EXPECT_TRUE(early_stop(h, 5));
    EXPECT_FALSE(stops_at(h, 5, 5));
}

TEST(EarlyStop, NeverFiresBeforePatienceAfterBest) {
    RandomSource rng(22);
    for (int t = 0; t < 300; ++t) {
        std::vector<EpochRecord> h;
        const std::size_t patience = 1 + rng.below(7);
        double best = -1;
        std::size_t best_epoch = 0;
        for (std::size_t e = 1; e <= 40; ++e) {
            const double a = std::round(rng.uniform01() * 20) / 20;  // coarse grid forces ties
            h.push_back(EpochRecord::make(e, 0, 0, a, a));
            if (a > best) best = a, best_epoch = e;
            if (early_stop(h, patience)) {
                EXPECT_GE(e - best_epoch, patience);
                break;
            }
        }
    }
}

TEST(EarlyStop, Preconditions) {
    EXPECT_THROW(early_stop({}, 5), Error);
    EXPECT_THROW(early_stop(history_of({0.1}), 0), Error);
}

TEST(SelectBest, Examples) {
    EXPECT_EQ(select_best(history_of({0.5, 0.9, 0.7})), 2u);
    EXPECT_EQ(select_best(history_of({0.8, 0.8})), 1u);
    EXPECT_EQ(select_best(history_of({0.70, 0.72, 0.72, 0.71})), 2u);
    EXPECT_THROW(select_best({}), Error);
}

TEST(SelectBest, AvgAccIsMeanOfHeads) {
    const auto r = EpochRecord::make(3, 0.4, 0.5, 0.8, 0.6);
    EXPECT_DOUBLE_EQ(r.avg_acc, 0.7);
    EXPECT_EQ(r.epoch, 3u);
}

TEST(KeyValueConfig, ParsesCommentsAndTypes) {
    auto kv = KeyValueConfig::parse("# run settings\nlearning_rate = 0.001\n\nbatch_size=16\nflag = on\nname = x y\n");
    EXPECT_DOUBLE_EQ(kv.get_double("learning_rate", 0), 0.001);
    EXPECT_EQ(kv.get_uint("batch_size", 32), 16u);
    EXPECT_TRUE(kv.get_bool("flag", false));
    EXPECT_EQ(kv.get_string("name", ""), "x y");
    EXPECT_EQ(kv.get_uint("absent", 7), 7u);
    EXPECT_NO_THROW(kv.finish());
}

TEST(KeyValueConfig, RejectsTyposAndBadValues) {
    auto kv = KeyValueConfig::parse("learnig_rate = 1\n");
    kv.get_double("learning_rate", 0);
    EXPECT_THROW(kv.finish(), Error);
    EXPECT_THROW(KeyValueConfig::parse("just words\n"), Error);
    auto bad = KeyValueConfig::parse("a = x1\nb = -3\nc = maybe\n");
    EXPECT_THROW(bad.get_double("a", 0), Error);
    EXPECT_THROW(bad.get_uint("b", 0), Error);
    EXPECT_THROW(bad.get_bool("c", false), Error);
    EXPECT_THROW(bad.require_uint("seed"), Error);
}

TEST(KeyValueConfig, AugmentationKeysRoundTrip) {
    AugmentConfig a;
    a.apply_probability = 0.5;
    a.elastic_pad = 3;
    a.noise_std_fraction = 0.123456789;
    auto kv = KeyValueConfig::parse(augment_config_text(a));
    const auto back = augment_config_from(kv);
    kv.finish();
    EXPECT_EQ(back.apply_probability, 0.5);
    EXPECT_EQ(back.elastic_pad, 3);
    EXPECT_EQ(back.noise_std_fraction, 0.123456789);
    auto invalid = KeyValueConfig::parse("apply_probability = 2\n");
    EXPECT_THROW(augment_config_from(invalid), Error);
}
