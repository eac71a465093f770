#include <gtest/gtest.h>

#include "letterform/metrics.hpp"
#include "metrics_fixture.hpp"
#include "test_util.hpp"

using namespace letterform;
using namespace letterform::testing;

namespace {

ConfusionMatrix random_confusion(RandomSource& rng) {
    const auto k = 2 + rng.below(27);
    ConfusionMatrix cm(k);
    for (std::size_t t = 0; t < k; ++t) {
        if (rng.uniform01() < 0.2) continue;  // some classes absent
        for (std::size_t p = 0; p < k; ++p) cm.at(t, p) = t == p ? rng.below(60) : rng.below(8);
    }
    cm.at(0, 0) += 1;
    return cm;
}

}  // namespace

TEST(Confusion, Examples) {
    const std::vector<std::size_t> t{0, 0, 1}, p{0, 1, 1};
    const auto cm = confusion(t, p, 2);
    EXPECT_EQ(cm.at(0, 0), 1u);
    EXPECT_EQ(cm.at(0, 1), 1u);
    EXPECT_EQ(cm.at(1, 0), 0u);
    EXPECT_EQ(cm.at(1, 1), 1u);

    const auto perfect = confusion(t, t, 3);
    EXPECT_EQ(perfect.trace(), perfect.total());

    const auto empty = confusion({}, {}, 4);
    EXPECT_EQ(empty.total(), 0u);
    EXPECT_EQ(empty, ConfusionMatrix(4));
}

TEST(Confusion, Errors) {
    const std::vector<std::size_t> a{0, 2}, b{0, 1}, c{0};
    EXPECT_THROW(confusion(a, b, 2), Error);
    EXPECT_THROW(confusion(a, c, 3), Error);
    EXPECT_THROW(summary_metrics(ConfusionMatrix(3)), Error);
}

TEST(Summary, DiagonalIsPerfect) {
    ConfusionMatrix cm(4);
    cm.at(0, 0) = 3, cm.at(2, 2) = 5;
    const auto m = summary_metrics(cm);
    EXPECT_EQ(m.accuracy, 1.0);
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
    EXPECT_EQ(m.f1, 1.0);
}

TEST(Summary, TwoByTwoExample) {
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 1, cm.at(0, 1) = 1, cm.at(1, 1) = 1;
    const auto m = summary_metrics(cm);
    EXPECT_DOUBLE_EQ(m.accuracy, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3.0);
    // precision (1, 0.5), f1 (2/3, 2/3) with supports (2, 1)
    EXPECT_DOUBLE_EQ(m.precision, (2 * 1.0 + 1 * 0.5) / 3.0);
    EXPECT_DOUBLE_EQ(m.f1, 2.0 / 3.0);

    const auto macro = summary_metrics(cm, Averaging::Macro);
    EXPECT_DOUBLE_EQ(macro.recall, 0.75);
}

TEST(Summary, WeightedRecallEqualsAccuracy) {
    RandomSource rng(14);
    for (int t = 0; t < 100; ++t) {
        const auto cm = random_confusion(rng);
        const auto m = summary_metrics(cm);
        EXPECT_NEAR(m.recall, m.accuracy, 1e-12);
        for (double v : {m.accuracy, m.precision, m.recall, m.f1}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0 + 1e-15);
        }
    }
}

TEST(PerPair, TenSampleTable) {
    const auto c = ten_sample_case();
    const auto rows = per_pair_accuracy(c.truth, c.letter_preds, c.position_preds);
    ASSERT_EQ(rows.size(), std::size(kTenSamplePairs));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& want = kTenSamplePairs[i];
        EXPECT_EQ(rows[i].pair.letter.name(), want.letter);
        EXPECT_EQ(rows[i].pair.position.code(), want.position);
        EXPECT_EQ(rows[i].support, want.support);
        EXPECT_EQ(rows[i].correct, want.correct);
        EXPECT_EQ(rows[i].accuracy, static_cast<double>(want.correct) / static_cast<double>(want.support));
    }
}

TEST(PerPair, JointCorrectnessAndErrors) {
    const std::vector<LetterPosition> truth{{LetterClass(0), PositionClass(3)}, {LetterClass(0), PositionClass(3)},
                                            {LetterClass(2), PositionClass(1)}};
    const std::vector<std::size_t> letters{0, 0, 2}, positions{3, 2, 1};
    const auto rows = per_pair_accuracy(truth, letters, positions);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].accuracy, 0.5);
    EXPECT_EQ(rows[1].accuracy, 1.0);
    EXPECT_THROW(per_pair_accuracy({}, {}, {}), Error);
    EXPECT_THROW(per_pair_accuracy(truth, letters, std::vector<std::size_t>{1}), Error);
}

TEST(PerLetter, TenSampleTableAndAbsentLetters) {
    const auto c = ten_sample_case();
    std::vector<LetterClass> letters;
    for (const auto& t : c.truth) letters.push_back(t.letter);
    const auto rows = per_letter_accuracy(letters, c.letter_preds);
    ASSERT_EQ(rows.size(), std::size(kTenSampleLetters));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].letter.name(), kTenSampleLetters[i].letter);
        EXPECT_EQ(rows[i].support, kTenSampleLetters[i].support);
        EXPECT_EQ(rows[i].correct, kTenSampleLetters[i].correct);
    }
    EXPECT_EQ(rows[1].accuracy, 0.75);
}

TEST(PerLetter, EqualsSupportWeightedLetterOnlyPairAccuracy) {
    RandomSource rng(15);
    for (int trial = 0; trial < 50; ++trial) {
        const auto n = 1 + rng.below(300);
        std::vector<LetterPosition> truth;
        std::vector<LetterClass> letters;
        std::vector<std::size_t> lp, pp;
        for (std::size_t i = 0; i < n; ++i) {
            truth.push_back({LetterClass(rng.below(6)), PositionClass(rng.below(4))});
            letters.push_back(truth.back().letter);
            lp.push_back(rng.uniform01() < 0.7 ? truth.back().letter.index() : rng.below(kNumLetters));
            pp.push_back(rng.below(4));
        }
        // position forced right turns joint correctness into letter-only correctness
        std::vector<std::size_t> pp_right;
        for (const auto& t : truth) pp_right.push_back(t.position.index());
        const auto pairs = per_pair_accuracy(truth, lp, pp_right);
        for (const auto& row : per_letter_accuracy(letters, lp)) {
            double num = 0, den = 0;
            for (const auto& p : pairs)
                if (p.pair.letter == row.letter) num += p.support * p.accuracy, den += p.support;
            EXPECT_NEAR(row.accuracy, num / den, 1e-12);
        }
        std::size_t support = 0;
        for (const auto& p : per_pair_accuracy(truth, lp, pp)) support += p.support;
        EXPECT_EQ(support, n);
    }
}

TEST(Report, CsvRoundTripAtFourDecimals) {
    TempDir dir("report");
    RandomSource rng(16);
    for (auto format : {RateFormat::Fraction, RateFormat::Percent}) {
        const auto c = ten_sample_case();
        const auto report = build_report(c.truth, c.letter_preds, c.position_preds, TaskLosses{0.19581234, 0.5});
        write_report_csv(report, dir.path(), format);
        const auto back = read_report_csv(dir.path());
        auto same4 = [](double a, double b) { return format_rate(a) == format_rate(b); };
        EXPECT_TRUE(same4(back.letter.summary.accuracy, report.letter.summary.accuracy));
        EXPECT_TRUE(same4(back.position.summary.f1, report.position.summary.f1));
        EXPECT_TRUE(same4(*back.letter.test_loss, 0.1958));
        ASSERT_EQ(back.per_pair.size(), report.per_pair.size());
        for (std::size_t i = 0; i < back.per_pair.size(); ++i) {
            EXPECT_EQ(back.per_pair[i].pair, report.per_pair[i].pair);
            EXPECT_EQ(back.per_pair[i].support, report.per_pair[i].support);
            EXPECT_EQ(back.per_pair[i].correct, report.per_pair[i].correct);
            EXPECT_TRUE(same4(back.per_pair[i].accuracy, report.per_pair[i].accuracy));
        }
        ASSERT_EQ(back.per_letter.size(), report.per_letter.size());
        for (std::size_t i = 0; i < back.per_letter.size(); ++i)
            EXPECT_TRUE(same4(back.per_letter[i].accuracy, report.per_letter[i].accuracy));
    }
}

TEST(Report, EnsembleLossRendersAsSlash) {
    TempDir dir("slash");
    const auto c = ten_sample_case();
    const auto report = build_report(c.truth, c.letter_preds, c.position_preds);
    write_report_csv(report, dir.path());
    std::ifstream in(dir / "report.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    EXPECT_EQ(row.substr(row.size() - 2), ",/");
    EXPECT_FALSE(read_report_csv(dir.path()).letter.test_loss.has_value());
}

TEST(Report, JsonRoundTrip) {
    const auto c = ten_sample_case();
    const auto report = build_report(c.truth, c.letter_preds, c.position_preds, TaskLosses{0.25, 0.125});
    const auto back = report_from_json(report_to_json(report));
    EXPECT_EQ(back.letter.summary.accuracy, report.letter.summary.accuracy);
    EXPECT_EQ(back.position.test_loss, report.position.test_loss);
    ASSERT_EQ(back.per_pair.size(), report.per_pair.size());
    EXPECT_EQ(back.per_pair[4].correct, 1u);
    EXPECT_EQ(format_rate(0.96381), "0.9638");
    EXPECT_EQ(format_percent(0.9638), "96.38%");
}
