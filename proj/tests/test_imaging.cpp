#include <gtest/gtest.h>

#include <fstream>

#include <opencv2/imgproc.hpp>

#include "letterform/image.hpp"
#include "letterform/image_io.hpp"
#include "test_util.hpp"

using namespace letterform;
using letterform::testing::random_image;
using letterform::testing::TempDir;

TEST(Grayscale, WhiteRgbStaysWhite) {
    RasterImage rgb{1, 1, 3, {255, 255, 255}};
    EXPECT_EQ(to_grayscale(rgb).at(0, 0), 255);
}

TEST(Grayscale, GrayInputPassesThrough) {
    RandomSource rng(3);
    const auto img = random_image(7, 5, rng);
    RasterImage raw{7, 5, 1, std::vector<std::uint8_t>(img.pixels().begin(), img.pixels().end())};
    EXPECT_EQ(to_grayscale(raw), img);
}

TEST(Grayscale, PureRedUsesLuminanceWeights) {
    // round(0.299 * 255) = round(76.245) = 76
    RasterImage rgb{1, 1, 3, {255, 0, 0}};
    EXPECT_EQ(to_grayscale(rgb).at(0, 0), 76);
    RasterImage rgba{1, 1, 4, {255, 0, 0, 7}};
    EXPECT_EQ(to_grayscale(rgba).at(0, 0), 76);
}

TEST(Grayscale, RejectsZeroSizeAndOddChannels) {
    EXPECT_THROW(to_grayscale(RasterImage{0, 4, 1, {}}), Error);
    EXPECT_THROW(to_grayscale(RasterImage{1, 1, 2, {1, 2}}), Error);
}

TEST(Standardize, SmallImageIsPaddedSymmetrically) {
    RandomSource rng(1);
    auto img = random_image(100, 80, rng);
    const auto out = standardize(img);
    ASSERT_EQ(out.rows(), 128u);
    ASSERT_EQ(out.cols(), 128u);
    for (std::size_t r = 0; r < 128; ++r)
        for (std::size_t c = 0; c < 128; ++c) {
            const bool inside = r >= 14 && r <= 113 && c >= 24 && c <= 103;
            if (inside) ASSERT_EQ(out.at(r, c), img.at(r - 14, c - 24)) << r << "," << c;
            else ASSERT_EQ(out.at(r, c), 255) << r << "," << c;
        }
}

TEST(Standardize, OddPaddingPutsExtraPixelBottomRight) {
    GrayImage img(99, 79, 0);
    const auto out = standardize(img);
    // 29 rows of padding: 14 on top, 15 below; 49 columns: 24 left, 25 right
    EXPECT_EQ(out.at(13, 64), 255);
    EXPECT_EQ(out.at(14, 64), 0);
    EXPECT_EQ(out.at(112, 64), 0);
    EXPECT_EQ(out.at(113, 64), 255);
    EXPECT_EQ(out.at(64, 23), 255);
    EXPECT_EQ(out.at(64, 24), 0);
    EXPECT_EQ(out.at(64, 102), 0);
    EXPECT_EQ(out.at(64, 103), 255);
}

TEST(Standardize, IdentityAndIdempotentAt128) {
    RandomSource rng(2);
    for (int trial = 0; trial < 5; ++trial) {
        auto img = random_image(128, 128, rng);
        EXPECT_EQ(standardize(img), img);
        auto small = random_image(1 + rng.below(200), 1 + rng.below(200), rng);
        const auto once = standardize(small);
        EXPECT_EQ(standardize(once), once);
    }
}

TEST(Standardize, LargeImageMatchesReferenceResize) {
    RandomSource rng(5);
    auto img = random_image(256, 128, rng);
    const auto out = standardize(img);

    cv::Mat src(256, 128, CV_8UC1, img.pixels().data());
    cv::Mat ref;
    cv::resize(src, ref, cv::Size(64, 128), 0, 0, cv::INTER_LINEAR);
    int max_dev = 0;
    for (int r = 0; r < 128; ++r) {
        for (int c = 0; c < 32; ++c) {
            ASSERT_EQ(out.at(r, c), 255);
            ASSERT_EQ(out.at(r, 96 + c), 255);
        }
        for (int c = 0; c < 64; ++c)
            max_dev = std::max(max_dev, std::abs(int(out.at(r, 32 + c)) - int(ref.at<std::uint8_t>(r, c))));
    }
    EXPECT_LE(max_dev, 1);
}

TEST(Standardize, OneOversizedDimensionTriggersResize) {
    GrayImage img(60, 200, 0);
    const auto out = standardize(img);
    // 60 * 128/200 = 38.4 -> 38 rows of ink, padded 45 above and 45 below
    EXPECT_EQ(out.at(44, 64), 255);
    EXPECT_EQ(out.at(45, 64), 0);
    EXPECT_EQ(out.at(82, 64), 0);
    EXPECT_EQ(out.at(83, 64), 255);
    EXPECT_EQ(out.at(64, 0), 0);
    EXPECT_EQ(out.at(64, 127), 0);
}

TEST(Standardize, ResizeKeepsInkBoxAspectRatio) {
    RandomSource rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t rows = 129 + rng.below(300), cols = 129 + rng.below(300);
        GrayImage img(rows, cols);
        const std::size_t h = rows / 2 + rng.below(rows / 2), w = cols / 2 + rng.below(cols / 2);
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) img.at(r, c) = 0;
        const auto out = standardize(img);
        std::size_t r0 = 128, r1 = 0, c0 = 128, c1 = 0;
        for (std::size_t r = 0; r < 128; ++r)
            for (std::size_t c = 0; c < 128; ++c)
                if (out.at(r, c) < 128) r0 = std::min(r0, r), r1 = std::max(r1, r), c0 = std::min(c0, c), c1 = std::max(c1, c);
        const double scale = 128.0 / static_cast<double>(std::max(rows, cols));
        EXPECT_NEAR(static_cast<double>(r1 - r0 + 1), h * scale, 1.0 + 1e-9);
        EXPECT_NEAR(static_cast<double>(c1 - c0 + 1), w * scale, 1.0 + 1e-9);
    }
}

TEST(Normalize, ScalesAndTriplicates) {
    GrayImage img(128, 128, 255);
    img.at(0, 0) = 0;
    img.at(0, 1) = 128;
    const auto in = normalize_and_expand(img);
    ASSERT_EQ(in.values.size(), 3u * 128 * 128);
    for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(in.channel(c)[0], 0.0f);
        EXPECT_FLOAT_EQ(in.channel(c)[1], 128.0f / 255.0f);
        EXPECT_EQ(in.channel(c)[2], 1.0f);
    }
    EXPECT_NEAR(in.channel(0)[1], 0.50196, 1e-5);
}

TEST(Normalize, ChannelsBitwiseEqualAndInRange) {
    RandomSource rng(4);
    const auto in = normalize_and_expand(random_image(128, 128, rng));
    for (std::size_t i = 0; i < ModelInput::kPlane; ++i) {
        ASSERT_EQ(std::memcmp(&in.channel(0)[i], &in.channel(1)[i], sizeof(float)), 0);
        ASSERT_EQ(std::memcmp(&in.channel(0)[i], &in.channel(2)[i], sizeof(float)), 0);
        ASSERT_GE(in.channel(0)[i], 0.0f);
        ASSERT_LE(in.channel(0)[i], 1.0f);
    }
}

TEST(Normalize, RejectsWrongShape) { EXPECT_THROW(normalize_and_expand(GrayImage(64, 128)), Error); }

TEST(Preprocess, WhitePngBecomesAllOnes) {
    TempDir dir("white");
    write_gray(GrayImage(10, 10, 255), dir / "white.png");
    const auto in = preprocess(dir / "white.png");
    ASSERT_EQ(in.values.size(), ModelInput::kSize);
    for (float v : in.values) ASSERT_EQ(v, 1.0f);
}

TEST(Preprocess, EqualsExplicitThreeStepChain) {
    TempDir dir("chain");
    RandomSource rng(11);
    for (int i = 0; i < 50; ++i) {
        const auto img = random_image(1 + rng.below(250), 1 + rng.below(250), rng);
        const auto path = dir / ("img" + std::to_string(i) + (i % 2 ? ".png" : ".bmp"));
        write_gray(img, path);
        const auto chained = normalize_and_expand(standardize(to_grayscale(read_raster(path))));
        ASSERT_EQ(preprocess(path).values, chained.values);
        ASSERT_EQ(to_grayscale(read_raster(path)), img);
    }
}

TEST(Preprocess, RejectsUnreadableFiles) {
    TempDir dir("bad");
    EXPECT_THROW(preprocess(dir / "missing.png"), Error);
    std::ofstream(dir / "junk.png") << "not an image";
    EXPECT_THROW(preprocess(dir / "junk.png"), Error);
    EXPECT_THROW(preprocess(dir / "thing.jpg"), Error);
}
