#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "letterform/error.hpp"

namespace letterform {

inline constexpr std::size_t kInputSize = 128;
inline constexpr std::size_t kInputChannels = 3;
inline constexpr std::uint8_t kWhite = 255;

/// Interleaved 8-bit raster with 1, 3 (RGB) or 4 (RGBA) channels.
struct RasterImage {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t channels = 1;
    std::vector<std::uint8_t> data;
};

/// Single-channel 8-bit image, row-major; white (255) is background.
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(std::size_t rows, std::size_t cols, std::uint8_t fill = kWhite)
        : rows_(rows), cols_(cols), pixels_(rows * cols, fill) {}
    GrayImage(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> pixels)
        : rows_(rows), cols_(cols), pixels_(std::move(pixels)) {
        if (pixels_.size() != rows_ * cols_)
            throw Error("pixel buffer size " + std::to_string(pixels_.size()) + " does not match " +
                        std::to_string(rows_) + "x" + std::to_string(cols_));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return pixels_.empty(); }

    std::uint8_t& at(std::size_t r, std::size_t c) { return pixels_[r * cols_ + c]; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return pixels_[r * cols_ + c]; }

    std::span<const std::uint8_t> pixels() const { return pixels_; }
    std::span<std::uint8_t> pixels() { return pixels_; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::uint8_t> pixels_;
};

/// 3x128x128 channel-major array of values in [0, 1]; the three channels are identical.
struct ModelInput {
    std::vector<float> values;

    static constexpr std::size_t kPlane = kInputSize * kInputSize;
    static constexpr std::size_t kSize = kInputChannels * kPlane;

    std::span<const float> channel(std::size_t c) const {
        return std::span<const float>(values).subspan(c * kPlane, kPlane);
    }
};

/// Rounds and clamps a real intensity into the 8-bit range.
inline std::uint8_t saturate_u8(double v) {
    if (!(v > 0.0)) return 0;  // also maps NaN to 0
    if (v >= 255.0) return 255;
    return static_cast<std::uint8_t>(std::lround(v));
}

/// Rec.601 luminance for RGB(A); alpha is ignored. Single-channel input passes through.
inline GrayImage to_grayscale(const RasterImage& image) {
    if (image.rows == 0 || image.cols == 0) throw Error("cannot convert a zero-size image");
    if (image.channels != 1 && image.channels != 3 && image.channels != 4)
        throw Error("unsupported channel count " + std::to_string(image.channels));
    if (image.data.size() != image.rows * image.cols * image.channels)
        throw Error("raster buffer size does not match its shape");

    if (image.channels == 1) return GrayImage(image.rows, image.cols, image.data);

    GrayImage out(image.rows, image.cols);
    auto dst = out.pixels();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const std::uint8_t* px = &image.data[i * image.channels];
        dst[i] = saturate_u8(0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]);
    }
    return out;
}

/// Bilinear resampling with half-pixel centers (align_corners = false), edge-clamped.
inline GrayImage resize_bilinear(const GrayImage& src, std::size_t rows, std::size_t cols) {
    if (src.empty() || rows == 0 || cols == 0) throw Error("cannot resize to or from an empty image");

    struct Tap {
        std::size_t lo, hi;
        double frac;
    };
    auto taps = [](std::size_t in, std::size_t out) {
        std::vector<Tap> t(out);
        const double scale = static_cast<double>(in) / static_cast<double>(out);
        for (std::size_t i = 0; i < out; ++i) {
            double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
            s = std::clamp(s, 0.0, static_cast<double>(in - 1));
            const auto lo = static_cast<std::size_t>(std::floor(s));
            t[i] = {lo, std::min(lo + 1, in - 1), s - static_cast<double>(lo)};
        }
        return t;
    };
    const auto ty = taps(src.rows(), rows);
    const auto tx = taps(src.cols(), cols);

    GrayImage out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const Tap& y = ty[r];
        for (std::size_t c = 0; c < cols; ++c) {
            const Tap& x = tx[c];
            const double top = src.at(y.lo, x.lo) * (1.0 - x.frac) + src.at(y.lo, x.hi) * x.frac;
            const double bottom = src.at(y.hi, x.lo) * (1.0 - x.frac) + src.at(y.hi, x.hi) * x.frac;
            out.at(r, c) = saturate_u8(top * (1.0 - y.frac) + bottom * y.frac);
        }
    }
    return out;
}

/// Centers `src` on a rows x cols canvas of `fill`. Odd margins put the extra
/// pixel on the bottom/right.
inline GrayImage pad_centered(const GrayImage& src, std::size_t rows, std::size_t cols,
                              std::uint8_t fill = kWhite) {
    if (src.rows() > rows || src.cols() > cols) throw Error("image larger than padding target");
    GrayImage out(rows, cols, fill);
    const std::size_t top = (rows - src.rows()) / 2;
    const std::size_t left = (cols - src.cols()) / 2;
    for (std::size_t r = 0; r < src.rows(); ++r)
        std::copy_n(&src.pixels()[r * src.cols()], src.cols(), &out.at(top + r, left));
    return out;
}

/// Brings any gray image to size x size: images that fit are white-padded;
/// anything with a dimension over `size` is first scaled so its longer side
/// equals `size`, keeping the aspect ratio.
inline GrayImage standardize(const GrayImage& image, std::size_t size = kInputSize) {
    if (image.empty()) throw Error("cannot standardize an empty image");
    if (image.rows() <= size && image.cols() <= size) {
        if (image.rows() == size && image.cols() == size) return image;
        return pad_centered(image, size, size);
    }
    const std::size_t longer = std::max(image.rows(), image.cols());
    const double scale = static_cast<double>(size) / static_cast<double>(longer);
    auto scaled_dim = [&](std::size_t d) {
        if (d == longer) return size;
        return std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(d * scale)), 1, size);
    };
    return pad_centered(resize_bilinear(image, scaled_dim(image.rows()), scaled_dim(image.cols())),
                        size, size);
}

inline ModelInput normalize_and_expand(const GrayImage& image) {
    if (image.rows() != kInputSize || image.cols() != kInputSize)
        throw Error("expected a " + std::to_string(kInputSize) + "x" + std::to_string(kInputSize) +
                    " image, got " + std::to_string(image.rows()) + "x" + std::to_string(image.cols()));
    ModelInput out;
    out.values.resize(ModelInput::kSize);
    auto src = image.pixels();
    for (std::size_t i = 0; i < ModelInput::kPlane; ++i) {
        const float v = static_cast<float>(src[i]) / 255.0f;
        for (std::size_t c = 0; c < kInputChannels; ++c) out.values[c * ModelInput::kPlane + i] = v;
    }
    return out;
}

}  // namespace letterform
