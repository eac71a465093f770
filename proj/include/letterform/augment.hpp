#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "letterform/error.hpp"
#include "letterform/image.hpp"
#include "letterform/random.hpp"

namespace letterform {

/// Magnitudes for the five stochastic transforms. Every magnitude at zero turns
/// its transform into the identity.
struct AugmentConfig {
    double apply_probability = 0.30;
    double rotation_degrees = 5.0;
    double blur_radius = 0.5;
    double noise_std_fraction = 0.40;
    double elastic_alpha = 34.0;
    double elastic_sigma = 4.0;
    int elastic_pad = 10;
    double skew_magnitude_fraction = 0.10;

    void validate() const {
        if (!(apply_probability >= 0.0 && apply_probability <= 1.0))
            throw Error("apply_probability must lie in [0, 1]");
        for (double v : {rotation_degrees, blur_radius, noise_std_fraction, elastic_alpha, elastic_sigma,
                         skew_magnitude_fraction})
            if (!(v >= 0.0) || !std::isfinite(v)) throw Error("augmentation magnitudes must be finite and non-negative");
        if (elastic_pad < 0) throw Error("elastic_pad must be non-negative");
    }
};

enum class Transform : std::uint8_t { Elastic, Rotate, Blur, Noise, Skew };

inline constexpr std::array<Transform, 5> kPipelineOrder{Transform::Elastic, Transform::Rotate, Transform::Blur,
                                                         Transform::Noise, Transform::Skew};

inline constexpr std::string_view transform_name(Transform t) {
    switch (t) {
        case Transform::Elastic: return "elastic";
        case Transform::Rotate: return "rotate";
        case Transform::Blur: return "blur";
        case Transform::Noise: return "noise";
        case Transform::Skew: return "skew";
    }
    return "?";
}

namespace detail {

/// Index into [0, n) mirrored about the edge pixels (no edge duplication).
inline std::ptrdiff_t reflect101(std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return 0;
    const std::ptrdiff_t period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

inline std::ptrdiff_t clamp_index(std::ptrdiff_t i, std::ptrdiff_t n) { return std::clamp<std::ptrdiff_t>(i, 0, n - 1); }

/// Row-major real-valued plane used for intermediate sums.
struct Plane {
    std::size_t rows = 0, cols = 0;
    std::vector<double> v;

    Plane(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}
    explicit Plane(const GrayImage& img) : rows(img.rows()), cols(img.cols()), v(img.pixels().begin(), img.pixels().end()) {}

    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }

    GrayImage to_image() const {
        GrayImage out(rows, cols);
        for (std::size_t i = 0; i < v.size(); ++i) out.pixels()[i] = saturate_u8(v[i]);
        return out;
    }
};

enum class Border { Replicate, Reflect };

template <Border B>
Plane convolve_separable(const Plane& in, const std::vector<double>& kernel) {
    const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
    const auto rows = static_cast<std::ptrdiff_t>(in.rows);
    const auto cols = static_cast<std::ptrdiff_t>(in.cols);
    auto wrap = [](std::ptrdiff_t i, std::ptrdiff_t n) {
        if constexpr (B == Border::Replicate) return clamp_index(i, n);
        else return reflect101(i, n);
    };
    Plane tmp(in.rows, in.cols), out(in.rows, in.cols);
    for (std::ptrdiff_t r = 0; r < rows; ++r)
        for (std::ptrdiff_t c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (std::ptrdiff_t k = -radius; k <= radius; ++k) acc += kernel[k + radius] * in.at(r, wrap(c + k, cols));
            tmp.at(r, c) = acc;
        }
    for (std::ptrdiff_t r = 0; r < rows; ++r)
        for (std::ptrdiff_t c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (std::ptrdiff_t k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp.at(wrap(r + k, rows), c);
            out.at(r, c) = acc;
        }
    return out;
}

/// Bilinear read at real coordinates, clamped to the plane.
inline double sample_bilinear(const Plane& p, double y, double x) {
    y = std::clamp(y, 0.0, static_cast<double>(p.rows - 1));
    x = std::clamp(x, 0.0, static_cast<double>(p.cols - 1));
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const auto x0 = static_cast<std::size_t>(std::floor(x));
    const std::size_t y1 = std::min(y0 + 1, p.rows - 1);
    const std::size_t x1 = std::min(x0 + 1, p.cols - 1);
    const double fy = y - static_cast<double>(y0);
    const double fx = x - static_cast<double>(x0);
    const double top = p.at(y0, x0) * (1.0 - fx) + p.at(y0, x1) * fx;
    const double bottom = p.at(y1, x0) * (1.0 - fx) + p.at(y1, x1) * fx;
    return top * (1.0 - fy) + bottom * fy;
}

}  // namespace detail

/// Normalized 1-D Gaussian taps over [-ceil(truncate*sigma), +ceil(truncate*sigma)].
inline std::vector<double> gaussian_kernel(double sigma, double truncate = 3.0) {
    if (!(sigma > 0.0)) return {1.0};
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(truncate * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (double& w : k) w /= sum;
    return k;
}

/// Mirror padding (edge pixel not repeated); repeats the reflection when the
/// pad exceeds the image size.
inline GrayImage mirror_pad(const GrayImage& image, std::size_t pad) {
    const auto rows = static_cast<std::ptrdiff_t>(image.rows());
    const auto cols = static_cast<std::ptrdiff_t>(image.cols());
    const auto p = static_cast<std::ptrdiff_t>(pad);
    GrayImage out(image.rows() + 2 * pad, image.cols() + 2 * pad);
    for (std::ptrdiff_t r = 0; r < rows + 2 * p; ++r)
        for (std::ptrdiff_t c = 0; c < cols + 2 * p; ++c)
            out.at(r, c) = image.at(detail::reflect101(r - p, rows), detail::reflect101(c - p, cols));
    return out;
}

/// Smooth random warp: two uniform [-1, 1] fields over the mirror-padded image,
/// Gaussian-smoothed (sigma, truncated at 4 sigma) and scaled by alpha, give the
/// per-pixel (dy, dx) source offsets; the padded image is resampled
/// bilinearly and the pad cropped off.
inline GrayImage elastic_deform(const GrayImage& image, RandomSource& rng, const AugmentConfig& cfg) {
    if (image.rows() < 3 || image.cols() < 3) throw Error("elastic_deform needs an image of at least 3x3");
    const auto pad = static_cast<std::size_t>(cfg.elastic_pad);
    const detail::Plane padded(mirror_pad(image, pad));

    detail::Plane dx(padded.rows, padded.cols), dy(padded.rows, padded.cols);
    for (double& v : dx.v) v = rng.uniform(-1.0, 1.0);
    for (double& v : dy.v) v = rng.uniform(-1.0, 1.0);
    const auto kernel = gaussian_kernel(cfg.elastic_sigma, 4.0);
    dx = detail::convolve_separable<detail::Border::Reflect>(dx, kernel);
    dy = detail::convolve_separable<detail::Border::Reflect>(dy, kernel);

    GrayImage out(image.rows(), image.cols());
    for (std::size_t r = 0; r < image.rows(); ++r)
        for (std::size_t c = 0; c < image.cols(); ++c) {
            const std::size_t pr = r + pad, pc = c + pad;
            const double y = static_cast<double>(pr) + cfg.elastic_alpha * dy.at(pr, pc);
            const double x = static_cast<double>(pc) + cfg.elastic_alpha * dx.at(pr, pc);
            out.at(r, c) = saturate_u8(detail::sample_bilinear(padded, y, x));
        }
    return out;
}

/// Rotation about the image center by an angle uniform in
/// [-rotation_degrees, rotation_degrees]; nearest-neighbor, white fill.
inline GrayImage random_rotate(const GrayImage& image, RandomSource& rng, const AugmentConfig& cfg) {
    const double degrees = rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees);
    const double theta = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(theta), sn = std::sin(theta);
    const double cy = (static_cast<double>(image.rows()) - 1.0) / 2.0;
    const double cx = (static_cast<double>(image.cols()) - 1.0) / 2.0;
    const auto rows = static_cast<std::ptrdiff_t>(image.rows());
    const auto cols = static_cast<std::ptrdiff_t>(image.cols());

    GrayImage out(image.rows(), image.cols(), kWhite);
    for (std::ptrdiff_t r = 0; r < rows; ++r)
        for (std::ptrdiff_t c = 0; c < cols; ++c) {
            const double y = static_cast<double>(r) - cy;
            const double x = static_cast<double>(c) - cx;
            // inverse rotation: destination -> source
            const double sx = cs * x + sn * y + cx;
            const double sy = -sn * x + cs * y + cy;
            const auto ir = static_cast<std::ptrdiff_t>(std::floor(sy + 0.5));
            const auto ic = static_cast<std::ptrdiff_t>(std::floor(sx + 0.5));
            if (ir >= 0 && ir < rows && ic >= 0 && ic < cols) out.at(r, c) = image.at(ir, ic);
        }
    return out;
}

/// Gaussian blur with sigma = blur_radius, kernel truncated at 3 sigma, edges replicated.
inline GrayImage gaussian_blur(const GrayImage& image, const AugmentConfig& cfg) {
    if (!(cfg.blur_radius > 0.0)) return image;
    const auto kernel = gaussian_kernel(cfg.blur_radius, 3.0);
    return detail::convolve_separable<detail::Border::Replicate>(detail::Plane(image), kernel).to_image();
}

inline double noise_stddev(const AugmentConfig& cfg) { return cfg.noise_std_fraction * 255.0; }

/// Adds i.i.d. N(0, (noise_std_fraction * 255)^2) to every pixel, then rounds and clips.
inline GrayImage gaussian_noise(const GrayImage& image, RandomSource& rng, const AugmentConfig& cfg) {
    const double sd = noise_stddev(cfg);
    GrayImage out(image.rows(), image.cols());
    auto src = image.pixels();
    auto dst = out.pixels();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = saturate_u8(src[i] + sd * rng.normal());
    return out;
}

// ---------------------------------------------------------------------------
// Projective warp

struct Point2 {
    double x = 0.0, y = 0.0;
};

/// 3x3 projective map with h[8] fixed at 1, row-major.
struct Homography {
    std::array<double, 9> h{1, 0, 0, 0, 1, 0, 0, 0, 1};

    Point2 apply(Point2 p) const {
        const double w = h[6] * p.x + h[7] * p.y + h[8];
        return {(h[0] * p.x + h[1] * p.y + h[2]) / w, (h[3] * p.x + h[4] * p.y + h[5]) / w};
    }
};

/// Solves the 8-unknown linear system mapping src[i] -> dst[i] (Gaussian
/// elimination with partial pivoting).
inline Homography solve_homography(const std::array<Point2, 4>& src, const std::array<Point2, 4>& dst) {
    std::array<std::array<double, 9>, 8> a{};
    for (std::size_t i = 0; i < 4; ++i) {
        const auto [x, y] = src[i];
        const auto [u, v] = dst[i];
        a[2 * i] = {x, y, 1, 0, 0, 0, -u * x, -u * y, u};
        a[2 * i + 1] = {0, 0, 0, x, y, 1, -v * x, -v * y, v};
    }
    for (std::size_t col = 0; col < 8; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < 8; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        if (std::abs(a[pivot][col]) < 1e-12) throw Error("degenerate point correspondence for homography");
        std::swap(a[col], a[pivot]);
        for (std::size_t r = 0; r < 8; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            if (f == 0.0) continue;
            for (std::size_t k = col; k < 9; ++k) a[r][k] -= f * a[col][k];
        }
    }
    Homography H;
    for (std::size_t i = 0; i < 8; ++i) H.h[i] = a[i][8] / a[i][i];
    H.h[8] = 1.0;
    return H;
}

/// Four-point perspective skew: each corner moves by an independent uniform
/// offset of at most skew_magnitude_fraction of the side (x by width, y by
/// height). The image is warped onto the bounding box of the moved corners
/// (white fill, bilinear) and a window of the original size is cut from the
/// center of that box.
inline GrayImage perspective_skew(const GrayImage& image, RandomSource& rng, const AugmentConfig& cfg) {
    if (image.rows() < 8 || image.cols() < 8) throw Error("perspective_skew needs an image of at least 8x8");
    const double w = static_cast<double>(image.cols()), h = static_cast<double>(image.rows());
    const double mx = cfg.skew_magnitude_fraction * w, my = cfg.skew_magnitude_fraction * h;

    const std::array<Point2, 4> corners{Point2{0, 0}, Point2{w - 1, 0}, Point2{w - 1, h - 1}, Point2{0, h - 1}};
    std::array<Point2, 4> moved{};
    for (std::size_t i = 0; i < 4; ++i) {
        moved[i].x = corners[i].x + rng.uniform(-mx, mx);
        moved[i].y = corners[i].y + rng.uniform(-my, my);
    }
    const Homography back = solve_homography(moved, corners);

    double xmin = moved[0].x, xmax = moved[0].x, ymin = moved[0].y, ymax = moved[0].y;
    for (const auto& p : moved) {
        xmin = std::min(xmin, p.x), xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y), ymax = std::max(ymax, p.y);
    }
    const auto box_x0 = static_cast<std::ptrdiff_t>(std::floor(xmin + 1e-9));
    const auto box_y0 = static_cast<std::ptrdiff_t>(std::floor(ymin + 1e-9));
    const auto box_w = static_cast<std::ptrdiff_t>(std::ceil(xmax - 1e-9)) - box_x0 + 1;
    const auto box_h = static_cast<std::ptrdiff_t>(std::ceil(ymax - 1e-9)) - box_y0 + 1;
    const auto cols = static_cast<std::ptrdiff_t>(image.cols());
    const auto rows = static_cast<std::ptrdiff_t>(image.rows());
    auto floor_div2 = [](std::ptrdiff_t v) { return v >= 0 ? v / 2 : -((-v + 1) / 2); };
    const std::ptrdiff_t x0 = box_x0 + floor_div2(box_w - cols);
    const std::ptrdiff_t y0 = box_y0 + floor_div2(box_h - rows);

    const detail::Plane src(image);
    GrayImage out(image.rows(), image.cols(), kWhite);
    for (std::ptrdiff_t r = 0; r < rows; ++r)
        for (std::ptrdiff_t c = 0; c < cols; ++c) {
            const Point2 s = back.apply({static_cast<double>(x0 + c), static_cast<double>(y0 + r)});
            constexpr double tol = 1e-6;
            if (!(s.x >= -tol && s.x <= w - 1 + tol && s.y >= -tol && s.y <= h - 1 + tol)) continue;
            out.at(r, c) = saturate_u8(detail::sample_bilinear(src, s.y, s.x));
        }
    return out;
}

// ---------------------------------------------------------------------------
// Pipeline

/// Which transforms fired, indexed like kPipelineOrder.
struct AugmentTrace {
    std::array<bool, 5> applied{};

    std::size_t count() const { return static_cast<std::size_t>(std::count(applied.begin(), applied.end(), true)); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < applied.size(); ++i)
            if (applied[i]) out.emplace_back(transform_name(kPipelineOrder[i]));
        return out;
    }
};

inline GrayImage apply_transform(Transform t, const GrayImage& image, RandomSource& rng, const AugmentConfig& cfg) {
    switch (t) {
        case Transform::Elastic: return elastic_deform(image, rng, cfg);
        case Transform::Rotate: return random_rotate(image, rng, cfg);
        case Transform::Blur: return gaussian_blur(image, cfg);
        case Transform::Noise: return gaussian_noise(image, rng, cfg);
        case Transform::Skew: return perspective_skew(image, rng, cfg);
    }
    return image;
}

/// Draws the five apply/skip decisions up front (uniform < apply_probability),
/// then runs the selected transforms in the fixed order
/// elastic, rotate, blur, noise, skew on the running image.
inline GrayImage augment_pipeline(const GrayImage& image, RandomSource& rng, const AugmentConfig& cfg,
                                  AugmentTrace* trace = nullptr) {
    cfg.validate();
    AugmentTrace local;
    for (bool& fire : local.applied) fire = rng.uniform01() < cfg.apply_probability;

    GrayImage current = image;
    for (std::size_t i = 0; i < kPipelineOrder.size(); ++i)
        if (local.applied[i]) current = apply_transform(kPipelineOrder[i], current, rng, cfg);
    if (trace) *trace = local;
    return current;
}

}  // namespace letterform
