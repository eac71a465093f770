#pragma once

#include <filesystem>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "letterform/error.hpp"
#include "letterform/image.hpp"

namespace letterform {

namespace fs = std::filesystem;

/// True for the raster formats the toolkit ingests (PNG, BMP), by extension.
inline bool is_supported_image(const fs::path& path) {
    std::string ext = path.extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return ext == ".png" || ext == ".bmp";
}

/// Decodes a PNG or BMP file into an RGB(A) or gray raster.
inline RasterImage read_raster(const fs::path& path) {
    if (!is_supported_image(path)) throw Error("unsupported image format: " + path.string());
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (mat.empty()) throw Error("unreadable image file: " + path.string());
    if (mat.depth() != CV_8U) throw Error("only 8-bit images are supported: " + path.string());

    const int ch = mat.channels();
    if (ch == 3) cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
    else if (ch == 4) cv::cvtColor(mat, mat, cv::COLOR_BGRA2RGBA);
    else if (ch != 1) throw Error("unsupported channel count in " + path.string());
    if (!mat.isContinuous()) mat = mat.clone();

    RasterImage out;
    out.rows = static_cast<std::size_t>(mat.rows);
    out.cols = static_cast<std::size_t>(mat.cols);
    out.channels = static_cast<std::size_t>(ch);
    out.data.assign(mat.data, mat.data + mat.total() * mat.elemSize());
    return out;
}

inline GrayImage read_gray(const fs::path& path) { return to_grayscale(read_raster(path)); }

/// Writes a gray image; the format follows the extension (.png or .bmp).
inline void write_gray(const GrayImage& image, const fs::path& path) {
    if (!is_supported_image(path)) throw Error("unsupported image format: " + path.string());
    cv::Mat mat(static_cast<int>(image.rows()), static_cast<int>(image.cols()), CV_8UC1,
                const_cast<std::uint8_t*>(image.pixels().data()));
    if (!cv::imwrite(path.string(), mat)) throw Error("failed to write image: " + path.string());
}

/// Load, grayscale, standardize to 128x128, scale to [0, 1] and triplicate channels.
inline ModelInput preprocess(const fs::path& image_path) {
    return normalize_and_expand(standardize(read_gray(image_path)));
}

}  // namespace letterform
