#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "letterform/augment.hpp"
#include "letterform/corpus.hpp"
#include "letterform/image.hpp"
#include "letterform/image_io.hpp"
#include "letterform/labels.hpp"
#include "letterform/random.hpp"

namespace letterform {

// Parametric pseudo-glyphs: a letter-specific stroke skeleton plus diacritic
// dots, with baseline connectors that encode the positional form (Beginning
// connects left, End connects right, Middle both, Isolated none). Shapes are
// drawn in unit coordinates and rasterized with per-sample jitter.

struct SyntheticPair {
    LetterClass letter;
    std::vector<PositionClass> positions;
};

struct SyntheticConfig {
    std::vector<SyntheticPair> inventory;
    std::size_t samples_per_pair = 50;
    std::uint64_t seed = 0;

    /// Alef and Dal (non-connecting: End and Isolated only), Baa and Seen (all four).
    static SyntheticConfig defaults(std::uint64_t seed = 0) {
        SyntheticConfig c;
        c.seed = seed;
        const auto all = std::vector<PositionClass>{PositionClass(0), PositionClass(1), PositionClass(2), PositionClass(3)};
        const auto end_iso = std::vector<PositionClass>{PositionClass::parse("E"), PositionClass::parse("I")};
        c.inventory = {{LetterClass::parse("Alef"), end_iso},
                       {LetterClass::parse("Baa"), all},
                       {LetterClass::parse("Seen"), all},
                       {LetterClass::parse("Dal"), end_iso}};
        return c;
    }
};

namespace detail {

struct Segment {
    Point2 a, b;
};

struct GlyphShape {
    std::vector<Segment> strokes;
    std::vector<Point2> dots;
};

inline void add_polyline(GlyphShape& g, std::initializer_list<Point2> pts) {
    for (auto it = pts.begin(); std::next(it) != pts.end(); ++it) g.strokes.push_back({*it, *std::next(it)});
}

/// Skeleton for a letter in unit coordinates (x right, y down, baseline ~0.62).
inline GlyphShape letter_skeleton(LetterClass letter) {
    GlyphShape g;
    switch (letter.index()) {
        case 0:  // Alef: tall vertical stroke
            add_polyline(g, {{0.50, 0.12}, {0.50, 0.62}});
            break;
        case 2:  // Baa: shallow bowl, one dot below
            add_polyline(g, {{0.22, 0.42}, {0.28, 0.60}, {0.50, 0.64}, {0.72, 0.60}, {0.78, 0.42}});
            g.dots = {{0.50, 0.82}};
            break;
        case 17:  // Seen: three teeth
            add_polyline(g, {{0.20, 0.62}, {0.27, 0.44}, {0.34, 0.62}, {0.41, 0.44}, {0.48, 0.62}, {0.55, 0.44},
                             {0.62, 0.62}, {0.80, 0.62}});
            break;
        case 4:  // Dal: open angle
            add_polyline(g, {{0.38, 0.28}, {0.64, 0.52}, {0.32, 0.62}});
            break;
        default: {
            // Other letters: a deterministic zig-zag and 0-3 dots keyed on the index.
            const double k = static_cast<double>(letter.index());
            const double h = 0.30 + 0.02 * std::fmod(k * 7.0, 10.0);
            add_polyline(g, {{0.25, 0.62 - h * 0.5}, {0.40, 0.62 - h}, {0.60, 0.62}, {0.75, 0.62 - h * std::fmod(k, 3.0) / 3.0}});
            const auto n_dots = letter.index() % 4;
            for (std::size_t i = 0; i < n_dots; ++i)
                g.dots.push_back({0.40 + 0.1 * static_cast<double>(i), letter.index() % 2 ? 0.82 : 0.18});
        }
    }
    return g;
}

inline void add_connectors(GlyphShape& g, PositionClass position) {
    const char code = position.code();
    // Beginning and Middle connect to the following letter on the left.
    if (code == 'B' || code == 'M') g.strokes.push_back({{0.0, 0.62}, {0.30, 0.62}});
    // Middle and End connect to the preceding letter on the right.
    if (code == 'M' || code == 'E') g.strokes.push_back({{0.70, 0.62}, {1.0, 0.62}});
}

inline double distance_to_segment(Point2 p, Point2 a, Point2 b) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace detail

/// Renders one pseudo-glyph on a white canvas of random size (56..96 px).
inline GrayImage render_glyph(LetterClass letter, PositionClass position, RandomSource& rng) {
    auto shape = detail::letter_skeleton(letter);
    detail::add_connectors(shape, position);

    const auto rows = static_cast<std::size_t>(56 + rng.below(25));
    const auto cols = static_cast<std::size_t>(56 + rng.below(41));
    const double scale = rng.uniform(0.85, 1.05);
    const double shift_x = rng.uniform(-0.05, 0.05), shift_y = rng.uniform(-0.05, 0.05);
    const double shear = rng.uniform(-0.12, 0.12);
    const double thickness = rng.uniform(2.5, 4.5);
    const double ink = rng.uniform(0.0, 50.0);

    auto to_px = [&](Point2 p) {
        const double ux = (p.x - 0.5) * scale + 0.5 + shift_x + shear * (p.y - 0.62);
        const double uy = (p.y - 0.5) * scale + 0.5 + shift_y;
        return Point2{ux * static_cast<double>(cols - 1), uy * static_cast<double>(rows - 1)};
    };
    std::vector<detail::Segment> segs;
    for (const auto& s : shape.strokes) segs.push_back({to_px(s.a), to_px(s.b)});
    std::vector<Point2> dots;
    for (const auto& d : shape.dots) dots.push_back(to_px(d));

    GrayImage img(rows, cols, kWhite);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const Point2 p{static_cast<double>(c), static_cast<double>(r)};
            double d = 1e9;
            for (const auto& s : segs) d = std::min(d, detail::distance_to_segment(p, s.a, s.b) - thickness / 2.0);
            for (const auto& q : dots) d = std::min(d, std::hypot(p.x - q.x, p.y - q.y) - thickness);
            // one-pixel antialiased edge
            const double coverage = std::clamp(0.5 - d, 0.0, 1.0);
            img.at(r, c) = saturate_u8(255.0 - coverage * (255.0 - ink));
        }
    return img;
}

/// Writes `<root>/<Letter>/<Position>/<Letter>_<Position>_<k>.png` for every
/// inventory pair plus a root manifest.csv; returns the manifest.
inline CorpusManifest generate_synthetic_corpus(const fs::path& root, const SyntheticConfig& cfg) {
    if (cfg.inventory.empty() || cfg.samples_per_pair == 0) throw Error("synthetic corpus would be empty");
    std::vector<LetterSample> samples;
    for (const auto& entry : cfg.inventory)
        for (const auto position : entry.positions) {
            const auto dir = root / std::string(entry.letter.name()) / std::string(1, position.code());
            fs::create_directories(dir);
            RandomSource rng(RandomSource::mix(cfg.seed ^ RandomSource::mix(entry.letter.index() * 8 + position.index() + 1)));
            for (std::size_t k = 0; k < cfg.samples_per_pair; ++k) {
                char name[64];
                std::snprintf(name, sizeof name, "%s_%c_%03zu", std::string(entry.letter.name()).c_str(), position.code(), k);
                const auto path = dir / (std::string(name) + ".png");
                write_gray(render_glyph(entry.letter, position, rng), path);
                auto rel = fs::relative(path, root);
                rel.replace_extension();
                samples.push_back({rel.generic_string(), path, entry.letter, position});
            }
        }
    CorpusManifest manifest(std::move(samples));
    write_manifest_csv(manifest, root / "manifest.csv", root);
    return manifest;
}

}  // namespace letterform
