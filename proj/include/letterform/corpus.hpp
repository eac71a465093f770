#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "letterform/error.hpp"
#include "letterform/image_io.hpp"
#include "letterform/labels.hpp"
#include "letterform/random.hpp"

namespace letterform {

struct LetterSample {
    std::string sample_id;
    fs::path image_path;
    LetterClass letter;
    PositionClass position;

    LetterPosition pair() const { return {letter, position}; }
};

using PairCounts = std::map<LetterPosition, std::size_t>;

/// Immutable catalog of labelled letter images, ordered by
/// (letter index, position code, sample_id).
class CorpusManifest {
public:
    CorpusManifest() = default;

    explicit CorpusManifest(std::vector<LetterSample> samples) : samples_(std::move(samples)) {
        std::sort(samples_.begin(), samples_.end(), [](const LetterSample& a, const LetterSample& b) {
            if (a.letter != b.letter) return a.letter < b.letter;
            if (a.position.code() != b.position.code()) return a.position.code() < b.position.code();
            return a.sample_id < b.sample_id;
        });
        index_.reserve(samples_.size());
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            if (!index_.emplace(samples_[i].sample_id, i).second)
                throw Error("duplicate sample_id \"" + samples_[i].sample_id + "\"");
            ++pair_counts_[samples_[i].pair()];
        }
    }

    const std::vector<LetterSample>& samples() const { return samples_; }
    const PairCounts& pair_counts() const { return pair_counts_; }
    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }

    const LetterSample& at(const std::string& sample_id) const {
        auto it = index_.find(sample_id);
        if (it == index_.end()) throw Error("unknown sample_id \"" + sample_id + "\"");
        return samples_[it->second];
    }

    bool contains(const std::string& sample_id) const { return index_.contains(sample_id); }

private:
    std::vector<LetterSample> samples_;
    std::unordered_map<std::string, std::size_t> index_;
    PairCounts pair_counts_;
};

namespace detail {

// Cheap readability check: opens the file and matches the PNG/BMP signature.
inline void check_image_header(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::array<unsigned char, 8> sig{};
    if (!in || !in.read(reinterpret_cast<char*>(sig.data()), sig.size()))
        throw Error("unreadable image file: " + path.string());
    static constexpr std::array<unsigned char, 8> kPng{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    const bool png = sig == kPng;
    const bool bmp = sig[0] == 'B' && sig[1] == 'M';
    if (!png && !bmp) throw Error("unreadable image file (not PNG/BMP): " + path.string());
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

inline std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

}  // namespace detail

inline constexpr const char* kManifestHeader = "sample_id,image_path,letter,position";

/// Parses a manifest.csv; relative image paths resolve against `base_dir`.
inline CorpusManifest read_manifest_csv(const fs::path& csv_path, const fs::path& base_dir, bool check_images = true) {
    std::ifstream in(csv_path);
    if (!in) throw Error("cannot open manifest: " + csv_path.string());
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != kManifestHeader)
        throw Error("manifest " + csv_path.string() + " must start with header \"" + kManifestHeader + "\"");

    std::vector<LetterSample> samples;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 4)
            throw Error(csv_path.string() + ":" + std::to_string(line_no) + ": expected 4 fields");
        LetterSample s;
        s.sample_id = f[0];
        s.image_path = fs::path(f[1]).is_absolute() ? fs::path(f[1]) : base_dir / f[1];
        const auto letter = LetterClass::from_name(f[2]);
        if (!letter)
            throw Error(csv_path.string() + ":" + std::to_string(line_no) + ": unknown letter name \"" + f[2] + "\"");
        const auto position = PositionClass::from_code(f[3]);
        if (!position)
            throw Error(csv_path.string() + ":" + std::to_string(line_no) + ": invalid position code \"" + f[3] + "\"");
        s.letter = *letter;
        s.position = *position;
        if (check_images) detail::check_image_header(s.image_path);
        samples.push_back(std::move(s));
    }
    return CorpusManifest(std::move(samples));
}

/// Builds the manifest for a corpus directory. A root-level manifest.csv wins;
/// otherwise the `<letter>/<position>/<image>` layout supplies the labels and
/// the sample_id is the image path relative to root, without extension.
inline CorpusManifest load_manifest(const fs::path& root) {
    if (!fs::is_directory(root)) throw Error("corpus root is not a directory: " + root.string());
    if (fs::exists(root / "manifest.csv")) {
        auto manifest = read_manifest_csv(root / "manifest.csv", root);
        if (manifest.empty()) throw Error("no samples found in " + root.string());
        return manifest;
    }

    std::vector<LetterSample> samples;
    for (const auto& letter_dir : fs::directory_iterator(root)) {
        const std::string letter_name = letter_dir.path().filename().string();
        if (!letter_dir.is_directory() || letter_name.starts_with(".")) continue;
        const auto letter = LetterClass::from_name(letter_name);
        if (!letter) throw Error("unknown letter name \"" + letter_name + "\" at " + letter_dir.path().string());

        for (const auto& pos_dir : fs::directory_iterator(letter_dir.path())) {
            const std::string code = pos_dir.path().filename().string();
            if (code.starts_with(".")) continue;
            const auto position = PositionClass::from_code(code);
            if (!pos_dir.is_directory() || !position)
                throw Error("invalid position code \"" + code + "\" at " + pos_dir.path().string());

            for (const auto& file : fs::directory_iterator(pos_dir.path())) {
                if (!file.is_regular_file() || file.path().filename().string().starts_with(".")) continue;
                if (!is_supported_image(file.path()))
                    throw Error("unreadable image file (not PNG/BMP): " + file.path().string());
                detail::check_image_header(file.path());
                auto rel = fs::relative(file.path(), root);
                rel.replace_extension();
                samples.push_back({rel.generic_string(), file.path(), *letter, *position});
            }
        }
    }
    if (samples.empty()) throw Error("no samples found in " + root.string());
    return CorpusManifest(std::move(samples));
}

/// Writes manifest.csv with image paths relative to `base_dir` where possible.
inline void write_manifest_csv(const CorpusManifest& manifest, const fs::path& csv_path, const fs::path& base_dir) {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw Error("cannot write manifest: " + csv_path.string());
    out << kManifestHeader << '\n';
    for (const auto& s : manifest.samples()) {
        fs::path p = s.image_path;
        if (!base_dir.empty()) {
            std::error_code ec;
            auto rel = fs::relative(fs::absolute(p), fs::absolute(base_dir), ec);
            if (!ec && !rel.empty() && !rel.generic_string().starts_with("..")) p = rel;
        }
        out << s.sample_id << ',' << p.generic_string() << ',' << s.letter.name() << ',' << s.position.code() << '\n';
    }
    if (!out) throw Error("failed writing manifest: " + csv_path.string());
}

// ---------------------------------------------------------------------------
// Splits

struct SplitRatios {
    double train = 0.70;
    double validation = 0.10;
    double test = 0.20;

    std::array<double, 3> as_array() const { return {train, validation, test}; }
};

struct SplitManifest {
    std::uint64_t seed = 0;
    SplitRatios ratios;
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;

    friend bool operator==(const SplitManifest& a, const SplitManifest& b) {
        return a.seed == b.seed && a.ratios.as_array() == b.ratios.as_array() && a.train == b.train &&
               a.validation == b.validation && a.test == b.test;
    }
};

inline void validate_ratios(const SplitRatios& r) {
    const auto a = r.as_array();
    for (double v : a)
        if (!(v >= 0.0 && v <= 1.0)) throw Error("split ratios must lie in [0, 1]");
    const double sum = a[0] + a[1] + a[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw Error("split ratios must sum to 1 (got " + std::to_string(sum) + ")");
}

/// Per-split sample counts for one pair of size n. Singletons go to train and
/// pairs of two to train+test; larger pairs use largest-remainder rounding of
/// n * ratio, ties resolved in train, validation, test order.
inline std::array<std::size_t, 3> allocate_pair(std::size_t n, const SplitRatios& ratios) {
    if (n == 0) return {0, 0, 0};
    if (n == 1) return {1, 0, 0};
    if (n == 2) return {1, 0, 1};

    const auto r = ratios.as_array();
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        double quota = static_cast<double>(n) * r[k];
        const double nearest = std::round(quota);
        if (std::abs(quota - nearest) < 1e-9) quota = nearest;
        counts[k] = static_cast<std::size_t>(std::floor(quota));
        remainder[k] = quota - std::floor(quota);
        assigned += counts[k];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[order[i % 3]];
    return counts;
}

/// Pair-stratified partition: each (letter, position) pair is shuffled with a
/// stream derived from (seed, pair) and cut by `allocate_pair`. Lists come back
/// in manifest order.
inline SplitManifest stratified_split(const CorpusManifest& manifest, const SplitRatios& ratios, std::uint64_t seed) {
    validate_ratios(ratios);
    if (manifest.empty()) throw Error("cannot split an empty manifest");

    std::map<LetterPosition, std::vector<std::size_t>> by_pair;
    for (std::size_t i = 0; i < manifest.size(); ++i) by_pair[manifest.samples()[i].pair()].push_back(i);

    std::vector<int> assignment(manifest.size(), -1);
    for (auto& [pair, members] : by_pair) {
        const std::uint64_t key = pair.letter.index() * kNumPositions + pair.position.index();
        RandomSource rng(RandomSource::mix(seed ^ RandomSource::mix(key + 1)));
        rng.shuffle(std::span(members));
        const auto counts = allocate_pair(members.size(), ratios);
        std::size_t pos = 0;
        for (int k = 0; k < 3; ++k)
            for (std::size_t j = 0; j < counts[k]; ++j) assignment[members[pos++]] = k;
    }

    SplitManifest split;
    split.seed = seed;
    split.ratios = ratios;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& id = manifest.samples()[i].sample_id;
        switch (assignment[i]) {
            case 0: split.train.push_back(id); break;
            case 1: split.validation.push_back(id); break;
            default: split.test.push_back(id); break;
        }
    }
    return split;
}

inline std::string serialize_split(const SplitManifest& split) {
    nlohmann::ordered_json j;
    j["seed"] = split.seed;
    j["ratios"] = split.ratios.as_array();
    j["train"] = split.train;
    j["validation"] = split.validation;
    j["test"] = split.test;
    return j.dump(2) + "\n";
}

inline SplitManifest parse_split(const std::string& text) {
    SplitManifest split;
    try {
        const auto j = nlohmann::json::parse(text);
        split.seed = j.at("seed").get<std::uint64_t>();
        const auto r = j.at("ratios").get<std::vector<double>>();
        if (r.size() != 3) throw Error("split ratios must have three entries");
        split.ratios = {r[0], r[1], r[2]};
        split.train = j.at("train").get<std::vector<std::string>>();
        split.validation = j.at("validation").get<std::vector<std::string>>();
        split.test = j.at("test").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed split manifest: ") + e.what());
    }
    return split;
}

inline void write_split(const SplitManifest& split, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write split manifest: " + path.string());
    out << serialize_split(split);
}

inline SplitManifest read_split(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open split manifest: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_split(ss.str());
}

// ---------------------------------------------------------------------------
// Census

struct ClassCounts {
    std::array<std::size_t, kNumLetters> letters{};
    std::array<std::size_t, kNumPositions> positions{};
};

inline ClassCounts class_counts(const CorpusManifest& manifest, const std::vector<std::string>& subset) {
    ClassCounts counts;
    for (const auto& id : subset) {
        const auto& s = manifest.at(id);
        ++counts.letters[s.letter.index()];
        ++counts.positions[s.position.index()];
    }
    return counts;
}

}  // namespace letterform
