#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "letterform/corpus.hpp"
#include "letterform/error.hpp"
#include "letterform/fusion.hpp"
#include "letterform/labels.hpp"

namespace letterform {

struct PredictionRow {
    std::string sample_id;
    DualDistribution dist;
};

inline std::string predictions_header() {
    std::string h = "sample_id";
    for (std::size_t i = 0; i < kNumLetters; ++i) h += ",p_letter_" + std::to_string(i);
    for (std::size_t i = 0; i < kNumPositions; ++i) h += ",p_pos_" + std::to_string(i);
    return h;
}

/// CSV `sample_id, p_letter_0..27, p_pos_0..3`, probabilities at full double precision.
inline void write_predictions(const std::vector<PredictionRow>& rows, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write predictions: " + path.string());
    out << predictions_header() << '\n';
    char buf[40];
    for (const auto& row : rows) {
        if (row.dist.letter.size() != kNumLetters || row.dist.position.size() != kNumPositions)
            throw Error("prediction for " + row.sample_id + " has the wrong number of classes");
        out << row.sample_id;
        for (const auto* v : {&row.dist.letter, &row.dist.position})
            for (double p : *v) {
                std::snprintf(buf, sizeof buf, ",%.17g", p);
                out << buf;
            }
        out << '\n';
    }
    if (!out) throw Error("failed writing predictions: " + path.string());
}

inline std::vector<PredictionRow> read_predictions(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open predictions: " + path.string());
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != predictions_header())
        throw Error(path.string() + " does not start with the predictions header");
    std::vector<PredictionRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 1 + kNumLetters + kNumPositions)
            throw Error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(1 + kNumLetters + kNumPositions) + " fields");
        PredictionRow row;
        row.sample_id = f[0];
        try {
            for (std::size_t i = 0; i < kNumLetters; ++i) row.dist.letter.push_back(std::stod(f[1 + i]));
            for (std::size_t i = 0; i < kNumPositions; ++i) row.dist.position.push_back(std::stod(f[1 + kNumLetters + i]));
        } catch (const std::exception&) {
            throw Error(path.string() + ":" + std::to_string(line_no) + ": malformed probability");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace letterform
