#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "letterform/corpus.hpp"
#include "letterform/error.hpp"
#include "letterform/labels.hpp"

namespace letterform {

/// K x K counts, rows = true class, columns = predicted class.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t k = 0) : k_(k), counts_(k * k, 0) {}

    std::size_t classes() const { return k_; }
    std::size_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * k_ + pred]; }
    std::size_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * k_ + pred]; }

    std::size_t total() const {
        std::size_t t = 0;
        for (auto c : counts_) t += c;
        return t;
    }
    std::size_t trace() const {
        std::size_t t = 0;
        for (std::size_t i = 0; i < k_; ++i) t += at(i, i);
        return t;
    }
    std::size_t support(std::size_t truth) const {
        std::size_t t = 0;
        for (std::size_t p = 0; p < k_; ++p) t += at(truth, p);
        return t;
    }
    std::size_t predicted(std::size_t pred) const {
        std::size_t t = 0;
        for (std::size_t r = 0; r < k_; ++r) t += at(r, pred);
        return t;
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
        if (other.k_ != k_) throw Error("cannot add confusion matrices of different sizes");
        for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
        return *this;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t k_;
    std::vector<std::size_t> counts_;
};

inline ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> pred, std::size_t k) {
    if (truth.size() != pred.size())
        throw Error("label sequences differ in length (" + std::to_string(truth.size()) + " vs " +
                    std::to_string(pred.size()) + ")");
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= k || pred[i] >= k)
            throw Error("label out of range at index " + std::to_string(i) + " (K=" + std::to_string(k) + ")");
        ++cm.at(truth[i], pred[i]);
    }
    return cm;
}

enum class Averaging { Weighted, Macro };

struct SummaryMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Accuracy plus per-class precision/recall/F1 averaged over classes with
/// non-zero support, weighted by support (default) or uniformly (macro).
inline SummaryMetrics summary_metrics(const ConfusionMatrix& cm, Averaging mode = Averaging::Weighted) {
    const std::size_t total = cm.total();
    if (total == 0) throw Error("cannot summarize an empty confusion matrix");

    SummaryMetrics m;
    m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    double weight_sum = 0.0;
    for (std::size_t c = 0; c < cm.classes(); ++c) {
        const std::size_t support = cm.support(c);
        if (support == 0) continue;
        const double tp = static_cast<double>(cm.at(c, c));
        const std::size_t predicted = cm.predicted(c);
        const double precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
        const double recall = tp / static_cast<double>(support);
        const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        const double w = mode == Averaging::Weighted ? static_cast<double>(support) : 1.0;
        m.precision += w * precision;
        m.recall += w * recall;
        m.f1 += w * f1;
        weight_sum += w;
    }
    m.precision /= weight_sum;
    m.recall /= weight_sum;
    m.f1 /= weight_sum;
    return m;
}

struct PairAccuracy {
    LetterPosition pair;
    std::size_t support = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
};

struct LetterAccuracy {
    LetterClass letter;
    std::size_t support = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
};

/// Joint correctness per observed (letter, position) pair: a sample counts
/// only when both heads are right. Rows are ordered by letter then position index.
inline std::vector<PairAccuracy> per_pair_accuracy(std::span<const LetterPosition> truth,
                                                   std::span<const std::size_t> letter_preds,
                                                   std::span<const std::size_t> position_preds) {
    if (truth.size() != letter_preds.size() || truth.size() != position_preds.size())
        throw Error("per-pair accuracy needs aligned truth and prediction sequences");
    if (truth.empty()) throw Error("per-pair accuracy of an empty test set");

    auto key = [](LetterPosition p) { return p.letter.index() * kNumPositions + p.position.index(); };
    std::map<std::size_t, PairAccuracy> rows;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        auto& row = rows[key(truth[i])];
        row.pair = truth[i];
        ++row.support;
        if (letter_preds[i] == truth[i].letter.index() && position_preds[i] == truth[i].position.index())
            ++row.correct;
    }
    std::vector<PairAccuracy> out;
    out.reserve(rows.size());
    for (auto& [k, row] : rows) {
        row.accuracy = static_cast<double>(row.correct) / static_cast<double>(row.support);
        out.push_back(row);
    }
    return out;
}

/// Letter-head accuracy per true letter; letters absent from the test set have no row.
inline std::vector<LetterAccuracy> per_letter_accuracy(std::span<const LetterClass> truth,
                                                       std::span<const std::size_t> letter_preds) {
    if (truth.size() != letter_preds.size())
        throw Error("per-letter accuracy needs aligned truth and prediction sequences");
    std::array<LetterAccuracy, kNumLetters> rows{};
    for (std::size_t i = 0; i < truth.size(); ++i) {
        auto& row = rows[truth[i].index()];
        ++row.support;
        if (letter_preds[i] == truth[i].index()) ++row.correct;
    }
    std::vector<LetterAccuracy> out;
    for (std::size_t l = 0; l < kNumLetters; ++l) {
        if (rows[l].support == 0) continue;
        rows[l].letter = LetterClass(l);
        rows[l].accuracy = static_cast<double>(rows[l].correct) / static_cast<double>(rows[l].support);
        out.push_back(rows[l]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report

struct TaskMetrics {
    SummaryMetrics summary;
    std::optional<double> test_loss;  // absent for parameter-free ensembles
};

struct EvalReport {
    TaskMetrics letter;
    TaskMetrics position;
    std::vector<LetterAccuracy> per_letter;
    std::vector<PairAccuracy> per_pair;
};

struct TaskLosses {
    double letter = 0.0;
    double position = 0.0;
};

/// Assembles the full report from aligned truth and predictions.
inline EvalReport build_report(std::span<const LetterPosition> truth, std::span<const std::size_t> letter_preds,
                               std::span<const std::size_t> position_preds, std::optional<TaskLosses> losses = {},
                               Averaging mode = Averaging::Weighted) {
    std::vector<std::size_t> true_letters, true_positions;
    std::vector<LetterClass> letters;
    for (const auto& t : truth) {
        true_letters.push_back(t.letter.index());
        true_positions.push_back(t.position.index());
        letters.push_back(t.letter);
    }
    EvalReport r;
    r.letter.summary = summary_metrics(confusion(true_letters, letter_preds, kNumLetters), mode);
    r.position.summary = summary_metrics(confusion(true_positions, position_preds, kNumPositions), mode);
    if (losses) {
        r.letter.test_loss = losses->letter;
        r.position.test_loss = losses->position;
    }
    r.per_letter = per_letter_accuracy(letters, letter_preds);
    r.per_pair = per_pair_accuracy(truth, letter_preds, position_preds);
    return r;
}

/// Fixed four-decimal rendering used in every table ("0.9638").
inline std::string format_rate(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

/// Percent rendering with two decimals ("96.38%").
inline std::string format_percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
    return buf;
}

namespace detail {

inline nlohmann::ordered_json task_json(const TaskMetrics& t) {
    nlohmann::ordered_json j;
    j["accuracy"] = t.summary.accuracy;
    j["precision"] = t.summary.precision;
    j["recall"] = t.summary.recall;
    j["f1"] = t.summary.f1;
    j["test_loss"] = t.test_loss ? nlohmann::ordered_json(*t.test_loss) : nlohmann::ordered_json(nullptr);
    return j;
}

inline TaskMetrics task_from_json(const nlohmann::json& j) {
    TaskMetrics t;
    t.summary.accuracy = j.at("accuracy").get<double>();
    t.summary.precision = j.at("precision").get<double>();
    t.summary.recall = j.at("recall").get<double>();
    t.summary.f1 = j.at("f1").get<double>();
    if (j.contains("test_loss") && !j.at("test_loss").is_null()) t.test_loss = j.at("test_loss").get<double>();
    return t;
}

inline std::string loss_cell(const std::optional<double>& loss) { return loss ? format_rate(*loss) : "/"; }

inline std::vector<std::vector<std::string>> read_csv_rows(const fs::path& path, const std::string& header) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line) != header)
        throw Error(path.string() + " must start with header \"" + header + "\"");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        line = trim(line);
        if (!line.empty()) rows.push_back(split_csv_line(line));
    }
    return rows;
}

}  // namespace detail

inline std::string report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["overall"]["letter"] = detail::task_json(r.letter);
    j["overall"]["position"] = detail::task_json(r.position);
    j["per_letter"] = nlohmann::ordered_json::array();
    for (const auto& row : r.per_letter)
        j["per_letter"].push_back(
            {{"letter", row.letter.name()}, {"support", row.support}, {"correct", row.correct}, {"accuracy", row.accuracy}});
    j["per_pair"] = nlohmann::ordered_json::array();
    for (const auto& row : r.per_pair)
        j["per_pair"].push_back({{"letter", row.pair.letter.name()},
                                 {"position", std::string(1, row.pair.position.code())},
                                 {"support", row.support},
                                 {"correct", row.correct},
                                 {"accuracy", row.accuracy}});
    return j.dump(2) + "\n";
}

inline EvalReport report_from_json(const std::string& text) {
    EvalReport r;
    try {
        const auto j = nlohmann::json::parse(text);
        r.letter = detail::task_from_json(j.at("overall").at("letter"));
        r.position = detail::task_from_json(j.at("overall").at("position"));
        for (const auto& row : j.at("per_letter"))
            r.per_letter.push_back({LetterClass::parse(row.at("letter").get<std::string>()), row.at("support").get<std::size_t>(),
                                    row.at("correct").get<std::size_t>(), row.at("accuracy").get<double>()});
        for (const auto& row : j.at("per_pair"))
            r.per_pair.push_back({{LetterClass::parse(row.at("letter").get<std::string>()),
                                   PositionClass::parse(row.at("position").get<std::string>())},
                                  row.at("support").get<std::size_t>(),
                                  row.at("correct").get<std::size_t>(),
                                  row.at("accuracy").get<double>()});
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed report: ") + e.what());
    }
    return r;
}

inline constexpr const char* kOverallCsvHeader = "task,accuracy,precision,recall,f1,test_loss";
inline constexpr const char* kPerLetterCsvHeader = "letter,support,accuracy";
inline constexpr const char* kPerPairCsvHeader = "letter,position,support,accuracy";

enum class RateFormat { Fraction, Percent };

/// Writes report.csv (overall), per_letter.csv and per_pair.csv into `dir`.
inline void write_report_csv(const EvalReport& r, const fs::path& dir, RateFormat pair_format = RateFormat::Fraction) {
    fs::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw Error("cannot write " + (dir / name).string());
        return out;
    };
    {
        auto out = open("report.csv");
        out << kOverallCsvHeader << '\n';
        for (const auto& [name, t] : {std::pair{"letter", &r.letter}, std::pair{"position", &r.position}})
            out << name << ',' << format_rate(t->summary.accuracy) << ',' << format_rate(t->summary.precision) << ','
                << format_rate(t->summary.recall) << ',' << format_rate(t->summary.f1) << ','
                << detail::loss_cell(t->test_loss) << '\n';
    }
    {
        auto out = open("per_letter.csv");
        out << kPerLetterCsvHeader << '\n';
        for (const auto& row : r.per_letter)
            out << row.letter.name() << ',' << row.support << ',' << format_rate(row.accuracy) << '\n';
    }
    {
        auto out = open("per_pair.csv");
        out << kPerPairCsvHeader << '\n';
        for (const auto& row : r.per_pair)
            out << row.pair.letter.name() << ',' << row.pair.position.code() << ',' << row.support << ','
                << (pair_format == RateFormat::Percent ? format_percent(row.accuracy) : format_rate(row.accuracy))
                << '\n';
    }
}

/// Inverse of write_report_csv. Correct counts are recovered from support and
/// the rounded accuracy.
inline EvalReport read_report_csv(const fs::path& dir) {
    auto rate = [](const std::string& s) {
        if (!s.empty() && s.back() == '%') return std::stod(s.substr(0, s.size() - 1)) / 100.0;
        return std::stod(s);
    };
    EvalReport r;
    for (const auto& f : detail::read_csv_rows(dir / "report.csv", kOverallCsvHeader)) {
        if (f.size() != 6) throw Error("malformed row in report.csv");
        TaskMetrics t;
        t.summary = {rate(f[1]), rate(f[2]), rate(f[3]), rate(f[4])};
        if (f[5] != "/") t.test_loss = std::stod(f[5]);
        if (f[0] == "letter") r.letter = t;
        else if (f[0] == "position") r.position = t;
        else throw Error("unknown task \"" + f[0] + "\" in report.csv");
    }
    for (const auto& f : detail::read_csv_rows(dir / "per_letter.csv", kPerLetterCsvHeader)) {
        if (f.size() != 3) throw Error("malformed row in per_letter.csv");
        LetterAccuracy row{LetterClass::parse(f[0]), std::stoul(f[1]), 0, rate(f[2])};
        row.correct = static_cast<std::size_t>(std::lround(row.accuracy * static_cast<double>(row.support)));
        r.per_letter.push_back(row);
    }
    for (const auto& f : detail::read_csv_rows(dir / "per_pair.csv", kPerPairCsvHeader)) {
        if (f.size() != 4) throw Error("malformed row in per_pair.csv");
        PairAccuracy row{{LetterClass::parse(f[0]), PositionClass::parse(f[1])}, std::stoul(f[2]), 0, rate(f[3])};
        row.correct = static_cast<std::size_t>(std::lround(row.accuracy * static_cast<double>(row.support)));
        r.per_pair.push_back(row);
    }
    return r;
}

}  // namespace letterform
