#pragma once

#include <algorithm>
#include <cstddef>
#include <span>

#include "letterform/error.hpp"

namespace letterform {

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_letter_acc = 0.0;
    double val_position_acc = 0.0;
    double avg_acc = 0.0;

    static EpochRecord make(std::size_t epoch, double train_loss, double val_loss, double letter_acc,
                            double position_acc) {
        return {epoch, train_loss, val_loss, letter_acc, position_acc, (letter_acc + position_acc) / 2.0};
    }
};

/// True once the last `patience` epochs have all failed to beat the best
/// avg_acc seen before them (ties do not count as improvement).
inline bool early_stop(std::span<const EpochRecord> history, std::size_t patience) {
    if (history.empty()) throw Error("early_stop needs a non-empty history");
    if (patience == 0) throw Error("patience must be at least 1");
    if (history.size() <= patience) return false;

    const auto split = history.end() - static_cast<std::ptrdiff_t>(patience);
    double best_before = history.front().avg_acc;
    for (auto it = history.begin(); it != split; ++it) best_before = std::max(best_before, it->avg_acc);
    return std::all_of(split, history.end(), [&](const EpochRecord& r) { return r.avg_acc <= best_before; });
}

/// Epoch number of the earliest record with the highest avg_acc.
inline std::size_t select_best(std::span<const EpochRecord> history) {
    if (history.empty()) throw Error("select_best needs a non-empty history");
    auto best = history.begin();
    for (auto it = history.begin(); it != history.end(); ++it)
        if (it->avg_acc > best->avg_acc) best = it;
    return best->epoch;
}

}  // namespace letterform
