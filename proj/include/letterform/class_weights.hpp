#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "letterform/error.hpp"

namespace letterform {

/// Inverse-frequency weights w_c = N / (K * count_c), where K counts only the
/// classes that occur. Absent classes get weight 0 and drop out of the loss.
inline std::vector<double> compute_class_weights(std::span<const std::size_t> counts) {
    std::size_t total = 0, present = 0;
    for (auto c : counts) {
        total += c;
        if (c > 0) ++present;
    }
    if (present == 0) throw Error("class weights need at least one class with a positive count");

    std::vector<double> w(counts.size(), 0.0);
    for (std::size_t i = 0; i < counts.size(); ++i)
        if (counts[i] > 0)
            w[i] = static_cast<double>(total) / (static_cast<double>(present) * static_cast<double>(counts[i]));
    return w;
}

/// Same, with the caller's sample total checked against the counts.
inline std::vector<double> compute_class_weights(std::span<const std::size_t> counts, std::size_t n) {
    std::size_t total = 0;
    for (auto c : counts) total += c;
    if (total != n)
        throw Error("class counts sum to " + std::to_string(total) + " but N = " + std::to_string(n));
    return compute_class_weights(counts);
}

/// Letter and position weight vectors, computed once from the training split.
struct ClassWeights {
    std::vector<double> letter;
    std::vector<double> position;
};

}  // namespace letterform
