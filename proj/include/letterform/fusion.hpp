#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "letterform/error.hpp"
#include "letterform/labels.hpp"

namespace letterform {

/// Per-sample class probabilities from one dual-head model.
struct DualDistribution {
    std::vector<double> letter;    // kNumLetters entries
    std::vector<double> position;  // kNumPositions entries
};

inline constexpr double kDefaultFusionEps = 1e-8;
inline constexpr double kDistributionTolerance = 1e-6;

/// Rejects vectors that are empty, non-finite, negative, or whose mass is not 1 +- tol.
inline void validate_distribution(std::span<const double> probs, double tol = kDistributionTolerance) {
    if (probs.empty()) throw Error("empty probability vector");
    double sum = 0.0;
    for (double p : probs) {
        if (!std::isfinite(p) || p < 0.0) throw Error("probability vector has a negative or non-finite entry");
        sum += p;
    }
    if (std::abs(sum - 1.0) > tol) throw Error("probability vector sums to " + std::to_string(sum) + ", not 1");
}

/// Lowest index among the maxima.
inline std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Model confidence: the largest class probability.
inline double confidence(std::span<const double> probs) {
    validate_distribution(probs);
    return *std::max_element(probs.begin(), probs.end());
}

/// Confidence-weighted average (c_a p_a + c_b p_b) / (c_a + c_b + eps).
inline std::vector<double> fuse(std::span<const double> p_a, std::span<const double> p_b,
                                double eps = kDefaultFusionEps) {
    if (p_a.size() != p_b.size())
        throw Error("cannot fuse distributions of different lengths (" + std::to_string(p_a.size()) + " vs " +
                    std::to_string(p_b.size()) + ")");
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw Error("fusion eps must be finite and non-negative");
    const double c_a = confidence(p_a);
    const double c_b = confidence(p_b);
    const double denom = c_a + c_b + eps;
    std::vector<double> out(p_a.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = (c_a * p_a[k] + c_b * p_b[k]) / denom;
    return out;
}

struct FusionResult {
    std::vector<double> ensemble_letter;
    std::vector<double> ensemble_position;
    std::size_t letter_class = 0;
    std::size_t position_class = 0;
    // c_letter(E), c_letter(V), c_position(E), c_position(V)
    std::array<double, 4> confidences{};
};

/// Fuses the two tasks independently and takes the per-task argmax.
/// `first` plays the CNN-backbone role and `second` the transformer role; the
/// rule itself is symmetric.
inline FusionResult ensemble_predict(const DualDistribution& first, const DualDistribution& second,
                                     double eps = kDefaultFusionEps) {
    FusionResult r;
    r.ensemble_letter = fuse(first.letter, second.letter, eps);
    r.ensemble_position = fuse(first.position, second.position, eps);
    r.letter_class = argmax(r.ensemble_letter);
    r.position_class = argmax(r.ensemble_position);
    r.confidences = {confidence(first.letter), confidence(second.letter), confidence(first.position),
                     confidence(second.position)};
    return r;
}

/// The two ensemble members: E (convolutional backbone) and V (vision transformer).
struct FusionInput {
    DualDistribution dist_e;
    DualDistribution dist_v;
};

inline FusionResult ensemble_predict(const FusionInput& input, double eps = kDefaultFusionEps) {
    return ensemble_predict(input.dist_e, input.dist_v, eps);
}

}  // namespace letterform
