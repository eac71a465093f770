#pragma once

#include <vector>

#include <torch/torch.h>

#include "letterform/class_weights.hpp"
#include "letterform/error.hpp"
#include "letterform/models.hpp"

namespace letterform {

/// Weighted cross-entropy with weighted-mean reduction:
/// sum_i w[y_i] * nll_i / sum_i w[y_i]. A batch whose labels all carry zero
/// weight contributes zero.
inline torch::Tensor weighted_cross_entropy(const torch::Tensor& logits, const torch::Tensor& labels,
                                            const torch::Tensor& class_weights) {
    const auto k = logits.size(1);
    if (labels.numel() != logits.size(0)) throw Error("logits and labels disagree on batch size");
    if (labels.numel() > 0 && (labels.min().item<int64_t>() < 0 || labels.max().item<int64_t>() >= k))
        throw Error("label out of range for " + std::to_string(k) + " classes");
    if (class_weights.numel() != k) throw Error("class weight vector has the wrong length");

    auto nll = -torch::log_softmax(logits, 1).gather(1, labels.unsqueeze(1)).squeeze(1);
    auto w = class_weights.to(logits.dtype()).index_select(0, labels);
    auto denom = w.sum();
    if (denom.item<double>() <= 0.0) return (nll * 0.0).sum();
    return (w * nll).sum() / denom;
}

inline torch::Tensor weights_tensor(const std::vector<double>& w) {
    return torch::tensor(w, torch::kDouble);
}

struct MultitaskLoss {
    torch::Tensor total;
    torch::Tensor letter;
    torch::Tensor position;
};

/// Sum of the letter and position weighted cross-entropies.
inline MultitaskLoss multitask_loss(const DualLogits& logits, const torch::Tensor& letter_labels,
                                    const torch::Tensor& position_labels, const ClassWeights& weights) {
    MultitaskLoss l;
    l.letter = weighted_cross_entropy(logits.letter, letter_labels, weights_tensor(weights.letter));
    l.position = weighted_cross_entropy(logits.position, position_labels, weights_tensor(weights.position));
    l.total = l.letter + l.position;
    return l;
}

}  // namespace letterform
