#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "letterform/augment.hpp"
#include "letterform/class_weights.hpp"
#include "letterform/config.hpp"
#include "letterform/corpus.hpp"
#include "letterform/early_stopping.hpp"
#include "letterform/image_io.hpp"
#include "letterform/loss.hpp"
#include "letterform/metrics.hpp"
#include "letterform/models.hpp"
#include "letterform/predictions.hpp"

namespace letterform {

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 100;
    std::size_t patience = 5;
    bool early_stopping = true;
    std::uint64_t seed = 0;
    std::optional<AugmentConfig> augmentation;
    std::string run_id = "run";
    bool keep_all_checkpoints = false;

    /// 1e-3 for the CNN and EfficientNet-B7, 1e-4 for both transformers.
    static TrainConfig defaults(ModelFamily family, std::uint64_t seed) {
        TrainConfig c;
        c.seed = seed;
        c.learning_rate =
            (family == ModelFamily::CustomCnn || family == ModelFamily::EfficientNetB7) ? 1e-3 : 1e-4;
        return c;
    }

    void validate() const {
        if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
        if (batch_size < 1) throw Error("batch_size must be at least 1");
        if (patience < 1) throw Error("patience must be at least 1");
        if (max_epochs < 1) throw Error("max_epochs must be at least 1");
        if (run_id.empty() || run_id.find('/') != std::string::npos) throw Error("run_id must be a plain name");
        if (augmentation) augmentation->validate();
    }
};

/// Reads a TrainConfig from flat key-value settings. `seed` is mandatory.
inline TrainConfig train_config_from(KeyValueConfig& kv, ModelFamily family) {
    TrainConfig c = TrainConfig::defaults(family, kv.require_uint("seed"));
    c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
    c.batch_size = kv.get_uint("batch_size", c.batch_size);
    c.max_epochs = kv.get_uint("max_epochs", c.max_epochs);
    c.patience = kv.get_uint("patience", c.patience);
    c.early_stopping = kv.get_bool("early_stopping", c.early_stopping);
    c.run_id = kv.get_string("run_id", c.run_id);
    c.keep_all_checkpoints = kv.get_bool("keep_all_checkpoints", c.keep_all_checkpoints);
    const bool augment = kv.get_bool("augmentation", false);
    auto aug = augment_config_from(kv);
    if (augment) c.augmentation = aug;
    c.validate();
    return c;
}

inline std::string train_config_text(const TrainConfig& c) {
    std::ostringstream out;
    out.precision(17);
    out << "seed = " << c.seed << '\n'
        << "learning_rate = " << c.learning_rate << '\n'
        << "batch_size = " << c.batch_size << '\n'
        << "max_epochs = " << c.max_epochs << '\n'
        << "patience = " << c.patience << '\n'
        << "early_stopping = " << (c.early_stopping ? "true" : "false") << '\n'
        << "run_id = " << c.run_id << '\n'
        << "keep_all_checkpoints = " << (c.keep_all_checkpoints ? "true" : "false") << '\n'
        << "augmentation = " << (c.augmentation ? "true" : "false") << '\n'
        << augment_config_text(c.augmentation.value_or(AugmentConfig{}));
    return out.str();
}

// ---------------------------------------------------------------------------
// Data

/// Standardized (128x128, not yet normalized) images with their labels.
struct LabelledImages {
    std::vector<std::string> ids;
    std::vector<GrayImage> images;
    std::vector<LetterPosition> labels;

    std::size_t size() const { return images.size(); }
    bool empty() const { return images.empty(); }
};

inline LabelledImages load_images(const CorpusManifest& manifest, const std::vector<std::string>& ids) {
    LabelledImages out;
    out.ids = ids;
    out.images.reserve(ids.size());
    for (const auto& id : ids) {
        const auto& s = manifest.at(id);
        out.images.push_back(standardize(read_gray(s.image_path)));
        out.labels.push_back(s.pair());
    }
    return out;
}

inline ClassWeights class_weights_for(const LabelledImages& data) {
    std::array<std::size_t, kNumLetters> letters{};
    std::array<std::size_t, kNumPositions> positions{};
    for (const auto& l : data.labels) {
        ++letters[l.letter.index()];
        ++positions[l.position.index()];
    }
    return {compute_class_weights(letters), compute_class_weights(positions)};
}

struct Batch {
    torch::Tensor images;
    torch::Tensor letters;
    torch::Tensor positions;
};

/// Normalized batch for the given indices; each image goes through the
/// augmentation pipeline first when `augment` is set.
inline Batch make_batch(const LabelledImages& data, std::span<const std::size_t> indices,
                        const AugmentConfig* augment = nullptr, RandomSource* rng = nullptr) {
    std::vector<ModelInput> inputs;
    inputs.reserve(indices.size());
    std::vector<int64_t> letters, positions;
    for (auto i : indices) {
        const GrayImage& img = data.images[i];
        inputs.push_back(normalize_and_expand(augment ? augment_pipeline(img, *rng, *augment) : img));
        letters.push_back(static_cast<int64_t>(data.labels[i].letter.index()));
        positions.push_back(static_cast<int64_t>(data.labels[i].position.index()));
    }
    return {to_batch(inputs), torch::tensor(letters, torch::kLong), torch::tensor(positions, torch::kLong)};
}

struct InferenceResult {
    std::vector<DualDistribution> probs;
    std::vector<std::size_t> letter_preds;
    std::vector<std::size_t> position_preds;
    double letter_loss = 0.0;
    double position_loss = 0.0;
    double letter_acc = 0.0;
    double position_acc = 0.0;

    double loss() const { return letter_loss + position_loss; }
};

/// Evaluation-mode pass over `data`. Losses use `weights` with the same
/// weighted-mean reduction as training, accumulated over the whole set.
inline InferenceResult run_inference(DualHeadModel& model, const LabelledImages& data, const ClassWeights& weights,
                                     std::size_t batch_size = 64) {
    model.eval();
    torch::NoGradGuard no_grad;
    InferenceResult r;
    const auto wl = weights_tensor(weights.letter), wp = weights_tensor(weights.position);
    double num_l = 0, den_l = 0, num_p = 0, den_p = 0;
    std::size_t correct_l = 0, correct_p = 0;
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    const auto dtype = model.parameters().front().scalar_type();
    for (std::size_t start = 0; start < idx.size(); start += batch_size) {
        const auto count = std::min(batch_size, idx.size() - start);
        auto batch = make_batch(data, std::span(idx).subspan(start, count));
        auto logits = model.forward(batch.images.to(dtype));
        auto probs = logits_to_distributions(logits);
        auto accumulate = [](const torch::Tensor& lg, const torch::Tensor& y, const torch::Tensor& w, double& num, double& den) {
            auto nll = -torch::log_softmax(lg.to(torch::kDouble), 1).gather(1, y.unsqueeze(1)).squeeze(1);
            auto wy = w.index_select(0, y);
            num += (wy * nll).sum().item<double>();
            den += wy.sum().item<double>();
        };
        accumulate(logits.letter, batch.letters, wl, num_l, den_l);
        accumulate(logits.position, batch.positions, wp, num_p, den_p);
        for (std::size_t i = 0; i < count; ++i) {
            const auto& label = data.labels[start + i];
            const auto pl = argmax(probs[i].letter), pp = argmax(probs[i].position);
            r.letter_preds.push_back(pl);
            r.position_preds.push_back(pp);
            correct_l += pl == label.letter.index();
            correct_p += pp == label.position.index();
            r.probs.push_back(std::move(probs[i]));
        }
    }
    const double n = static_cast<double>(std::max<std::size_t>(data.size(), 1));
    r.letter_loss = den_l > 0 ? num_l / den_l : 0.0;
    r.position_loss = den_p > 0 ? num_p / den_p : 0.0;
    r.letter_acc = static_cast<double>(correct_l) / n;
    r.position_acc = static_cast<double>(correct_p) / n;
    return r;
}

inline EvalReport report_for(const LabelledImages& data, const InferenceResult& r, bool with_loss = true) {
    std::optional<TaskLosses> losses;
    if (with_loss) losses = TaskLosses{r.letter_loss, r.position_loss};
    return build_report(data.labels, r.letter_preds, r.position_preds, losses);
}

inline std::vector<PredictionRow> prediction_rows(const LabelledImages& data, const InferenceResult& r) {
    std::vector<PredictionRow> rows;
    for (std::size_t i = 0; i < data.size(); ++i) rows.push_back({data.ids[i], r.probs[i]});
    return rows;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr const char* kHistoryHeader = "epoch,train_loss,val_loss,val_letter_acc,val_position_acc,avg_acc";

inline std::string history_row(const EpochRecord& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g", r.epoch, r.train_loss, r.val_loss,
                  r.val_letter_acc, r.val_position_acc, r.avg_acc);
    return buf;
}

inline void write_history(std::span<const EpochRecord> history, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << kHistoryHeader << '\n';
    for (const auto& r : history) out << history_row(r) << '\n';
}

inline std::vector<EpochRecord> read_history(const fs::path& path) {
    std::vector<EpochRecord> out;
    for (const auto& f : detail::read_csv_rows(path, kHistoryHeader)) {
        if (f.size() != 6) throw Error("malformed row in " + path.string());
        out.push_back({std::stoul(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5])});
    }
    return out;
}

/// Writes model.pt (named tensors), spec.json and metrics.csv into `dir`.
inline void save_checkpoint(DualHeadModel& model, const EpochRecord& record, const fs::path& dir) {
    fs::create_directories(dir);
    save_tensor_dict(model.named_state(), dir / "model.pt");
    write_model_spec(model.spec(), dir / "spec.json");
    write_history(std::span(&record, 1), dir / "metrics.csv");
}

/// Rebuilds the architecture from spec.json and restores model.pt. ViT-B/16
/// checkpoints carry their resolved shape and need no archive; the scripted
/// EfficientNet backbone is re-read from spec.weights for its graph.
inline ModelPtr load_checkpoint(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error("checkpoint directory not found: " + dir.string());
    const auto spec = read_model_spec(dir / "spec.json");
    ModelPtr model;
    switch (spec.family) {
        case ModelFamily::VitB16: model = std::make_shared<VitBackboneModel>(spec); break;
        default: model = build_model(spec); break;
    }
    load_named_state(*model, ParameterArchive{dir / "model.pt"}.tensors(), "checkpoint " + dir.string());
    model->eval();
    return model;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainHooks {
    /// Called after each epoch's record is appended; return true to stop.
    std::function<bool(const EpochRecord&, DualHeadModel&)> after_epoch;
    std::function<void(const std::string&)> log;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    fs::path run_dir;
    fs::path best_dir;
    ModelPtr model;  // holds the best epoch's weights
    bool stopped_early = false;
};

/// Multi-task training of an already-built model. Checkpoints go to
/// `out_dir/checkpoints/<run_id>/epoch_<k>/`; the selected epoch is copied
/// to `best/` and reloaded into the returned model.
inline TrainResult train_model(ModelPtr model, const LabelledImages& train_set, const LabelledImages& val_set,
                               const TrainConfig& cfg, const fs::path& out_dir, const TrainHooks& hooks = {}) {
    cfg.validate();
    if (train_set.empty()) throw Error("training split is empty");
    if (val_set.empty()) throw Error("validation split is empty");

    TrainResult result;
    result.run_dir = out_dir / "checkpoints" / cfg.run_id;
    fs::create_directories(result.run_dir);
    {
        std::ofstream(result.run_dir / "train_config.txt") << train_config_text(cfg);
        write_model_spec(model->spec(), result.run_dir / "spec.json");
    }

    const ClassWeights weights = class_weights_for(train_set);
    torch::optim::Adam optimizer(model->trainable_parameters(),
                                 torch::optim::AdamOptions(cfg.learning_rate).betas({0.9, 0.999}).eps(1e-8).weight_decay(0.0));
    const auto dtype = model->parameters().front().scalar_type();

    RandomSource order_rng(RandomSource::mix(cfg.seed ^ 0x5eedULL));
    RandomSource augment_rng(RandomSource::mix(cfg.seed ^ 0xa06ULL));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    auto epoch_dir = [&](std::size_t e) { return result.run_dir / ("epoch_" + std::to_string(e)); };

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        model->train();
        order_rng.shuffle(std::span(order));
        double loss_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
            const auto count = std::min(cfg.batch_size, order.size() - start);
            auto batch = make_batch(train_set, std::span(order).subspan(start, count),
                                    cfg.augmentation ? &*cfg.augmentation : nullptr, &augment_rng);
            optimizer.zero_grad();
            auto logits = model->forward(batch.images.to(dtype));
            auto loss = multitask_loss(logits, batch.letters, batch.positions, weights).total;
            const double value = loss.item<double>();
            if (!std::isfinite(value))
                throw Error("training diverged (non-finite loss) at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index));
            loss.backward();
            optimizer.step();
            loss_sum += value * static_cast<double>(count);
        }

        const auto val = run_inference(*model, val_set, weights);
        const auto record = EpochRecord::make(epoch, loss_sum / static_cast<double>(train_set.size()), val.loss(),
                                              val.letter_acc, val.position_acc);
        result.history.push_back(record);
        save_checkpoint(*model, record, epoch_dir(epoch));
        write_history(result.history, result.run_dir / "history.csv");
        if (hooks.log) hooks.log(history_row(record));

        const std::size_t best = select_best(result.history);
        if (!cfg.keep_all_checkpoints)
            for (const auto& r : result.history)
                if (r.epoch != best && r.epoch != epoch) fs::remove_all(epoch_dir(r.epoch));

        if (hooks.after_epoch && hooks.after_epoch(record, *model)) break;
        if (cfg.early_stopping && early_stop(result.history, cfg.patience)) {
            result.stopped_early = true;
            break;
        }
    }

    result.best_epoch = select_best(result.history);
    if (!cfg.keep_all_checkpoints)
        for (const auto& r : result.history)
            if (r.epoch != result.best_epoch) fs::remove_all(epoch_dir(r.epoch));
    result.best_dir = result.run_dir / "best";
    fs::remove_all(result.best_dir);
    fs::copy(epoch_dir(result.best_epoch), result.best_dir, fs::copy_options::recursive);
    load_named_state(*model, ParameterArchive{result.best_dir / "model.pt"}.tensors(), "best checkpoint");
    model->eval();
    result.model = std::move(model);
    return result;
}

/// Seeds the runtime, builds `spec`, loads the split images and trains.
inline TrainResult train(const ModelSpec& spec, const CorpusManifest& manifest, const SplitManifest& splits,
                         const TrainConfig& cfg, const fs::path& out_dir, const TrainHooks& hooks = {}) {
    torch::manual_seed(cfg.seed);
    auto model = build_model(spec);
    const auto train_set = load_images(manifest, splits.train);
    const auto val_set = load_images(manifest, splits.validation);
    return train_model(std::move(model), train_set, val_set, cfg, out_dir, hooks);
}

}  // namespace letterform
