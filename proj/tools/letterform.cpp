#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "letterform/config.hpp"
#include "letterform/corpus.hpp"
#include "letterform/fusion.hpp"
#include "letterform/metrics.hpp"
#include "letterform/model_spec.hpp"
#include "letterform/predictions.hpp"
#include "letterform/synthetic.hpp"
#include "letterform/training.hpp"

namespace fs = std::filesystem;
using namespace letterform;

namespace {

// Settings for one command: the --config file, overlaid by every option given
// on the command line under its key name. Unused keys are rejected.
struct Settings {
    std::optional<std::string> config_file;
    std::vector<std::pair<std::string, CLI::Option*>> keyed;

    KeyValueConfig resolve() const {
        KeyValueConfig kv;
        if (config_file) {
            require_exists(*config_file, "config file");
            kv = KeyValueConfig::read(*config_file);
        }
        for (const auto& [key, opt] : keyed) {
            if (opt->count() == 0) continue;
            kv.set(key, opt->get_expected_max() == 0 ? std::string("true") : opt->as<std::string>());
        }
        return kv;
    }

    static void require_exists(const fs::path& p, const std::string& what) {
        if (!fs::exists(p)) throw Error(what + " not found: " + p.string());
    }
};

struct Options {
    std::string seed, config, out;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* config_opt = nullptr;
    CLI::Option* out_opt = nullptr;
};

fs::path require_path(KeyValueConfig& kv, const std::string& key, const std::string& what) {
    const auto value = kv.get_string(key, "");
    if (value.empty()) throw Error("missing required setting `" + key + "` (" + what + ")");
    return value;
}

fs::path existing_path(KeyValueConfig& kv, const std::string& key, const std::string& what) {
    auto p = require_path(kv, key, what);
    Settings::require_exists(p, what);
    return p;
}

void write_text(const fs::path& path, const std::string& text) {
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("failed writing " + path.string());
}

std::string kv_line(const std::string& key, const std::string& value) { return key + " = " + value + "\n"; }

std::string kv_line(const std::string& key, double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return kv_line(key, std::string(buf));
}

CorpusManifest read_manifest_file(const fs::path& csv) {
    Settings::require_exists(csv, "manifest");
    return read_manifest_csv(csv, csv.parent_path());
}

/// The manifest defaults to manifest.csv beside the split file.
fs::path manifest_for(KeyValueConfig& kv, const fs::path& splits) {
    const auto given = kv.get_string("manifest", "");
    return given.empty() ? splits.parent_path() / "manifest.csv" : fs::path(given);
}

const std::vector<std::string>& subset_ids(const SplitManifest& split, const std::string& subset) {
    if (subset == "train") return split.train;
    if (subset == "validation") return split.validation;
    if (subset == "test") return split.test;
    throw Error("subset must be train, validation or test, got \"" + subset + "\"");
}

std::vector<LetterPosition> truth_for(const CorpusManifest& manifest, const std::vector<std::string>& ids) {
    std::vector<LetterPosition> out;
    for (const auto& id : ids) out.push_back(manifest.at(id).pair());
    return out;
}

void write_report_files(const EvalReport& report, const fs::path& out) {
    write_text(out / "report.json", report_to_json(report));
    write_report_csv(report, out);
}

// ---------------------------------------------------------------------------
// Commands

int cmd_prepare(KeyValueConfig kv) {
    const auto out = require_path(kv, "out", "output directory");
    const bool synthetic = kv.get_bool("synthetic", false);
    std::string resolved = kv_line("out", out.string()) + kv_line("synthetic", synthetic ? "true" : "false");
    CorpusManifest manifest;
    if (synthetic) {
        auto cfg = SyntheticConfig::defaults(kv.require_uint("seed"));
        cfg.samples_per_pair = kv.get_uint("samples_per_pair", cfg.samples_per_pair);
        kv.finish();
        fs::create_directories(out);
        manifest = generate_synthetic_corpus(out, cfg);
        resolved += kv_line("seed", std::to_string(cfg.seed)) +
                    kv_line("samples_per_pair", std::to_string(cfg.samples_per_pair));
    } else {
        const auto root = fs::absolute(existing_path(kv, "root", "corpus root"));
        kv.finish();
        manifest = load_manifest(root);
        fs::create_directories(out);
        write_manifest_csv(manifest, out / "manifest.csv", out);
        resolved += kv_line("root", root.string());
    }
    write_text(out / "prepare_config.txt", resolved);
    std::cout << "manifest: " << manifest.size() << " samples, " << manifest.pair_counts().size() << " pairs -> "
              << (out / "manifest.csv").string() << '\n';
    return 0;
}

int cmd_split(KeyValueConfig kv) {
    const auto manifest_path = existing_path(kv, "manifest", "manifest");
    const auto out = require_path(kv, "out", "output directory");
    const auto seed = kv.require_uint("seed");
    SplitRatios ratios;
    ratios.train = kv.get_double("train_ratio", ratios.train);
    ratios.validation = kv.get_double("validation_ratio", ratios.validation);
    ratios.test = kv.get_double("test_ratio", ratios.test);
    kv.finish();
    validate_ratios(ratios);

    const auto manifest = read_manifest_file(manifest_path);
    const auto split = stratified_split(manifest, ratios, seed);
    fs::create_directories(out);
    write_split(split, out / "splits.json");
    write_text(out / "split_config.txt", kv_line("manifest", manifest_path.string()) + kv_line("out", out.string()) +
                                             kv_line("seed", std::to_string(seed)) + kv_line("train_ratio", ratios.train) +
                                             kv_line("validation_ratio", ratios.validation) +
                                             kv_line("test_ratio", ratios.test));
    std::cout << "split: " << split.train.size() << " train / " << split.validation.size() << " validation / "
              << split.test.size() << " test -> " << (out / "splits.json").string() << '\n';
    return 0;
}

int cmd_train(KeyValueConfig kv) {
    const auto spec_path = existing_path(kv, "spec", "model spec");
    const auto splits_path = existing_path(kv, "splits", "split file");
    const auto manifest_path = manifest_for(kv, splits_path);
    const auto out = require_path(kv, "out", "output directory");

    auto spec = read_model_spec(spec_path);
    if (!spec.weights.empty() && fs::path(spec.weights).is_relative()) {
        const auto beside = spec_path.parent_path() / spec.weights;
        if (!fs::exists(spec.weights) && fs::exists(beside)) spec.weights = beside.string();
    }
    if (!spec.weights.empty()) {
        Settings::require_exists(spec.weights, "pretrained weights archive");
        spec.weights = fs::absolute(spec.weights).string();
    }
    const auto cfg = train_config_from(kv, spec.family);
    kv.finish();

    const auto manifest = read_manifest_file(manifest_path);
    const auto splits = read_split(splits_path);
    fs::create_directories(out);
    write_text(out / "train_run_config.txt", kv_line("spec", spec_path.string()) + kv_line("splits", splits_path.string()) +
                                                 kv_line("manifest", manifest_path.string()) +
                                                 kv_line("out", out.string()) + train_config_text(cfg));

    TrainHooks hooks;
    hooks.log = [](const std::string& row) { std::cout << row << '\n' << std::flush; };
    std::cout << kHistoryHeader << '\n';
    const auto result = train(spec, manifest, splits, cfg, out, hooks);
    std::cout << "best epoch " << result.best_epoch << (result.stopped_early ? " (early stop)" : "") << " -> "
              << result.best_dir.string() << '\n';
    return 0;
}

int cmd_evaluate(KeyValueConfig kv) {
    const auto checkpoint = existing_path(kv, "checkpoint", "checkpoint directory");
    const auto splits_path = existing_path(kv, "splits", "split file");
    const auto manifest_path = manifest_for(kv, splits_path);
    const auto out = require_path(kv, "out", "output directory");
    const auto subset = kv.get_string("subset", "test");
    const auto batch_size = kv.get_uint("batch_size", 64);
    kv.finish();
    if (batch_size < 1) throw Error("batch_size must be at least 1");

    const auto manifest = read_manifest_file(manifest_path);
    const auto splits = read_split(splits_path);
    const auto& ids = subset_ids(splits, subset);
    if (ids.empty()) throw Error("the " + subset + " split is empty");

    auto model = load_checkpoint(checkpoint);
    const auto counts = class_counts(manifest, splits.train.empty() ? ids : splits.train);
    const ClassWeights weights{compute_class_weights(counts.letters), compute_class_weights(counts.positions)};
    const auto data = load_images(manifest, ids);
    const auto result = run_inference(*model, data, weights, batch_size);

    fs::create_directories(out);
    write_predictions(prediction_rows(data, result), out / "predictions.csv");
    write_report_files(report_for(data, result), out);
    write_text(out / "evaluate_config.txt",
               kv_line("checkpoint", checkpoint.string()) + kv_line("splits", splits_path.string()) +
                   kv_line("manifest", manifest_path.string()) + kv_line("out", out.string()) +
                   kv_line("subset", subset) + kv_line("batch_size", std::to_string(batch_size)));
    std::cout << "letter accuracy " << format_rate(result.letter_acc) << ", position accuracy "
              << format_rate(result.position_acc) << " on " << data.size() << " " << subset << " samples\n";
    return 0;
}

std::vector<PredictionRow> predictions_from(KeyValueConfig& kv, const std::string& side, const std::string& subset,
                                            const SplitManifest* splits, const CorpusManifest* manifest,
                                            std::string& resolved) {
    const auto preds = kv.get_string("preds_" + side, "");
    const auto ckpt = kv.get_string("checkpoint_" + side, "");
    if (preds.empty() == ckpt.empty())
        throw Error("model " + side + ": give exactly one of `preds_" + side + "` or `checkpoint_" + side + "`");
    if (!preds.empty()) {
        Settings::require_exists(preds, "predictions file");
        resolved += kv_line("preds_" + side, preds);
        return read_predictions(preds);
    }
    Settings::require_exists(ckpt, "checkpoint directory");
    if (!splits || !manifest) throw Error("checkpoint inputs need `splits` (and a manifest)");
    resolved += kv_line("checkpoint_" + side, ckpt);
    const auto& ids = subset_ids(*splits, subset);
    auto model = load_checkpoint(ckpt);
    const auto data = load_images(*manifest, ids);
    std::vector<PredictionRow> rows;
    for (std::size_t start = 0; start < data.size(); start += 64) {
        const auto count = std::min<std::size_t>(64, data.size() - start);
        std::vector<ModelInput> inputs;
        for (std::size_t i = start; i < start + count; ++i) inputs.push_back(normalize_and_expand(data.images[i]));
        auto probs = predict_proba(*model, inputs);
        for (std::size_t i = 0; i < count; ++i) rows.push_back({data.ids[start + i], std::move(probs[i])});
    }
    return rows;
}

int cmd_fuse(KeyValueConfig kv) {
    const auto out = require_path(kv, "out", "output directory");
    const double eps = kv.get_double("eps", kDefaultFusionEps);
    const auto subset = kv.get_string("subset", "test");
    std::optional<fs::path> splits_path, manifest_path;
    if (const auto s = kv.get_string("splits", ""); !s.empty()) {
        splits_path = s;
        Settings::require_exists(*splits_path, "split file");
    }
    if (const auto m = kv.get_string("manifest", ""); !m.empty()) manifest_path = m;
    else if (splits_path) manifest_path = splits_path->parent_path() / "manifest.csv";

    std::optional<SplitManifest> splits;
    std::optional<CorpusManifest> manifest;
    if (splits_path) splits = read_split(*splits_path);
    if (manifest_path) manifest = read_manifest_file(*manifest_path);

    std::string resolved = kv_line("out", out.string()) + kv_line("eps", eps) + kv_line("subset", subset);
    const auto rows_a = predictions_from(kv, "a", subset, splits ? &*splits : nullptr, manifest ? &*manifest : nullptr, resolved);
    const auto rows_b = predictions_from(kv, "b", subset, splits ? &*splits : nullptr, manifest ? &*manifest : nullptr, resolved);
    kv.finish();
    if (splits_path) resolved += kv_line("splits", splits_path->string());
    if (manifest_path) resolved += kv_line("manifest", manifest_path->string());

    std::map<std::string, const DualDistribution*> by_id;
    for (const auto& r : rows_b)
        if (!by_id.emplace(r.sample_id, &r.dist).second) throw Error("duplicate sample_id in model b: " + r.sample_id);
    if (rows_a.size() != rows_b.size()) throw Error("the two prediction sets cover different numbers of samples");

    std::vector<PredictionRow> fused;
    std::vector<std::size_t> letter_preds, position_preds;
    std::vector<std::string> ids;
    for (const auto& r : rows_a) {
        const auto it = by_id.find(r.sample_id);
        if (it == by_id.end()) throw Error("sample " + r.sample_id + " is missing from model b");
        const auto f = ensemble_predict(r.dist, *it->second, eps);
        fused.push_back({r.sample_id, {f.ensemble_letter, f.ensemble_position}});
        letter_preds.push_back(f.letter_class);
        position_preds.push_back(f.position_class);
        ids.push_back(r.sample_id);
    }

    fs::create_directories(out);
    write_predictions(fused, out / "fused_predictions.csv");
    if (manifest) {
        const auto report = build_report(truth_for(*manifest, ids), letter_preds, position_preds);
        write_report_files(report, out);
        std::cout << "ensemble letter accuracy " << format_rate(report.letter.summary.accuracy)
                  << ", position accuracy " << format_rate(report.position.summary.accuracy) << '\n';
    }
    write_text(out / "fuse_config.txt", resolved);
    std::cout << "fused " << fused.size() << " samples -> " << (out / "fused_predictions.csv").string() << '\n';
    return 0;
}

void print_table(const EvalReport& r, RateFormat pair_format) {
    std::printf("%-9s %9s %9s %9s %9s %9s\n", "task", "accuracy", "precision", "recall", "f1", "loss");
    for (const auto& [name, t] : {std::pair{"letter", &r.letter}, std::pair{"position", &r.position}})
        std::printf("%-9s %9s %9s %9s %9s %9s\n", name, format_rate(t->summary.accuracy).c_str(),
                    format_rate(t->summary.precision).c_str(), format_rate(t->summary.recall).c_str(),
                    format_rate(t->summary.f1).c_str(), letterform::detail::loss_cell(t->test_loss).c_str());
    std::printf("\n%-8s %8s %9s\n", "letter", "support", "accuracy");
    for (const auto& row : r.per_letter)
        std::printf("%-8s %8zu %9s\n", std::string(row.letter.name()).c_str(), row.support,
                    format_rate(row.accuracy).c_str());
    std::printf("\n%-8s %8s %8s %9s\n", "letter", "position", "support", "accuracy");
    for (const auto& row : r.per_pair)
        std::printf("%-8s %8c %8zu %9s\n", std::string(row.pair.letter.name()).c_str(), row.pair.position.code(),
                    row.support,
                    (pair_format == RateFormat::Percent ? format_percent(row.accuracy) : format_rate(row.accuracy)).c_str());
}

int cmd_report(KeyValueConfig kv) {
    const auto input = existing_path(kv, "report", "report.json");
    const auto format = kv.get_string("format", "table");
    const bool percent = kv.get_bool("percent", false);
    const auto out = kv.get_string("out", "");
    kv.finish();
    if (format != "table" && format != "csv" && format != "json")
        throw Error("format must be table, csv or json, got \"" + format + "\"");

    std::ifstream in(input);
    std::stringstream ss;
    ss << in.rdbuf();
    const auto report = report_from_json(ss.str());
    const auto pair_format = percent ? RateFormat::Percent : RateFormat::Fraction;
    if (format == "table") {
        print_table(report, pair_format);
        return 0;
    }
    if (out.empty()) throw Error("--format " + format + " needs an output directory (--out)");
    if (format == "csv") write_report_csv(report, out, pair_format);
    else write_text(fs::path(out) / "report.json", report_to_json(report));
    write_text(fs::path(out) / "report_config.txt", kv_line("report", input.string()) + kv_line("format", format) +
                                                        kv_line("percent", percent ? "true" : "false") +
                                                        kv_line("out", out));
    std::cout << "wrote " << format << " report -> " << out << '\n';
    return 0;
}

int cmd_augment(KeyValueConfig kv) {
    const auto in_dir = existing_path(kv, "in", "input corpus directory");
    const auto out = require_path(kv, "out", "output directory");
    const auto seed = kv.require_uint("seed");
    const auto copies = kv.get_uint("copies", 1);
    const auto cfg = augment_config_from(kv);
    kv.finish();
    if (copies < 1) throw Error("copies must be at least 1");

    const auto manifest = load_manifest(in_dir);
    RandomSource rng(seed);
    nlohmann::ordered_json log = nlohmann::ordered_json::array();
    for (const auto& s : manifest.samples()) {
        const auto image = read_gray(s.image_path);
        for (std::size_t k = 0; k < copies; ++k) {
            AugmentTrace trace;
            const auto augmented = augment_pipeline(image, rng, cfg, &trace);
            const auto path = out / (s.sample_id + "__aug" + std::to_string(k) + ".png");
            fs::create_directories(path.parent_path());
            write_gray(augmented, path);
            log.push_back({{"sample_id", s.sample_id}, {"copy", k}, {"file", fs::relative(path, out).generic_string()},
                           {"transforms", trace.names()}});
        }
    }
    write_text(out / "augment_log.json", log.dump(2) + "\n");
    write_text(out / "augment_config.txt", kv_line("in", in_dir.string()) + kv_line("out", out.string()) +
                                               kv_line("seed", std::to_string(seed)) +
                                               kv_line("copies", std::to_string(copies)) + augment_config_text(cfg));
    std::cout << "augmented " << manifest.size() << " samples x " << copies << " -> " << out.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-head letter/position classifiers: corpus preparation, training, evaluation and fusion"};
    app.require_subcommand(1);
    app.fallthrough();

    Options global;
    global.seed_opt = app.add_option("--seed", global.seed, "Random seed (mandatory for split, train, augment, synthetic prepare)");
    global.config_opt = app.add_option("--config", global.config, "Flat `key = value` settings file");
    global.out_opt = app.add_option("--out", global.out, "Output directory");

    std::map<CLI::App*, std::pair<Settings, int (*)(KeyValueConfig)>> commands;
    std::vector<std::string> values(32);
    std::size_t next_value = 0;
    auto add = [&](const char* name, const char* help, int (*fn)(KeyValueConfig),
                   std::vector<std::tuple<std::string, std::string, bool>> opts) {
        auto* sub = app.add_subcommand(name, help);
        Settings settings;
        for (const auto& [flag, key_help, is_flag] : opts) {
            const auto key = flag.substr(2);
            std::string key_name = key;
            std::replace(key_name.begin(), key_name.end(), '-', '_');
            CLI::Option* opt = is_flag ? sub->add_flag(flag, key_help) : sub->add_option(flag, values.at(next_value++), key_help);
            settings.keyed.emplace_back(key_name, opt);
        }
        commands[sub] = {std::move(settings), fn};
    };

    add("prepare", "Build manifest.csv from a corpus directory, or render the synthetic corpus", cmd_prepare,
        {{"--root", "Corpus root (<Letter>/<Position>/<image>)", false},
         {"--synthetic", "Render the synthetic pseudo-glyph corpus into --out", true},
         {"--samples-per-pair", "Synthetic samples per (letter, position) pair", false}});
    add("split", "Stratified train/validation/test split at the pair level", cmd_split,
        {{"--manifest", "manifest.csv", false},
         {"--train-ratio", "Train fraction (0.7)", false},
         {"--validation-ratio", "Validation fraction (0.1)", false},
         {"--test-ratio", "Test fraction (0.2)", false}});
    add("train", "Train a dual-head model", cmd_train,
        {{"--spec", "Model spec JSON", false},
         {"--splits", "splits.json", false},
         {"--manifest", "manifest.csv (default: beside the split file)", false}});
    add("evaluate", "Evaluate a checkpoint on a split", cmd_evaluate,
        {{"--checkpoint", "Checkpoint directory", false},
         {"--splits", "splits.json", false},
         {"--manifest", "manifest.csv (default: beside the split file)", false},
         {"--subset", "train, validation or test (default test)", false},
         {"--batch-size", "Inference batch size", false}});
    add("fuse", "Confidence-weighted fusion of two models", cmd_fuse,
        {{"--preds-a", "Predictions CSV of the convolutional model", false},
         {"--preds-b", "Predictions CSV of the transformer model", false},
         {"--checkpoint-a", "Checkpoint of the convolutional model", false},
         {"--checkpoint-b", "Checkpoint of the transformer model", false},
         {"--splits", "splits.json (for checkpoints and subset ids)", false},
         {"--manifest", "manifest.csv for ground truth (default: beside the split file)", false},
         {"--subset", "Split subset for checkpoint inputs (default test)", false},
         {"--eps", "Fusion epsilon (default 1e-8)", false}});
    add("report", "Render a report.json as a table, CSVs or JSON", cmd_report,
        {{"--report", "report.json", false},
         {"--format", "table, csv or json", false},
         {"--percent", "Render pair accuracies as percentages", true}});
    add("augment", "Write augmented copies of a corpus directory", cmd_augment,
        {{"--in", "Corpus directory", false}, {"--copies", "Augmented copies per sample (default 1)", false}});

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    for (auto& [sub, entry] : commands) {
        if (!sub->parsed()) continue;
        auto& [settings, fn] = entry;
        try {
            if (global.config_opt->count()) settings.config_file = global.config;
            settings.keyed.emplace_back("seed", global.seed_opt);
            settings.keyed.emplace_back("out", global.out_opt);
            return fn(settings.resolve());
        } catch (const std::exception& e) {
            std::cerr << "letterform " << sub->get_name() << ": error: " << e.what() << '\n';
            return 1;
        }
    }
    return 1;
}
