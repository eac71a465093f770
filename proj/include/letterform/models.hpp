#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <torch/script.h>
#include <torch/torch.h>

#include "letterform/error.hpp"
#include "letterform/fusion.hpp"
#include "letterform/image.hpp"
#include "letterform/labels.hpp"
#include "letterform/model_spec.hpp"

namespace letterform {

namespace fs = std::filesystem;

struct DualLogits {
    torch::Tensor letter;    // (N, 28)
    torch::Tensor position;  // (N, 4)
};

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

/// Fan-in scaled uniform weights, zero bias.
inline void init_dense(torch::nn::Linear& layer) {
    torch::NoGradGuard no_grad;
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer->weight.size(1)));
    layer->weight.uniform_(-bound, bound);
    if (layer->bias.defined()) layer->bias.zero_();
}

/// Common trunk-plus-two-heads model. Subclasses supply the feature extractor;
/// the shared 128-wide dense layer, its dropout and both heads live here.
class DualHeadModel : public torch::nn::Module {
public:
    DualHeadModel(ModelSpec spec, int64_t embedding_width) : spec_(std::move(spec)), embedding_width_(embedding_width) {
        shared_ = register_module("shared", torch::nn::Linear(embedding_width, spec_.head_width));
        head_dropout_ = register_module("head_dropout", torch::nn::Dropout(spec_.dropout));
        letter_head_ = register_module("letter_head", torch::nn::Linear(spec_.head_width, kNumLetters));
        position_head_ = register_module("position_head", torch::nn::Linear(spec_.head_width, kNumPositions));
        for (auto* l : {&shared_, &letter_head_, &position_head_}) init_dense(*l);
    }

    /// (N, 3, S, S) -> (N, embedding_width)
    virtual torch::Tensor embed(const torch::Tensor& x) = 0;

    DualLogits forward(const torch::Tensor& x) {
        auto h = torch::relu(shared_->forward(embed(x)));
        h = head_dropout_->forward(h);
        return {letter_head_->forward(h), position_head_->forward(h)};
    }

    /// Everything the optimizer should update.
    virtual std::vector<torch::Tensor> trainable_parameters() {
        std::vector<torch::Tensor> out;
        for (auto& p : parameters())
            if (p.requires_grad()) out.push_back(p);
        return out;
    }

    /// Parameters and buffers by stable name; the checkpoint payload.
    virtual NamedTensors named_state() {
        NamedTensors out;
        for (auto& p : named_parameters()) out.emplace_back(p.key(), p.value());
        for (auto& b : named_buffers()) out.emplace_back(b.key(), b.value());
        return out;
    }

    /// Head parameters only (shared dense + two heads).
    std::vector<torch::Tensor> head_parameters() {
        std::vector<torch::Tensor> out;
        for (auto* l : {&shared_, &letter_head_, &position_head_})
            for (auto& p : (*l)->parameters()) out.push_back(p);
        return out;
    }

    virtual void set_dtype(torch::Dtype dtype) { to(dtype); }

    const ModelSpec& spec() const { return spec_; }
    int64_t embedding_width() const { return embedding_width_; }

protected:
    ModelSpec spec_;

private:
    int64_t embedding_width_;
    torch::nn::Linear shared_{nullptr}, letter_head_{nullptr}, position_head_{nullptr};
    torch::nn::Dropout head_dropout_{nullptr};
};

using ModelPtr = std::shared_ptr<DualHeadModel>;

// ---------------------------------------------------------------------------
// Custom CNN

/// Conv(3->c1) ReLU MaxPool2 Conv(c1->c2) ReLU MaxPool2 Flatten.
class CustomCnn : public DualHeadModel {
public:
    explicit CustomCnn(const ModelSpec& spec)
        : DualHeadModel(spec, flatten_width(spec)) {
        const int k = spec.cnn_kernel;
        conv1_ = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, spec.cnn_channels_1, k).padding(k / 2)));
        conv2_ = register_module(
            "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(spec.cnn_channels_1, spec.cnn_channels_2, k).padding(k / 2)));
    }

    static int64_t flatten_width(const ModelSpec& spec) {
        const int64_t side = spec.image_size / 4;
        return static_cast<int64_t>(spec.cnn_channels_2) * side * side;
    }

    torch::Tensor embed(const torch::Tensor& x) override {
        auto h = torch::max_pool2d(torch::relu(conv1_->forward(x)), 2);
        h = torch::max_pool2d(torch::relu(conv2_->forward(h)), 2);
        return h.flatten(1);
    }

private:
    torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};

// ---------------------------------------------------------------------------
// Transformer pieces shared by the custom ViT and the ViT-B/16 adapter.
// Parameter names follow torchvision's VisionTransformer so pretrained
// archives map one-to-one.

class SelfAttentionImpl : public torch::nn::Module {
public:
    SelfAttentionImpl(int64_t dim, int64_t heads, double attention_dropout) : heads_(heads) {
        in_proj_weight = register_parameter("in_proj_weight", torch::empty({3 * dim, dim}));
        in_proj_bias = register_parameter("in_proj_bias", torch::zeros({3 * dim}));
        out_proj = register_module("out_proj", torch::nn::Linear(dim, dim));
        dropout = register_module("dropout", torch::nn::Dropout(attention_dropout));
        torch::NoGradGuard no_grad;
        const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
        in_proj_weight.uniform_(-bound, bound);
        init_dense(out_proj);
    }

    torch::Tensor forward(const torch::Tensor& x) {
        const auto n = x.size(0), t = x.size(1), d = x.size(2);
        const auto head_dim = d / heads_;
        auto qkv = torch::nn::functional::linear(x, in_proj_weight, in_proj_bias).chunk(3, -1);
        auto split = [&](const torch::Tensor& m) { return m.reshape({n, t, heads_, head_dim}).transpose(1, 2); };
        auto q = split(qkv[0]), k = split(qkv[1]), v = split(qkv[2]);
        auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim));
        auto attn = dropout->forward(torch::softmax(scores, -1));
        auto out = torch::matmul(attn, v).transpose(1, 2).reshape({n, t, d});
        return out_proj->forward(out);
    }

    torch::Tensor in_proj_weight, in_proj_bias;
    torch::nn::Linear out_proj{nullptr};
    torch::nn::Dropout dropout{nullptr};

private:
    int64_t heads_;
};
TORCH_MODULE(SelfAttention);

/// Pre-norm encoder block: x + drop(attn(ln_1(x))), then + mlp(ln_2(.)).
class EncoderBlockImpl : public torch::nn::Module {
public:
    EncoderBlockImpl(int64_t dim, int64_t heads, int64_t mlp_dim, double dropout, double attention_dropout, double ln_eps) {
        ln_1 = register_module("ln_1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(ln_eps)));
        self_attention = register_module("self_attention", SelfAttention(dim, heads, attention_dropout));
        drop = register_module("dropout", torch::nn::Dropout(dropout));
        ln_2 = register_module("ln_2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(ln_eps)));
        torch::nn::Linear fc1(dim, mlp_dim), fc2(mlp_dim, dim);
        init_dense(fc1);
        init_dense(fc2);
        mlp = register_module("mlp", torch::nn::Sequential(fc1, torch::nn::GELU(), torch::nn::Dropout(dropout), fc2,
                                                           torch::nn::Dropout(dropout)));
    }

    torch::Tensor forward(const torch::Tensor& x) {
        auto h = x + drop->forward(self_attention->forward(ln_1->forward(x)));
        return h + mlp->forward(ln_2->forward(h));
    }

    torch::nn::LayerNorm ln_1{nullptr}, ln_2{nullptr};
    SelfAttention self_attention{nullptr};
    torch::nn::Dropout drop{nullptr};
    torch::nn::Sequential mlp{nullptr};
};
TORCH_MODULE(EncoderBlock);

inline int64_t vit_token_count(int64_t image_size, int64_t patch_size) {
    const int64_t grid = image_size / patch_size;
    return grid * grid;
}

/// Patch tokens + learnable positional matrix, encoder blocks, final layer
/// norm, mean over tokens. No class token.
class CustomVit : public DualHeadModel {
public:
    explicit CustomVit(const ModelSpec& spec) : DualHeadModel(spec, spec.embed_dim) {
        const int64_t d = spec.embed_dim;
        conv_proj_ = register_module("conv_proj",
                                     torch::nn::Conv2d(torch::nn::Conv2dOptions(3, d, spec.patch_size).stride(spec.patch_size)));
        pos_embedding_ = register_parameter(
            "pos_embedding", torch::randn({vit_token_count(spec.image_size, spec.patch_size), d}) * 0.02);
        dropout_ = register_module("dropout", torch::nn::Dropout(spec.dropout));
        layers_ = register_module("layers", torch::nn::ModuleList());
        for (int i = 0; i < spec.depth; ++i)
            layers_->push_back(EncoderBlock(d, spec.num_heads, spec.mlp_dim, spec.dropout, spec.dropout, 1e-5));
        ln_ = register_module("ln", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d}).eps(1e-5)));
    }

    torch::Tensor embed(const torch::Tensor& x) override {
        auto tokens = conv_proj_->forward(x).flatten(2).transpose(1, 2);  // (N, T, D)
        auto h = dropout_->forward(tokens + pos_embedding_);
        for (auto& layer : *layers_) h = layer->as<EncoderBlock>()->forward(h);
        return ln_->forward(h).mean(1);
    }

    torch::Tensor& positional_matrix() { return pos_embedding_; }

private:
    torch::nn::Conv2d conv_proj_{nullptr};
    torch::Tensor pos_embedding_;
    torch::nn::Dropout dropout_{nullptr};
    torch::nn::ModuleList layers_{nullptr};
    torch::nn::LayerNorm ln_{nullptr};
};

// ---------------------------------------------------------------------------
// Positional embedding resampling

namespace detail {

// Cubic convolution kernel with a = -0.75 (the coefficient PyTorch uses).
inline double cubic_weight(double t) {
    constexpr double a = -0.75;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

/// Resamples one axis of a (rows x cols x D) grid with corner-aligned bicubic
/// taps, clamping indices at the border.
inline std::vector<double> bicubic_axis(const std::vector<double>& in, int64_t outer, int64_t n_in, int64_t inner,
                                        int64_t n_out) {
    std::vector<double> out(static_cast<std::size_t>(outer * n_out * inner), 0.0);
    for (int64_t o = 0; o < n_out; ++o) {
        const double src = n_out > 1 ? static_cast<double>(o) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1)
                                     : 0.0;
        const auto base = static_cast<int64_t>(std::floor(src));
        const double frac = src - static_cast<double>(base);
        for (int64_t tap = -1; tap <= 2; ++tap) {
            const double w = cubic_weight(static_cast<double>(tap) - frac);
            if (w == 0.0) continue;
            const int64_t idx = std::clamp<int64_t>(base + tap, 0, n_in - 1);
            for (int64_t a = 0; a < outer; ++a)
                for (int64_t i = 0; i < inner; ++i)
                    out[static_cast<std::size_t>((a * n_out + o) * inner + i)] +=
                        w * in[static_cast<std::size_t>((a * n_in + idx) * inner + i)];
        }
    }
    return out;
}

}  // namespace detail

/// Adapts a (1 + G^2) x D positional table to a G' x G' patch grid: the class
/// token row is kept, the G x G x D grid is bicubically resampled (corner-aligned)
/// per channel and flattened back row-major.
inline torch::Tensor interpolate_positional_embeddings(const torch::Tensor& pos, int64_t old_grid, int64_t new_grid) {
    if (old_grid < 1 || new_grid < 1) throw Error("positional grid sizes must be positive");
    auto table = pos.dim() == 3 ? pos.squeeze(0) : pos;
    if (table.dim() != 2 || table.size(0) != 1 + old_grid * old_grid)
        throw Error("positional table has " + std::to_string(table.dim() == 2 ? table.size(0) : -1) +
                    " rows, expected 1 + " + std::to_string(old_grid) + "^2 = " + std::to_string(1 + old_grid * old_grid));
    const int64_t d = table.size(1);
    auto grid = table.slice(0, 1).to(torch::kDouble).contiguous();
    std::vector<double> values(grid.data_ptr<double>(), grid.data_ptr<double>() + grid.numel());

    // rows, then columns
    values = detail::bicubic_axis(values, 1, old_grid, old_grid * d, new_grid);
    values = detail::bicubic_axis(values, new_grid, old_grid, d, new_grid);

    auto resampled = torch::from_blob(values.data(), {new_grid * new_grid, d}, torch::kDouble).clone().to(table.dtype());
    auto out = torch::cat({table.slice(0, 0, 1).detach().clone(), resampled}, 0);
    return pos.dim() == 3 ? out.unsqueeze(0) : out;
}

// ---------------------------------------------------------------------------
// Pretrained archives

/// Opaque handle on a pretrained parameter file: either a pickled
/// name -> tensor dictionary (torch.save of a state_dict) or a TorchScript module.
struct ParameterArchive {
    fs::path path;

    std::map<std::string, torch::Tensor> tensors() const {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("missing weights archive: " + path.string());
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::map<std::string, torch::Tensor> out;
        try {
            auto value = torch::pickle_load(bytes);
            if (!value.isGenericDict())
                throw Error("weights archive " + path.string() +
                            " is not a plain name -> tensor dict (OrderedDict state_dicts must be saved as dict(...))");
            for (const auto& kv : value.toGenericDict()) out.emplace(kv.key().toStringRef(), kv.value().toTensor());
        } catch (const c10::Error& e) {
            throw Error("corrupt weights archive " + path.string() + ": " + e.what_without_backtrace());
        }
        return out;
    }

    torch::jit::Module script_module() const {
        if (!fs::exists(path)) throw Error("missing weights archive: " + path.string());
        try {
            return torch::jit::load(path.string());
        } catch (const c10::Error& e) {
            throw Error("corrupt weights archive " + path.string() + ": " + e.what_without_backtrace());
        }
    }
};

inline void save_tensor_dict(const NamedTensors& tensors, const fs::path& path) {
    c10::Dict<std::string, torch::Tensor> dict;
    for (const auto& [name, t] : tensors) dict.insert(name, t.detach().cpu());
    const auto bytes = torch::pickle_save(dict);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// EfficientNet-B7 adapter

/// Any TorchScript feature extractor whose forward maps (N, 3, H, W) to a
/// pooled (N, C) embedding, e.g. EfficientNet-B7 with its classifier replaced
/// by an identity. The backbone is fine-tuned unless spec.freeze_backbone.
class ScriptedBackboneModel : public DualHeadModel {
public:
    ScriptedBackboneModel(const ModelSpec& spec, torch::jit::Module backbone)
        : DualHeadModel(spec, spec.embedding_width), backbone_(std::move(backbone)) {
        for (auto p : backbone_.parameters()) p.set_requires_grad(!spec.freeze_backbone);
        const int64_t width = probe_width();
        if (width != spec.embedding_width)
            throw Error("backbone " + spec.weights + " yields " + std::to_string(width) + "-wide embeddings, expected " +
                        std::to_string(spec.embedding_width));
    }

    torch::Tensor embed(const torch::Tensor& x) override {
        auto out = backbone_.forward({x}).toTensor();
        return out.dim() > 2 ? out.flatten(1) : out;
    }

    void train(bool on = true) override {
        DualHeadModel::train(on);
        backbone_.train(on);
    }

    void set_dtype(torch::Dtype dtype) override {
        to(dtype);
        backbone_.to(dtype);
    }

    std::vector<torch::Tensor> trainable_parameters() override {
        auto out = DualHeadModel::trainable_parameters();
        if (!spec_.freeze_backbone)
            for (auto p : backbone_.parameters()) out.push_back(p);
        return out;
    }

    std::vector<torch::Tensor> backbone_parameters() {
        std::vector<torch::Tensor> out;
        for (auto p : backbone_.parameters()) out.push_back(p);
        return out;
    }

    NamedTensors named_state() override {
        auto out = DualHeadModel::named_state();
        for (const auto& p : backbone_.named_parameters()) out.emplace_back("backbone." + p.name, p.value);
        for (const auto& b : backbone_.named_buffers()) out.emplace_back("backbone." + b.name, b.value);
        return out;
    }

private:
    int64_t probe_width() {
        torch::NoGradGuard no_grad;
        const bool was_training = is_training();
        backbone_.eval();
        auto probe = embed(torch::zeros({1, 3, spec_.image_size, spec_.image_size}));
        backbone_.train(was_training);
        if (probe.dim() != 2) throw Error("backbone " + spec_.weights + " does not produce a pooled embedding");
        return probe.size(1);
    }

    torch::jit::Module backbone_;
};

// ---------------------------------------------------------------------------
// ViT-B/16 adapter

/// torchvision-layout vision transformer with a class token; the class-token
/// output after the final layer norm is the embedding.
class VitBackboneModel : public DualHeadModel {
public:
    /// Builds the architecture from a (possibly resolved) spec without weights.
    explicit VitBackboneModel(const ModelSpec& spec) : DualHeadModel(spec, spec.embed_dim) {
        const int64_t d = spec.embed_dim;
        conv_proj_ = register_module("conv_proj",
                                     torch::nn::Conv2d(torch::nn::Conv2dOptions(3, d, spec.patch_size).stride(spec.patch_size)));
        class_token_ = register_parameter("class_token", torch::zeros({1, 1, d}));
        pos_embedding_ = register_parameter(
            "pos_embedding", torch::randn({1, 1 + vit_token_count(spec.image_size, spec.patch_size), d}) * 0.02);
        layers_ = register_module("layers", torch::nn::ModuleList());
        for (int i = 0; i < spec.depth; ++i) layers_->push_back(EncoderBlock(d, spec.num_heads, spec.mlp_dim, 0.0, 0.0, 1e-6));
        ln_ = register_module("ln", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d}).eps(1e-6)));
        if (spec.freeze_backbone)
            for (auto& p : backbone_parameters()) p.set_requires_grad(false);
    }

    torch::Tensor embed(const torch::Tensor& x) override {
        const auto n = x.size(0);
        auto tokens = conv_proj_->forward(x).flatten(2).transpose(1, 2);
        auto h = torch::cat({class_token_.expand({n, -1, -1}), tokens}, 1) + pos_embedding_;
        for (auto& layer : *layers_) h = layer->as<EncoderBlock>()->forward(h);
        return ln_->forward(h).select(1, 0);
    }

    std::vector<torch::Tensor> backbone_parameters() {
        std::vector<torch::Tensor> out;
        for (auto& p : named_parameters())
            if (!is_head_param(p.key())) out.push_back(p.value());
        return out;
    }

    torch::Tensor& positional_table() { return pos_embedding_; }

    /// Maps a torchvision state_dict key onto this module's naming; empty for
    /// keys that have no counterpart (the discarded classification head).
    static std::string map_torchvision_key(std::string key) {
        if (key.starts_with("heads.")) return {};
        auto replace = [&](const std::string& from, const std::string& to) {
            if (auto at = key.find(from); at != std::string::npos) key.replace(at, from.size(), to);
        };
        replace("encoder.layers.encoder_layer_", "layers.");
        replace("encoder.pos_embedding", "pos_embedding");
        replace("encoder.ln.", "ln.");
        replace("mlp.linear_1.", "mlp.0.");
        replace("mlp.linear_2.", "mlp.3.");
        return key;
    }

private:
    static bool is_head_param(const std::string& name) {
        return name.starts_with("shared.") || name.starts_with("letter_head.") || name.starts_with("position_head.");
    }

    torch::nn::Conv2d conv_proj_{nullptr};
    torch::Tensor class_token_, pos_embedding_;
    torch::nn::ModuleList layers_{nullptr};
    torch::nn::LayerNorm ln_{nullptr};
};

/// Copies `source` tensors into the model's named state. Every model tensor
/// must be present with a matching shape unless `allow_missing` names its prefix.
inline void load_named_state(DualHeadModel& model, const std::map<std::string, torch::Tensor>& source,
                             const std::string& origin, const std::vector<std::string>& allow_missing = {}) {
    torch::NoGradGuard no_grad;
    for (auto& [name, tensor] : model.named_state()) {
        auto it = source.find(name);
        if (it == source.end()) {
            const bool optional = std::any_of(allow_missing.begin(), allow_missing.end(),
                                              [&](const std::string& p) { return name.starts_with(p); });
            if (optional) continue;
            throw Error(origin + " lacks tensor \"" + name + "\"");
        }
        if (it->second.sizes() != tensor.sizes())
            throw Error(origin + ": shape mismatch for \"" + name + "\"");
        tensor.copy_(it->second);
    }
}

// ---------------------------------------------------------------------------
// Builders

inline ModelPtr build_custom_cnn(const ModelSpec& spec) {
    if (spec.family != ModelFamily::CustomCnn) throw Error("build_custom_cnn needs a custom_cnn spec");
    spec.validate();
    return std::make_shared<CustomCnn>(spec);
}

inline ModelPtr build_custom_vit(const ModelSpec& spec) {
    if (spec.family != ModelFamily::CustomVit) throw Error("build_custom_vit needs a custom_vit spec");
    spec.validate();
    return std::make_shared<CustomVit>(spec);
}

inline ModelPtr build_efficientnet_b7(const ModelSpec& spec, const ParameterArchive& weights) {
    if (spec.family != ModelFamily::EfficientNetB7) throw Error("build_efficientnet_b7 needs an efficientnet_b7 spec");
    spec.validate();
    return std::make_shared<ScriptedBackboneModel>(spec, weights.script_module());
}

/// Reads a torchvision ViT state_dict, resolves the architecture from tensor
/// shapes, and adapts the positional table from the pretraining grid to
/// spec.image_size / patch.
inline ModelPtr build_vit_b16(ModelSpec spec, const ParameterArchive& weights) {
    if (spec.family != ModelFamily::VitB16) throw Error("build_vit_b16 needs a vit_b16 spec");
    spec.validate();
    auto raw = weights.tensors();
    std::map<std::string, torch::Tensor> mapped;
    for (auto& [key, t] : raw)
        if (auto k = VitBackboneModel::map_torchvision_key(key); !k.empty()) mapped.emplace(k, t);

    auto need = [&](const std::string& key) -> const torch::Tensor& {
        auto it = mapped.find(key);
        if (it == mapped.end()) throw Error("weights archive " + weights.path.string() + " lacks \"" + key + "\"");
        return it->second;
    };
    const auto& proj = need("conv_proj.weight");
    spec.embed_dim = static_cast<int>(proj.size(0));
    spec.patch_size = static_cast<int>(proj.size(2));
    spec.mlp_dim = static_cast<int>(need("layers.0.mlp.0.weight").size(0));
    spec.depth = 0;
    while (mapped.contains("layers." + std::to_string(spec.depth) + ".ln_1.weight")) ++spec.depth;
    if (spec.embedding_width != spec.embed_dim)
        throw Error("weights archive " + weights.path.string() + " has embedding width " + std::to_string(spec.embed_dim) +
                    ", expected " + std::to_string(spec.embedding_width));
    if (spec.embed_dim % spec.num_heads != 0) throw Error("embed_dim is not divisible by num_heads");

    const int64_t rows = need("pos_embedding").size(1);
    const auto old_grid = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(rows - 1))));
    if (old_grid * old_grid + 1 != rows) throw Error("positional table in " + weights.path.string() + " is not 1 + G^2 rows");
    spec.pretrained_image_size = static_cast<int>(old_grid * spec.patch_size);
    if (spec.image_size % spec.patch_size != 0) throw Error("image size must be a multiple of the patch size");
    const int64_t new_grid = spec.image_size / spec.patch_size;
    if (new_grid != old_grid) mapped["pos_embedding"] = interpolate_positional_embeddings(need("pos_embedding"), old_grid, new_grid);

    auto model = std::make_shared<VitBackboneModel>(spec);
    load_named_state(*model, mapped, "weights archive " + weights.path.string(),
                     {"shared.", "letter_head.", "position_head."});
    return model;
}

/// Dispatch on spec.family. Pretrained families load spec.weights.
inline ModelPtr build_model(const ModelSpec& spec) {
    switch (spec.family) {
        case ModelFamily::CustomCnn: return build_custom_cnn(spec);
        case ModelFamily::CustomVit: return build_custom_vit(spec);
        case ModelFamily::EfficientNetB7: return build_efficientnet_b7(spec, {spec.weights});
        case ModelFamily::VitB16: return build_vit_b16(spec, {spec.weights});
    }
    throw Error("unknown model family");
}

// ---------------------------------------------------------------------------
// Inference

/// Stacks ModelInputs into an (N, 3, 128, 128) float tensor.
inline torch::Tensor to_batch(std::span<const ModelInput> inputs) {
    auto batch = torch::empty({static_cast<int64_t>(inputs.size()), 3, kInputSize, kInputSize}, torch::kFloat);
    float* dst = batch.data_ptr<float>();
    for (const auto& in : inputs) {
        if (in.values.size() != ModelInput::kSize) throw Error("ModelInput has the wrong size");
        dst = std::copy(in.values.begin(), in.values.end(), dst);
    }
    return batch;
}

/// Row-wise softmax of both heads; rejects non-finite logits.
inline std::vector<DualDistribution> logits_to_distributions(const DualLogits& logits) {
    auto to_probs = [](const torch::Tensor& t) {
        auto d = t.detach().to(torch::kDouble).contiguous();
        if (!torch::isfinite(d).all().item<bool>()) throw Error("non-finite logits (training diverged?)");
        return torch::softmax(d, 1).contiguous();
    };
    auto letter = to_probs(logits.letter), position = to_probs(logits.position);
    const auto n = letter.size(0);
    std::vector<DualDistribution> out(static_cast<std::size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const double* l = letter[i].data_ptr<double>();
        const double* p = position[i].data_ptr<double>();
        out[i].letter.assign(l, l + letter.size(1));
        out[i].position.assign(p, p + position.size(1));
    }
    return out;
}

/// Evaluation-mode class probabilities for a batch tensor.
inline std::vector<DualDistribution> predict_proba(DualHeadModel& model, const torch::Tensor& batch) {
    if (model.is_training()) throw Error("predict_proba needs the model in evaluation mode");
    torch::NoGradGuard no_grad;
    return logits_to_distributions(model.forward(batch));
}

inline std::vector<DualDistribution> predict_proba(DualHeadModel& model, std::span<const ModelInput> inputs) {
    return predict_proba(model, to_batch(inputs));
}

}  // namespace letterform
