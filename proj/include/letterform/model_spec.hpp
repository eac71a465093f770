#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "letterform/error.hpp"

namespace letterform {

enum class ModelFamily { CustomCnn, CustomVit, EfficientNetB7, VitB16 };

inline std::string family_name(ModelFamily f) {
    switch (f) {
        case ModelFamily::CustomCnn: return "custom_cnn";
        case ModelFamily::CustomVit: return "custom_vit";
        case ModelFamily::EfficientNetB7: return "efficientnet_b7";
        case ModelFamily::VitB16: return "vit_b16";
    }
    return "?";
}

inline ModelFamily parse_family(const std::string& name) {
    for (auto f : {ModelFamily::CustomCnn, ModelFamily::CustomVit, ModelFamily::EfficientNetB7, ModelFamily::VitB16})
        if (family_name(f) == name) return f;
    throw Error("unknown model family \"" + name + "\"");
}

inline bool is_pretrained(ModelFamily f) { return f == ModelFamily::EfficientNetB7 || f == ModelFamily::VitB16; }

/// Architecture description shared by all four families. Fields that do not
/// apply to a family are ignored by its builder.
struct ModelSpec {
    ModelFamily family = ModelFamily::CustomCnn;
    double dropout = 0.5;
    int head_width = 128;
    int image_size = 128;

    // custom_cnn
    int cnn_channels_1 = 32;
    int cnn_channels_2 = 64;
    int cnn_kernel = 3;

    // custom_vit; vit_b16 reads embed_dim/depth/mlp_dim/patch_size from its archive
    int patch_size = 16;
    int embed_dim = 256;
    int depth = 6;
    int num_heads = 8;
    int mlp_dim = 1024;

    // pretrained families
    std::string weights;      // parameter archive path
    int embedding_width = 2560;
    bool freeze_backbone = false;
    int pretrained_image_size = 224;

    /// Paper defaults per family (dropout 0.5 / 0.1 / 0.3 / 0.3).
    static ModelSpec defaults(ModelFamily family) {
        ModelSpec s;
        s.family = family;
        switch (family) {
            case ModelFamily::CustomCnn: s.dropout = 0.5; break;
            case ModelFamily::CustomVit: s.dropout = 0.1; break;
            case ModelFamily::EfficientNetB7: s.dropout = 0.3; break;
            case ModelFamily::VitB16:
                s.dropout = 0.3;
                s.embed_dim = 768;
                s.depth = 12;
                s.num_heads = 12;
                s.mlp_dim = 3072;
                s.embedding_width = 768;
                break;
        }
        return s;
    }

    void validate() const {
        if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("dropout must lie in [0, 1)");
        if (head_width < 1) throw Error("head_width must be positive");
        if (image_size < 1) throw Error("image_size must be positive");
        switch (family) {
            case ModelFamily::CustomCnn:
                if (cnn_channels_1 < 1 || cnn_channels_2 < 1) throw Error("custom_cnn channel counts must be positive");
                if (cnn_kernel < 1 || cnn_kernel % 2 == 0) throw Error("custom_cnn kernel must be odd and positive");
                if (image_size % 4 != 0) throw Error("custom_cnn needs an image size divisible by 4");
                break;
            case ModelFamily::CustomVit:
                if (patch_size < 1 || image_size % patch_size != 0)
                    throw Error("custom_vit patch size must divide the image size");
                if (embed_dim < 1 || depth < 1 || num_heads < 1 || mlp_dim < 1)
                    throw Error("custom_vit dimensions must be positive");
                if (embed_dim % num_heads != 0) throw Error("custom_vit embed_dim must be divisible by num_heads");
                break;
            case ModelFamily::EfficientNetB7:
            case ModelFamily::VitB16:
                if (weights.empty()) throw Error(family_name(family) + " needs a pretrained weights archive");
                if (num_heads < 1) throw Error("num_heads must be positive");
                if (embedding_width < 1) throw Error("embedding_width must be positive");
                break;
        }
    }
};

inline nlohmann::ordered_json to_json(const ModelSpec& s) {
    nlohmann::ordered_json j;
    j["family"] = family_name(s.family);
    j["dropout"] = s.dropout;
    j["head_width"] = s.head_width;
    j["image_size"] = s.image_size;
    j["cnn_channels"] = {s.cnn_channels_1, s.cnn_channels_2};
    j["cnn_kernel"] = s.cnn_kernel;
    j["patch_size"] = s.patch_size;
    j["embed_dim"] = s.embed_dim;
    j["depth"] = s.depth;
    j["num_heads"] = s.num_heads;
    j["mlp_dim"] = s.mlp_dim;
    j["weights"] = s.weights;
    j["embedding_width"] = s.embedding_width;
    j["freeze_backbone"] = s.freeze_backbone;
    j["pretrained_image_size"] = s.pretrained_image_size;
    return j;
}

/// Missing keys take the family defaults.
inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
    try {
        ModelSpec s = ModelSpec::defaults(parse_family(j.at("family").get<std::string>()));
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("dropout", s.dropout);
        get("head_width", s.head_width);
        get("image_size", s.image_size);
        if (j.contains("cnn_channels")) {
            const auto c = j.at("cnn_channels").get<std::vector<int>>();
            if (c.size() != 2) throw Error("cnn_channels must have two entries");
            s.cnn_channels_1 = c[0];
            s.cnn_channels_2 = c[1];
        }
        get("cnn_kernel", s.cnn_kernel);
        get("patch_size", s.patch_size);
        get("embed_dim", s.embed_dim);
        get("depth", s.depth);
        get("num_heads", s.num_heads);
        get("mlp_dim", s.mlp_dim);
        get("weights", s.weights);
        get("embedding_width", s.embedding_width);
        get("freeze_backbone", s.freeze_backbone);
        get("pretrained_image_size", s.pretrained_image_size);
        if (s.family == ModelFamily::CustomVit && !j.contains("mlp_dim")) s.mlp_dim = 4 * s.embed_dim;
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed model spec: ") + e.what());
    }
}

inline ModelSpec read_model_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open model spec: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return model_spec_from_json(nlohmann::json::parse(ss.str()));
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed model spec " + path.string() + ": " + e.what());
    }
}

inline void write_model_spec(const ModelSpec& spec, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write model spec: " + path.string());
    out << to_json(spec).dump(2) << '\n';
}

}  // namespace letterform
