#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "letterform/augment.hpp"
#include "letterform/corpus.hpp"
#include "letterform/error.hpp"

namespace letterform {

/// Flat `key = value` settings. Lines starting with '#' are comments. Every
/// key must be consumed by a getter before `finish()`, so typos surface as errors.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(const std::string& text, const std::string& origin = "<config>") {
        KeyValueConfig cfg;
        cfg.origin_ = origin;
        std::istringstream in(text);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            line = detail::trim(line);
            if (line.empty() || line.front() == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw Error(origin + ":" + std::to_string(line_no) + ": expected `key = value`");
            auto key = detail::trim(line.substr(0, eq));
            auto value = detail::trim(line.substr(eq + 1));
            if (key.empty()) throw Error(origin + ":" + std::to_string(line_no) + ": empty key");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static KeyValueConfig read(const fs::path& path) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open config: " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path.string());
    }

    bool has(const std::string& key) const { return values_.contains(key); }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_string(const std::string& key, const std::string& fallback) {
        used_.insert(key);
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) {
        const auto s = get_string(key, "");
        if (s.empty()) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw Error(origin_ + ": `" + key + "` must be a number, got \"" + s + "\"");
        }
    }

    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) {
        const auto s = get_string(key, "");
        if (s.empty()) return fallback;
        try {
            std::size_t pos = 0;
            if (s.front() == '-') throw std::invalid_argument(s);
            const auto v = std::stoull(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw Error(origin_ + ": `" + key + "` must be a non-negative integer, got \"" + s + "\"");
        }
    }

    bool get_bool(const std::string& key, bool fallback) {
        const auto s = get_string(key, "");
        if (s.empty()) return fallback;
        if (s == "true" || s == "on" || s == "yes" || s == "1") return true;
        if (s == "false" || s == "off" || s == "no" || s == "0") return false;
        throw Error(origin_ + ": `" + key + "` must be true or false, got \"" + s + "\"");
    }

    std::uint64_t require_uint(const std::string& key) {
        if (!has(key)) throw Error(origin_ + ": missing required key `" + key + "`");
        return get_uint(key, 0);
    }

    /// Throws on keys no getter asked for.
    void finish() const {
        for (const auto& [key, value] : values_)
            if (!used_.contains(key)) throw Error(origin_ + ": unknown key `" + key + "`");
    }

    std::string dump() const {
        std::string out;
        for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
        return out;
    }

private:
    std::string origin_ = "<config>";
    std::map<std::string, std::string> values_;
    std::set<std::string> used_;
};

/// Reads the augmentation keys (defaults from AugmentConfig).
inline AugmentConfig augment_config_from(KeyValueConfig& kv) {
    AugmentConfig a;
    a.apply_probability = kv.get_double("apply_probability", a.apply_probability);
    a.rotation_degrees = kv.get_double("rotation_degrees", a.rotation_degrees);
    a.blur_radius = kv.get_double("blur_radius", a.blur_radius);
    a.noise_std_fraction = kv.get_double("noise_std_fraction", a.noise_std_fraction);
    a.elastic_alpha = kv.get_double("elastic_alpha", a.elastic_alpha);
    a.elastic_sigma = kv.get_double("elastic_sigma", a.elastic_sigma);
    a.elastic_pad = static_cast<int>(kv.get_uint("elastic_pad", static_cast<std::uint64_t>(a.elastic_pad)));
    a.skew_magnitude_fraction = kv.get_double("skew_magnitude_fraction", a.skew_magnitude_fraction);
    a.validate();
    return a;
}

inline std::string augment_config_text(const AugmentConfig& a) {
    std::ostringstream out;
    out.precision(17);
    out << "apply_probability = " << a.apply_probability << '\n'
        << "rotation_degrees = " << a.rotation_degrees << '\n'
        << "blur_radius = " << a.blur_radius << '\n'
        << "noise_std_fraction = " << a.noise_std_fraction << '\n'
        << "elastic_alpha = " << a.elastic_alpha << '\n'
        << "elastic_sigma = " << a.elastic_sigma << '\n'
        << "elastic_pad = " << a.elastic_pad << '\n'
        << "skew_magnitude_fraction = " << a.skew_magnitude_fraction << '\n';
    return out.str();
}

}  // namespace letterform
