#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "letterform/error.hpp"

namespace letterform {

inline constexpr std::size_t kNumLetters = 28;
inline constexpr std::size_t kNumPositions = 4;

// Canonical romanized names, in the fixed index order used by every table.
inline constexpr std::array<std::string_view, kNumLetters> kLetterNames{
    "Alef", "Ayn",  "Baa",  "Dad",  "Dal",  "Faa",  "Ghyn",
    "Ha",   "Haa",  "Jeem", "Kaf",  "Kha",  "Lam",  "Noon",
    "Qaf",  "Raa",  "Saad", "Seen", "Sheen", "Taa", "Thaa",
    "Ttaa", "Waw",  "Yaa",  "Zay",  "Dhaa", "Dhal", "Meem"};

inline constexpr std::array<char, kNumPositions> kPositionCodes{'B', 'M', 'E', 'I'};

/// One of the 28 letter identities.
class LetterClass {
public:
    constexpr LetterClass() = default;
    explicit constexpr LetterClass(std::size_t index) : index_(static_cast<std::uint8_t>(index)) {
        if (index >= kNumLetters) throw Error("letter index out of range: " + std::to_string(index));
    }

    static std::optional<LetterClass> from_name(std::string_view name) {
        for (std::size_t i = 0; i < kNumLetters; ++i)
            if (kLetterNames[i] == name) return LetterClass(i);
        return std::nullopt;
    }

    static LetterClass parse(std::string_view name) {
        if (auto l = from_name(name)) return *l;
        throw Error("unknown letter name \"" + std::string(name) + "\"");
    }

    constexpr std::size_t index() const { return index_; }
    constexpr std::string_view name() const { return kLetterNames[index_]; }

    friend constexpr auto operator<=>(LetterClass, LetterClass) = default;

private:
    std::uint8_t index_ = 0;
};

/// Positional form of a letter inside a word: Beginning, Middle, End, Isolated.
class PositionClass {
public:
    constexpr PositionClass() = default;
    explicit constexpr PositionClass(std::size_t index) : index_(static_cast<std::uint8_t>(index)) {
        if (index >= kNumPositions) throw Error("position index out of range: " + std::to_string(index));
    }

    static std::optional<PositionClass> from_code(std::string_view code) {
        if (code.size() != 1) return std::nullopt;
        for (std::size_t i = 0; i < kNumPositions; ++i)
            if (kPositionCodes[i] == code[0]) return PositionClass(i);
        return std::nullopt;
    }

    static PositionClass parse(std::string_view code) {
        if (auto p = from_code(code)) return *p;
        throw Error("invalid position code \"" + std::string(code) + "\"");
    }

    constexpr std::size_t index() const { return index_; }
    constexpr char code() const { return kPositionCodes[index_]; }

    friend constexpr auto operator<=>(PositionClass, PositionClass) = default;

private:
    std::uint8_t index_ = 0;
};

/// Composite (letter, position) label.
struct LetterPosition {
    LetterClass letter;
    PositionClass position;

    friend constexpr auto operator<=>(const LetterPosition&, const LetterPosition&) = default;
};

inline std::string to_string(LetterPosition pair) {
    return std::string(pair.letter.name()) + "-" + pair.position.code();
}

}  // namespace letterform
