#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace misfit {

/// Small H×W container for non-real per-pixel data (masks, label ids).
template <typename T>
struct Grid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<T> values;

    Grid() = default;
    Grid(std::size_t h, std::size_t w, T fill = T{}) : height(h), width(w), values(h * w, fill) {}

    std::size_t size() const noexcept { return values.size(); }
    T& at(std::size_t y, std::size_t x) noexcept { return values[y * width + x]; }
    const T& at(std::size_t y, std::size_t x) const noexcept { return values[y * width + x]; }
    bool same_size(std::size_t h, std::size_t w) const noexcept { return height == h && width == w; }

    friend bool operator==(const Grid& a, const Grid& b) = default;
};

using BinaryGrid = Grid<std::uint8_t>;
using LabelGrid = Grid<int>;

inline constexpr int kIgnoreLabel = 255;

}  // namespace misfit
