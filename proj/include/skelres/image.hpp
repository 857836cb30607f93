#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skelres/errors.hpp"
#include "skelres/tensor.hpp"

namespace skelres {

/// 8-bit RGB image, rows by columns, channels interleaved. For encoded
/// sequences rows index joints and columns index frames.
struct ActionImage {
    Index height = 0, width = 0;
    std::vector<std::uint8_t> pixels;  // height * width * 3

    ActionImage() = default;
    ActionImage(Index h, Index w)
        : height(h), width(w), pixels(static_cast<std::size_t>(h * w * 3), 0) {}

    std::uint8_t& at(Index row, Index col, Index channel) {
        return pixels[static_cast<std::size_t>((row * width + col) * 3 + channel)];
    }
    std::uint8_t at(Index row, Index col, Index channel) const {
        return pixels[static_cast<std::size_t>((row * width + col) * 3 + channel)];
    }

    bool operator==(const ActionImage& other) const {
        return height == other.height && width == other.width && pixels == other.pixels;
    }
};

enum class ResizeMethod { Nearest, Bicubic };

ResizeMethod resize_method_from_string(const std::string& name);
std::string to_string(ResizeMethod method);

/// Nearest: target (i,j) samples source (floor((i+0.5)*Hs/Ht), floor((j+0.5)*Ws/Wt)).
/// Bicubic: separable Catmull-Rom (a=-0.5) with clamp-to-edge taps; the result
/// is clamped to [0,255] and rounded half away from zero once per pixel.
ActionImage resize(const ActionImage& img, Index target_height, Index target_width,
                   ResizeMethod method);

ActionImage flip_horizontal(const ActionImage& img);  // mirrors columns
ActionImage flip_vertical(const ActionImage& img);    // mirrors rows
ActionImage crop(const ActionImage& img, Index row0, Index col0, Index h, Index w);

void save_png(const ActionImage& img, const std::string& path);
ActionImage load_png(const std::string& path);

}  // namespace skelres
