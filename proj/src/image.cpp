#include "skelres/image.hpp"

#include <algorithm>
#include <cmath>

namespace skelres {

ResizeMethod resize_method_from_string(const std::string& name) {
    if (name == "nearest") return ResizeMethod::Nearest;
    if (name == "bicubic") return ResizeMethod::Bicubic;
    throw ConfigError("resize_method", "unknown method '" + name + "' (want nearest|bicubic)");
}

std::string to_string(ResizeMethod method) {
    return method == ResizeMethod::Nearest ? "nearest" : "bicubic";
}

namespace {

void check_dims(const ActionImage& img, Index th, Index tw) {
    if (img.height < 1 || img.width < 1)
        throw ShapeError("resize: source image is empty");
    if (th < 1 || tw < 1) throw ShapeError("resize: target dimensions must be positive");
    if (img.pixels.size() != static_cast<std::size_t>(img.height * img.width * 3))
        throw ShapeError("resize: pixel buffer does not match dimensions");
}

ActionImage resize_nearest(const ActionImage& img, Index th, Index tw) {
    ActionImage out(th, tw);
    for (Index i = 0; i < th; ++i) {
        Index si = static_cast<Index>(
            std::floor((static_cast<double>(i) + 0.5) * static_cast<double>(img.height) /
                       static_cast<double>(th)));
        si = std::min(si, img.height - 1);
        for (Index j = 0; j < tw; ++j) {
            Index sj = static_cast<Index>(
                std::floor((static_cast<double>(j) + 0.5) * static_cast<double>(img.width) /
                           static_cast<double>(tw)));
            sj = std::min(sj, img.width - 1);
            for (Index c = 0; c < 3; ++c) out.at(i, j, c) = img.at(si, sj, c);
        }
    }
    return out;
}

// Catmull-Rom cubic (the a = -0.5 member of the Keys family).
double cubic_weight(double d) {
    d = std::abs(d);
    if (d <= 1.0) return (1.5 * d - 2.5) * d * d + 1.0;
    if (d < 2.0) return ((-0.5 * d + 2.5) * d - 4.0) * d + 2.0;
    return 0.0;
}

struct TapSet {
    Index idx[4];
    double w[4];
};

std::vector<TapSet> make_taps(Index target, Index source) {
    std::vector<TapSet> taps(static_cast<std::size_t>(target));
    for (Index i = 0; i < target; ++i) {
        const double s = (static_cast<double>(i) + 0.5) * static_cast<double>(source) /
                             static_cast<double>(target) -
                         0.5;
        const Index base = static_cast<Index>(std::floor(s));
        TapSet& t = taps[static_cast<std::size_t>(i)];
        for (int u = 0; u < 4; ++u) {
            const Index src = base - 1 + u;
            t.idx[u] = std::clamp(src, Index(0), source - 1);
            t.w[u] = cubic_weight(s - static_cast<double>(src));
        }
    }
    return taps;
}

ActionImage resize_bicubic(const ActionImage& img, Index th, Index tw) {
    const std::vector<TapSet> row_taps = make_taps(th, img.height);
    const std::vector<TapSet> col_taps = make_taps(tw, img.width);

    // Rows first, keeping doubles until the final quantization.
    std::vector<double> inter(static_cast<std::size_t>(th * img.width * 3));
    for (Index i = 0; i < th; ++i) {
        const TapSet& rt = row_taps[static_cast<std::size_t>(i)];
        for (Index j = 0; j < img.width; ++j)
            for (Index c = 0; c < 3; ++c) {
                double acc = 0;
                for (int u = 0; u < 4; ++u)
                    acc += rt.w[u] * static_cast<double>(img.at(rt.idx[u], j, c));
                inter[static_cast<std::size_t>((i * img.width + j) * 3 + c)] = acc;
            }
    }

    ActionImage out(th, tw);
    for (Index i = 0; i < th; ++i)
        for (Index j = 0; j < tw; ++j) {
            const TapSet& ct = col_taps[static_cast<std::size_t>(j)];
            for (Index c = 0; c < 3; ++c) {
                double acc = 0;
                for (int u = 0; u < 4; ++u)
                    acc += ct.w[u] *
                           inter[static_cast<std::size_t>((i * img.width + ct.idx[u]) * 3 + c)];
                acc = std::clamp(acc, 0.0, 255.0);
                out.at(i, j, c) = static_cast<std::uint8_t>(std::lround(acc));
            }
        }
    return out;
}

}  // namespace

ActionImage resize(const ActionImage& img, Index target_height, Index target_width,
                   ResizeMethod method) {
    check_dims(img, target_height, target_width);
    if (method == ResizeMethod::Nearest) return resize_nearest(img, target_height, target_width);
    return resize_bicubic(img, target_height, target_width);
}

ActionImage flip_horizontal(const ActionImage& img) {
    ActionImage out(img.height, img.width);
    for (Index i = 0; i < img.height; ++i)
        for (Index j = 0; j < img.width; ++j)
            for (Index c = 0; c < 3; ++c) out.at(i, j, c) = img.at(i, img.width - 1 - j, c);
    return out;
}

ActionImage flip_vertical(const ActionImage& img) {
    ActionImage out(img.height, img.width);
    for (Index i = 0; i < img.height; ++i)
        for (Index j = 0; j < img.width; ++j)
            for (Index c = 0; c < 3; ++c) out.at(i, j, c) = img.at(img.height - 1 - i, j, c);
    return out;
}

ActionImage crop(const ActionImage& img, Index row0, Index col0, Index h, Index w) {
    if (row0 < 0 || col0 < 0 || h < 1 || w < 1 || row0 + h > img.height || col0 + w > img.width)
        throw CropTooLargeError("crop " + std::to_string(h) + "x" + std::to_string(w) + "+" +
                                std::to_string(row0) + "+" + std::to_string(col0) +
                                " exceeds image " + std::to_string(img.height) + "x" +
                                std::to_string(img.width));
    ActionImage out(h, w);
    for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j)
            for (Index c = 0; c < 3; ++c) out.at(i, j, c) = img.at(row0 + i, col0 + j, c);
    return out;
}

}  // namespace skelres
