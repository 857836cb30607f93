#include "skelres/encoder.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "skelres/rng.hpp"

namespace skelres {

JointPermutation identity_permutation(Index joints) {
    JointPermutation p;
    p.layout = "identity" + std::to_string(joints);
    for (Index i = 0; i < joints; ++i) p.order.push_back(i);
    return p;
}

JointPermutation parse_permutation(const std::string& json_text) {
    nlohmann::json doc = nlohmann::json::parse(json_text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw SchemaError("document", "permutation file is not a JSON object");
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        if (key != "layout" && key != "order") throw SchemaError(key, "unknown field");
    }
    if (!doc.contains("layout") || !doc.at("layout").is_string())
        throw SchemaError("layout", "missing or non-string");
    if (!doc.contains("order") || !doc.at("order").is_array() || doc.at("order").empty())
        throw SchemaError("order", "missing or empty");

    JointPermutation p;
    p.layout = doc.at("layout").get<std::string>();
    for (const auto& v : doc.at("order")) {
        if (!v.is_number_integer()) throw SchemaError("order", "entries must be integers");
        p.order.push_back(v.get<Index>());
    }
    const Index k = static_cast<Index>(p.order.size());
    std::vector<bool> seen(static_cast<std::size_t>(k), false);
    for (Index v : p.order) {
        if (v < 0 || v >= k || seen[static_cast<std::size_t>(v)])
            throw SchemaError("order", "not a bijection on 0.." + std::to_string(k - 1));
        seen[static_cast<std::size_t>(v)] = true;
    }
    return p;
}

JointPermutation load_permutation(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open permutation file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_permutation(buf.str());
}

ActionImage normalize_and_quantize(const SkeletonSequence& seq) {
    if (seq.frames.empty()) throw ShapeError("cannot encode a sequence with no frames");
    const Index k = static_cast<Index>(seq.frames.front().joints.size());
    if (k < 1) throw ShapeError("cannot encode a sequence with no joints");
    for (const auto& f : seq.frames)
        if (static_cast<Index>(f.joints.size()) != k)
            throw ShapeError("inconsistent joint count across frames");

    double lo = seq.frames[0].joints[0].x, hi = lo;
    for (const auto& f : seq.frames)
        for (const auto& j : f.joints)
            for (double v : {j.x, j.y, j.z}) {
                if (!std::isfinite(v)) throw NonFiniteError("non-finite coordinate in sequence");
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    if (hi <= lo)
        throw DegenerateRangeError("all coordinates equal (" + std::to_string(lo) +
                                   "); the min/max range is empty");

    const Index n = static_cast<Index>(seq.frames.size());
    const double scale = 255.0 / (hi - lo);
    ActionImage img(k, n);
    for (Index col = 0; col < n; ++col) {
        const auto& joints = seq.frames[static_cast<std::size_t>(col)].joints;
        for (Index row = 0; row < k; ++row) {
            const Joint& j = joints[static_cast<std::size_t>(row)];
            img.at(row, col, 0) = static_cast<std::uint8_t>(std::lround((j.x - lo) * scale));
            img.at(row, col, 1) = static_cast<std::uint8_t>(std::lround((j.y - lo) * scale));
            img.at(row, col, 2) = static_cast<std::uint8_t>(std::lround((j.z - lo) * scale));
        }
    }
    return img;
}

ActionImage reorder_joints(const ActionImage& img, const JointPermutation& perm) {
    if (static_cast<Index>(perm.order.size()) != img.height)
        throw LengthMismatchError("permutation covers " + std::to_string(perm.order.size()) +
                                  " joints but the image has " + std::to_string(img.height) +
                                  " rows");
    ActionImage out(img.height, img.width);
    for (Index i = 0; i < img.height; ++i) {
        const Index src = perm.order[static_cast<std::size_t>(i)];
        for (Index j = 0; j < img.width; ++j)
            for (Index c = 0; c < 3; ++c) out.at(i, j, c) = img.at(src, j, c);
    }
    return out;
}

ActionImage encode_image(const SkeletonSequence& seq, const JointPermutation& perm,
                         Index target_height, Index target_width, ResizeMethod method) {
    return resize(reorder_joints(normalize_and_quantize(seq), perm), target_height, target_width,
                  method);
}

std::vector<ActionImage> augment(const ActionImage& img, const AugmentPolicy& policy) {
    if (img.height != policy.pre_h || img.width != policy.pre_w)
        throw ShapeError("augment: image is " + std::to_string(img.height) + "x" +
                         std::to_string(img.width) + " but the policy expects " +
                         std::to_string(policy.pre_h) + "x" + std::to_string(policy.pre_w));
    if (policy.crop_h > policy.pre_h || policy.crop_w > policy.pre_w)
        throw CropTooLargeError("crop " + std::to_string(policy.crop_h) + "x" +
                                std::to_string(policy.crop_w) + " exceeds the " +
                                std::to_string(policy.pre_h) + "x" +
                                std::to_string(policy.pre_w) + " source");
    if (policy.crops_per_image < 0)
        throw ConfigError("crops_per_image", "must be non-negative");

    std::mt19937_64 rng(policy.rng_seed);
    std::vector<ActionImage> out;
    for (int i = 0; i < policy.crops_per_image; ++i) {
        const Index row0 =
            static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(
                                                      policy.pre_h - policy.crop_h + 1)));
        const Index col0 =
            static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(
                                                      policy.pre_w - policy.crop_w + 1)));
        ActionImage c = crop(img, row0, col0, policy.crop_h, policy.crop_w);
        ActionImage h, v;
        if (policy.horizontal_flip) h = flip_horizontal(c);
        if (policy.vertical_flip) v = flip_vertical(c);
        out.push_back(std::move(c));
        if (policy.horizontal_flip) out.push_back(std::move(h));
        if (policy.vertical_flip) out.push_back(std::move(v));
    }
    return out;
}

}  // namespace skelres
