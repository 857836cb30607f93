#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skelres/image.hpp"
#include "skelres/skeleton.hpp"

namespace skelres {

/// Row order applied to the joint axis of an encoded image: output row i takes
/// input row order[i]. Shipped configurations group joints into body parts
/// (left arm, right arm, trunk, left leg, right leg) so adjacent rows are
/// physically connected joints.
struct JointPermutation {
    std::string layout;
    std::vector<Index> order;
};

JointPermutation identity_permutation(Index joints);

/// Reads JSON { "layout": name, "order": [ints] }; the order must be a
/// bijection on 0..K-1.
JointPermutation load_permutation(const std::string& path);
JointPermutation parse_permutation(const std::string& json_text);

/// Min/max normalization over every coordinate of the sequence (one shared
/// range for x, y and z), quantized to round(255 * (v - min) / (max - min))
/// with round half away from zero. Output: K rows (joints) by N columns
/// (frames), channels (R,G,B) = (x', y', z').
ActionImage normalize_and_quantize(const SkeletonSequence& seq);

ActionImage reorder_joints(const ActionImage& img, const JointPermutation& perm);

/// normalize -> reorder -> resize.
ActionImage encode_image(const SkeletonSequence& seq, const JointPermutation& perm,
                         Index target_height, Index target_width, ResizeMethod method);

struct AugmentPolicy {
    Index pre_h = 40, pre_w = 40;       // image size the crops are drawn from
    Index crop_h = 32, crop_w = 32;
    int crops_per_image = 8;
    bool horizontal_flip = true;
    bool vertical_flip = true;
    std::uint64_t rng_seed = 0;
};

/// Draws crops_per_image crop origins uniformly with the policy's seed; for
/// each crop emits the crop itself plus its horizontal and vertical flips per
/// the flags, in that order. The default policy yields 8 * 3 = 24 samples.
std::vector<ActionImage> augment(const ActionImage& img, const AugmentPolicy& policy);

}  // namespace skelres
