#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "skelres/errors.hpp"

namespace skelres {

struct Joint {
    double x = 0, y = 0, z = 0;
};

struct SkeletonFrame {
    std::vector<Joint> joints;
};

/// One recorded action performance: N frames of K joints plus the metadata
/// the evaluation protocols key on. camera_id is 0 when the source corpus
/// has no camera notion (only cross-view splits require it).
struct SkeletonSequence {
    std::vector<SkeletonFrame> frames;
    int subject_id = 0;
    int action_id = 0;
    int repetition = 0;
    int camera_id = 0;
    int joints_per_frame = 0;

    int num_frames() const { return static_cast<int>(frames.size()); }
};

/// Reads whitespace-delimited rows of values_per_joint numbers, one joint per
/// row, joints_per_frame rows per frame. Only the first three values of a row
/// become (x, y, z); trailing values (confidence flags and the like) are
/// dropped. Metadata is left for the caller to fill in.
SkeletonSequence parse_text_skeleton(std::istream& text, int joints_per_frame,
                                     int values_per_joint);

/// Canonical JSON form:
///   { "subject_id": int, "action_id": int, "repetition": int,
///     "joints_per_frame": int, "frames": [ [ [x,y,z] * K ] * N ] }
/// plus optional "camera_id". Numbers round-trip exactly (shortest-decimal
/// serialization). Unknown keys are rejected.
SkeletonSequence parse_canonical_json(const std::string& text);
std::string write_canonical_json(const SkeletonSequence& seq);

/// Metadata parsed from the conventional file name "a{action}_s{subject}_e{rep}"
/// with an optional "_c{camera}" tag, ignoring directory and extension.
struct FilenameMetadata {
    int action_id = 0;
    int subject_id = 0;
    int repetition = 0;
    int camera_id = 0;
};
FilenameMetadata metadata_from_filename(const std::string& path);

/// Identifier used in protocol splits and output naming: a%02d_s%02d_e%02d,
/// with _c%02d appended when the sequence carries a camera.
std::string sequence_id(const SkeletonSequence& seq);

}  // namespace skelres
