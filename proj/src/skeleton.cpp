#include "skelres/skeleton.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <iterator>

#include <json.hpp>

namespace skelres {

namespace {

double parse_number(const std::string& token) {
    double value = 0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end)
        throw NumericError("unparseable number '" + token + "'");
    return value;
}

}  // namespace

SkeletonSequence parse_text_skeleton(std::istream& text, int joints_per_frame,
                                     int values_per_joint) {
    if (joints_per_frame < 1)
        throw ConfigError("joints_per_frame", "must be positive");
    if (values_per_joint < 3)
        throw ConfigError("values_per_joint", "must be at least 3");

    std::vector<double> values;
    for (std::istream_iterator<std::string> it(text), end; it != end; ++it)
        values.push_back(parse_number(*it));

    if (values.empty() || values.size() % static_cast<std::size_t>(values_per_joint) != 0)
        throw RowCountError("token count " + std::to_string(values.size()) +
                            " is not a positive multiple of values_per_joint=" +
                            std::to_string(values_per_joint));
    const std::size_t rows = values.size() / static_cast<std::size_t>(values_per_joint);
    if (rows % static_cast<std::size_t>(joints_per_frame) != 0)
        throw RowCountError("row count " + std::to_string(rows) +
                            " is not divisible by joints_per_frame=" +
                            std::to_string(joints_per_frame));

    SkeletonSequence seq;
    seq.joints_per_frame = joints_per_frame;
    const std::size_t n_frames = rows / static_cast<std::size_t>(joints_per_frame);
    std::size_t v = 0;
    for (std::size_t f = 0; f < n_frames; ++f) {
        SkeletonFrame frame;
        frame.joints.reserve(static_cast<std::size_t>(joints_per_frame));
        for (int k = 0; k < joints_per_frame; ++k) {
            Joint j{values[v], values[v + 1], values[v + 2]};
            if (!std::isfinite(j.x) || !std::isfinite(j.y) || !std::isfinite(j.z))
                throw NonFiniteError("non-finite coordinate in frame " + std::to_string(f) +
                                     ", joint " + std::to_string(k));
            v += static_cast<std::size_t>(values_per_joint);
            frame.joints.push_back(j);
        }
        seq.frames.push_back(std::move(frame));
    }
    return seq;
}

namespace {

using nlohmann::json;

int require_positive_int(const json& doc, const char* key) {
    if (!doc.contains(key)) throw SchemaError(key, "missing field");
    const json& v = doc.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 1)
        throw SchemaError(key, "must be a positive integer");
    return v.get<int>();
}

}  // namespace

SkeletonSequence parse_canonical_json(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw SchemaError("document", "not a JSON object");

    static const char* known[] = {"subject_id", "action_id",       "repetition",
                                  "camera_id",  "joints_per_frame", "frames"};
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw SchemaError(key, "unknown field");
    }

    SkeletonSequence seq;
    seq.subject_id = require_positive_int(doc, "subject_id");
    seq.action_id = require_positive_int(doc, "action_id");
    seq.repetition = require_positive_int(doc, "repetition");
    seq.joints_per_frame = require_positive_int(doc, "joints_per_frame");
    if (doc.contains("camera_id")) {
        const json& c = doc.at("camera_id");
        if (!c.is_number_integer() || c.get<long long>() < 0)
            throw SchemaError("camera_id", "must be a non-negative integer");
        seq.camera_id = c.get<int>();
    }

    if (!doc.contains("frames")) throw SchemaError("frames", "missing field");
    const json& frames = doc.at("frames");
    if (!frames.is_array() || frames.empty())
        throw SchemaError("frames", "must be a non-empty array");
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const json& fr = frames[f];
        if (!fr.is_array() || fr.size() != static_cast<std::size_t>(seq.joints_per_frame))
            throw SchemaError("frames", "frame " + std::to_string(f) +
                                           " does not have joints_per_frame joints");
        SkeletonFrame frame;
        for (std::size_t k = 0; k < fr.size(); ++k) {
            const json& jt = fr[k];
            if (!jt.is_array() || jt.size() != 3 || !jt[0].is_number() || !jt[1].is_number() ||
                !jt[2].is_number())
                throw SchemaError("frames", "joint " + std::to_string(k) + " of frame " +
                                               std::to_string(f) + " is not [x,y,z]");
            Joint j{jt[0].get<double>(), jt[1].get<double>(), jt[2].get<double>()};
            if (!std::isfinite(j.x) || !std::isfinite(j.y) || !std::isfinite(j.z))
                throw NonFiniteError("non-finite coordinate in frame " + std::to_string(f) +
                                     ", joint " + std::to_string(k));
            frame.joints.push_back(j);
        }
        seq.frames.push_back(std::move(frame));
    }
    return seq;
}

std::string write_canonical_json(const SkeletonSequence& seq) {
    json doc;
    doc["subject_id"] = seq.subject_id;
    doc["action_id"] = seq.action_id;
    doc["repetition"] = seq.repetition;
    if (seq.camera_id != 0) doc["camera_id"] = seq.camera_id;
    doc["joints_per_frame"] = seq.joints_per_frame;
    json frames = json::array();
    for (const auto& frame : seq.frames) {
        json fr = json::array();
        for (const auto& j : frame.joints) fr.push_back(json::array({j.x, j.y, j.z}));
        frames.push_back(std::move(fr));
    }
    doc["frames"] = std::move(frames);
    return doc.dump();
}

FilenameMetadata metadata_from_filename(const std::string& path) {
    std::size_t slash = path.find_last_of("/\\");
    std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
    std::size_t dot = name.find('.');
    if (dot != std::string::npos) name = name.substr(0, dot);

    FilenameMetadata m;
    int consumed = 0;
    if (std::sscanf(name.c_str(), "a%d_s%d_e%d%n", &m.action_id, &m.subject_id, &m.repetition,
                    &consumed) != 3)
        throw SchemaError("filename", "file name '" + name +
                                      "' does not match a{action}_s{subject}_e{rep}");
    const std::string rest = name.substr(static_cast<std::size_t>(consumed));
    if (!rest.empty() && std::sscanf(rest.c_str(), "_c%d", &m.camera_id) != 1)
        throw SchemaError("filename", "unrecognized file name suffix '" + rest + "'");
    return m;
}

std::string sequence_id(const SkeletonSequence& seq) {
    char buf[48];
    if (seq.camera_id != 0)
        std::snprintf(buf, sizeof(buf), "a%02d_s%02d_e%02d_c%02d", seq.action_id, seq.subject_id,
                      seq.repetition, seq.camera_id);
    else
        std::snprintf(buf, sizeof(buf), "a%02d_s%02d_e%02d", seq.action_id, seq.subject_id,
                      seq.repetition);
    return buf;
}

}  // namespace skelres
