#pragma once

#include <string>

#include "skelres/resnet.hpp"

namespace skelres {

/// Checkpoint layout: "SKRN" magic, one version byte (1), little-endian u32
/// header length, JSON header { "spec": ..., "tensors": [{name, shape,
/// offset}...] }, then every tensor's raw little-endian float32 data at its
/// stated byte offset. The loader validates magic, version, manifest
/// completeness, and total file length, throwing ChecksumError on any
/// mismatch (truncation included).
void save_checkpoint(const std::string& path, const NetworkParams<float>& net);
NetworkParams<float> load_checkpoint(const std::string& path);

/// JSON (de)serialization of an architecture description, shared by the
/// checkpoint header and the CLI's summaries.
std::string spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json_text(const std::string& text);

}  // namespace skelres
