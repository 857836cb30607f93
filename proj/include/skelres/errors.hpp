#pragma once

#include <stdexcept>
#include <string>

namespace skelres {

// Base class for every error this library throws on contract violations.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- dataset parsing ---
struct RowCountError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct NonFiniteError : Error { using Error::Error; };
struct MissingMetadataError : Error { using Error::Error; };
struct UnknownProtocolError : Error { using Error::Error; };

// Carries the name of the offending field.
struct SchemaError : Error {
    explicit SchemaError(const std::string& field, const std::string& detail = "")
        : Error("schema violation at \"" + field + "\"" + (detail.empty() ? "" : ": " + detail)),
          field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

// --- encoding ---
struct DegenerateRangeError : Error { using Error::Error; };
struct LengthMismatchError : Error { using Error::Error; };
struct CropTooLargeError : Error { using Error::Error; };
struct UnsupportedPngError : Error { using Error::Error; };

// --- tensor engine ---
struct ShapeError : Error { using Error::Error; };
struct RateError : Error { using Error::Error; };
struct LabelRangeError : Error { using Error::Error; };

// --- networks ---
struct DepthError : Error { using Error::Error; };
struct KindError : Error { using Error::Error; };

// --- training ---
struct OutOfRangeError : Error { using Error::Error; };
struct EmptyDatasetError : Error { using Error::Error; };

// --- CLI / persistence ---
struct ConfigError : Error {
    explicit ConfigError(const std::string& field, const std::string& detail = "")
        : Error("invalid config at \"" + field + "\"" + (detail.empty() ? "" : ": " + detail)),
          field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};
struct ChecksumError : Error { using Error::Error; };
struct ProtocolMismatchError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace skelres
