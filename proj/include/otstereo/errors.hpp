#pragma once

#include <stdexcept>
#include <string>

namespace otstereo {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad caller-supplied value (dimensions, ranges, enum choices).
struct ArgumentError : Error {
  using Error::Error;
};

// Malformed file contents (headers, magic bytes, field counts).
struct FormatError : Error {
  using Error::Error;
};

// Filesystem-level failure (missing file, short read, unwritable path).
struct IoError : Error {
  using Error::Error;
};

// Data that parsed but violates an invariant (NaN payload, checksum mismatch).
struct ValidationError : Error {
  using Error::Error;
};

}  // namespace otstereo
