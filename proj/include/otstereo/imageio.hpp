#pragma once

#include <string>

#include "otstereo/plane.hpp"

namespace otstereo {

// PFM: Pf (1 channel) / PF (3 channel), scale sign selects endianness.
// File payload is bottom-up; Planes are always top-down in memory.
// write_pfm emits little-endian (negative scale); round trips are bit-exact.
Plane read_pfm(const std::string& path);
void write_pfm(const Plane& plane, const std::string& path);

// PGM: binary P5, 8- or 16-bit. Samples are normalized to [0,1] on load
// and denormalized with the given maxval on store.
Plane read_pgm(const std::string& path);
void write_pgm(const Plane& plane, const std::string& path, int maxval = 65535);

enum class Colormap { gray, turbo };

// 8-bit PNG (grayscale or RGB), values linearly mapped from [vmin, vmax].
void write_png_visualization(const Plane& plane, Colormap colormap,
                             float vmin, float vmax, const std::string& path);

}  // namespace otstereo
