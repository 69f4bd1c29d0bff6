#include "otstereo/imageio.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace otstereo {
namespace {

constexpr bool host_is_little_endian() {
  return std::endian::native == std::endian::little;
}

void byteswap_f32(std::vector<float>& v) {
  for (float& f : v) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    u = __builtin_bswap32(u);
    std::memcpy(&f, &u, 4);
  }
}

// Reads one whitespace-delimited token, skipping '#' comment lines (PGM).
std::string next_token(std::istream& in, bool allow_comments) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (allow_comments && c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

int parse_int(const std::string& tok, const char* what) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError(std::string("bad ") + what + " field: '" + tok + "'");
  }
}

}  // namespace

Plane read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);

  std::string magic = next_token(in, false);
  int channels;
  if (magic == "Pf")
    channels = 1;
  else if (magic == "PF")
    channels = 3;
  else
    throw FormatError("not a PFM file: " + path);

  int w = parse_int(next_token(in, false), "width");
  int h = parse_int(next_token(in, false), "height");
  if (w <= 0 || h <= 0) throw FormatError("bad PFM dimensions in " + path);

  std::string scale_tok = next_token(in, false);
  double scale;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    throw FormatError("bad PFM scale in " + path);
  }
  if (scale == 0.0) throw FormatError("zero PFM scale in " + path);

  std::size_t n = static_cast<std::size_t>(w) * h * channels;
  std::vector<float> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(n * 4));
  if (static_cast<std::size_t>(in.gcount()) != n * 4)
    throw IoError("truncated PFM payload in " + path);

  const bool file_little = scale < 0.0;
  if (file_little != host_is_little_endian()) byteswap_f32(raw);

  // Payload scanlines run bottom-up; normalize to top-down.
  Plane plane(w, h, channels);
  const std::size_t row = static_cast<std::size_t>(w) * channels;
  for (int y = 0; y < h; ++y)
    std::copy_n(raw.begin() + static_cast<std::size_t>(h - 1 - y) * row, row,
                plane.data.begin() + static_cast<std::size_t>(y) * row);

  if (!plane.all_finite())
    throw ValidationError("non-finite values in PFM payload: " + path);
  return plane;
}

void write_pfm(const Plane& plane, const std::string& path) {
  if (plane.channels != 1 && plane.channels != 3)
    throw ArgumentError("write_pfm: plane must have 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);

  out << (plane.channels == 1 ? "Pf" : "PF") << '\n'
      << plane.width << ' ' << plane.height << '\n'
      << "-1.0" << '\n';

  const std::size_t row = static_cast<std::size_t>(plane.width) * plane.channels;
  std::vector<float> buf(row);
  for (int y = plane.height - 1; y >= 0; --y) {
    std::copy_n(plane.data.begin() + static_cast<std::size_t>(y) * row, row,
                buf.begin());
    if (!host_is_little_endian()) byteswap_f32(buf);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(row * 4));
  }
  if (!out) throw IoError("short write to " + path);
}

Plane read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);

  std::string magic = next_token(in, true);
  if (magic != "P5") throw FormatError("not a binary PGM file: " + path);
  int w = parse_int(next_token(in, true), "width");
  int h = parse_int(next_token(in, true), "height");
  int maxval = parse_int(next_token(in, true), "maxval");
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    throw FormatError("bad PGM header in " + path);

  std::size_t n = static_cast<std::size_t>(w) * h;
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(n * bytes);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw IoError("truncated PGM payload in " + path);

  Plane plane(w, h, 1);
  const float inv = 1.0f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < n; ++i) {
    unsigned v = bytes == 1 ? raw[i]
                            : (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
    plane.data[i] = static_cast<float>(v) * inv;
  }
  return plane;
}

void write_pgm(const Plane& plane, const std::string& path, int maxval) {
  if (plane.channels != 1)
    throw ArgumentError("write_pgm: plane must be single-channel");
  if (maxval <= 0 || maxval > 65535)
    throw ArgumentError("write_pgm: maxval out of range");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);

  out << "P5\n" << plane.width << ' ' << plane.height << '\n' << maxval << '\n';
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(plane.data.size() * bytes);
  for (std::size_t i = 0; i < plane.data.size(); ++i) {
    float v = std::clamp(plane.data[i], 0.0f, 1.0f);
    unsigned q = static_cast<unsigned>(
        std::lround(static_cast<double>(v) * maxval));
    if (bytes == 1) {
      raw[i] = static_cast<unsigned char>(q);
    } else {
      raw[2 * i] = static_cast<unsigned char>(q >> 8);
      raw[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("short write to " + path);
}

namespace {

// Polynomial fit of the Turbo colormap, input t in [0,1].
std::array<float, 3> turbo_rgb(float t) {
  t = std::clamp(t, 0.0f, 1.0f);
  const float t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
  float r = 0.13572138f + 4.61539260f * t - 42.66032258f * t2 +
            132.13108234f * t3 - 152.94239396f * t4 + 59.28637943f * t5;
  float g = 0.09140261f + 2.19418839f * t + 4.84296658f * t2 -
            14.18503333f * t3 + 4.27729857f * t4 + 2.82956604f * t5;
  float b = 0.10667330f + 12.64194608f * t - 60.58204836f * t2 +
            110.36276771f * t3 - 89.90310912f * t4 + 27.34824973f * t5;
  return {std::clamp(r, 0.0f, 1.0f), std::clamp(g, 0.0f, 1.0f),
          std::clamp(b, 0.0f, 1.0f)};
}

void put_u32_be(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(static_cast<unsigned char>(x >> 24));
  v.push_back(static_cast<unsigned char>(x >> 16));
  v.push_back(static_cast<unsigned char>(x >> 8));
  v.push_back(static_cast<unsigned char>(x));
}

void png_chunk(std::ofstream& out, const char type[4],
               const std::vector<unsigned char>& payload) {
  std::vector<unsigned char> head;
  put_u32_be(head, static_cast<std::uint32_t>(payload.size()));
  out.write(reinterpret_cast<const char*>(head.data()), 4);
  out.write(type, 4);
  if (!payload.empty())
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
  std::uint32_t crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  if (!payload.empty())
    crc = crc32(crc, payload.data(), static_cast<uInt>(payload.size()));
  std::vector<unsigned char> tail;
  put_u32_be(tail, crc);
  out.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void write_png_visualization(const Plane& plane, Colormap colormap,
                             float vmin, float vmax, const std::string& path) {
  if (!(vmin < vmax))
    throw ArgumentError("write_png_visualization: vmin must be < vmax");
  if (plane.channels != 1)
    throw ArgumentError("write_png_visualization: plane must be single-channel");

  const int w = plane.width, h = plane.height;
  const int nchan = colormap == Colormap::gray ? 1 : 3;
  const float inv_span = 1.0f / (vmax - vmin);

  // Raw scanlines, filter byte 0 per row.
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(h) * (1 + static_cast<std::size_t>(w) * nchan));
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);
    for (int x = 0; x < w; ++x) {
      float t = std::clamp((plane.at(y, x) - vmin) * inv_span, 0.0f, 1.0f);
      if (nchan == 1) {
        raw.push_back(static_cast<unsigned char>(std::lround(255.0 * t)));
      } else {
        auto rgb = turbo_rgb(t);
        for (float c : rgb)
          raw.push_back(static_cast<unsigned char>(std::lround(255.0 * c)));
      }
    }
  }

  uLongf comp_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> comp(comp_size);
  if (compress2(comp.data(), &comp_size, raw.data(),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("PNG deflate failed for " + path);
  comp.resize(comp_size);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<unsigned char> ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(w));
  put_u32_be(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8);                                 // bit depth
  ihdr.push_back(nchan == 1 ? 0 : 2);                // gray / truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  png_chunk(out, "IHDR", ihdr);
  png_chunk(out, "IDAT", comp);
  png_chunk(out, "IEND", {});
  if (!out) throw IoError("short write to " + path);
}

}  // namespace otstereo
