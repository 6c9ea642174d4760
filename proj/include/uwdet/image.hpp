#pragma once

// Dependency-free raster I/O: binary PGM (P5) and PPM (P6), maxval 255.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "uwdet/errors.hpp"

namespace uwdet {

struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;  // 1 (gray) or 3 (rgb)
  std::vector<double> pixels;  // row-major, channel-interleaved, values in [0,1]

  std::size_t pixel_count() const { return width * height * channels; }

  double at(std::size_t r, std::size_t c, std::size_t ch = 0) const {
    return pixels[(r * width + c) * channels + ch];
  }
  double& at(std::size_t r, std::size_t c, std::size_t ch = 0) {
    return pixels[(r * width + c) * channels + ch];
  }

  static ImageBuffer filled(std::size_t w, std::size_t h, std::size_t ch, double v) {
    if (ch != 1 && ch != 3) throw InputError("ImageBuffer: channels must be 1 or 3");
    ImageBuffer img;
    img.width = w;
    img.height = h;
    img.channels = ch;
    img.pixels.assign(w * h * ch, v);
    return img;
  }

  void clamp01() {
    for (double& p : pixels) p = p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p);
  }
};

namespace detail {

// Reads one whitespace-delimited header token, skipping '#' comment lines.
inline std::string next_pnm_token(const std::string& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const char c = bytes[pos];
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])) &&
         bytes[pos] != '#') {
    ++pos;
  }
  if (start == pos) {
    throw FormatError("pnm: unexpected end of header at byte offset " + std::to_string(start));
  }
  return bytes.substr(start, pos - start);
}

inline std::size_t parse_pnm_number(const std::string& tok, std::size_t at) {
  for (char c : tok) {
    if (c < '0' || c > '9') {
      throw FormatError("pnm: expected a number near byte offset " + std::to_string(at));
    }
  }
  return static_cast<std::size_t>(std::stoull(tok));
}

}  // namespace detail

inline ImageBuffer decode_pnm(const std::string& bytes) {
  if (bytes.size() < 2) throw FormatError("pnm: file shorter than magic at byte offset 0");
  std::size_t pos = 0;
  const std::string magic = detail::next_pnm_token(bytes, pos);
  std::size_t channels;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw FormatError("pnm: bad magic '" + magic + "' at byte offset 0");
  }
  const std::size_t wat = pos;
  const std::size_t width = detail::parse_pnm_number(detail::next_pnm_token(bytes, pos), wat);
  const std::size_t hat = pos;
  const std::size_t height = detail::parse_pnm_number(detail::next_pnm_token(bytes, pos), hat);
  const std::size_t mat = pos;
  const std::size_t maxval = detail::parse_pnm_number(detail::next_pnm_token(bytes, pos), mat);
  if (maxval != 255) {
    throw FormatError("pnm: unsupported maxval " + std::to_string(maxval) +
                      " at byte offset " + std::to_string(mat) + " (only 255)");
  }
  // Exactly one whitespace byte separates the header from the payload.
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("pnm: missing payload separator at byte offset " + std::to_string(pos));
  }
  ++pos;
  const std::size_t need = width * height * channels;
  if (bytes.size() - pos < need) {
    throw FormatError("pnm: truncated payload at byte offset " + std::to_string(bytes.size()) +
                      " (need " + std::to_string(need) + " bytes from offset " +
                      std::to_string(pos) + ")");
  }
  ImageBuffer img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.pixels.resize(need);
  for (std::size_t i = 0; i < need; ++i) {
    img.pixels[i] = static_cast<double>(static_cast<unsigned char>(bytes[pos + i])) / 255.0;
  }
  return img;
}

inline std::string encode_pnm(const ImageBuffer& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw InputError("pnm: channels must be 1 or 3");
  }
  if (img.pixels.size() != img.pixel_count()) {
    throw InputError("pnm: pixel buffer does not match dimensions");
  }
  std::string out = (img.channels == 1 ? "P5" : "P6");
  out += "\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.pixels.size());
  for (double p : img.pixels) {
    const double v = p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p);
    // round half away from zero; exact inverse of decode on byte-valued data
    out += static_cast<char>(static_cast<unsigned char>(std::floor(v * 255.0 + 0.5)));
  }
  return out;
}

inline ImageBuffer read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("read_image: cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_pnm(bytes);
}

inline void write_image(const ImageBuffer& img, const std::string& path) {
  const std::string bytes = encode_pnm(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("write_image: cannot open '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write_image: short write to '" + path + "'");
}

}  // namespace uwdet
