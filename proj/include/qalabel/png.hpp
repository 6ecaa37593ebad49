/* Copyright 2026 The qalabel Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Minimal 8-bit grayscale PNG writer and base64 encoder, enough to ship
// dataset images to a browser inside JSON.

#include <zlib.h>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "qalabel/error.hpp"

namespace qalabel {

namespace detail {

inline void png_chunk(std::string& out, std::string_view type, std::string_view data) {
  const auto put32 = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
  };
  put32(static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.append(type);
  out.append(data);
  const auto* crc_from = reinterpret_cast<const Bytef*>(out.data() + start);
  put32(static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), crc_from, static_cast<uInt>(out.size() - start))));
}

}  // namespace detail

// pixels is row-major, width * height bytes.
inline std::string encode_png_gray(int width, int height, std::span<const std::uint8_t> pixels) {
  if (width < 1 || height < 1 ||
      pixels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw InvalidArgument("PNG dimensions do not match the pixel buffer");
  }
  std::string out = "\x89PNG\r\n\x1a\n";
  std::string ihdr;
  for (std::uint32_t v : {static_cast<std::uint32_t>(width), static_cast<std::uint32_t>(height)}) {
    for (int s = 24; s >= 0; s -= 8) ihdr.push_back(static_cast<char>((v >> s) & 0xff));
  }
  ihdr += std::string("\x08\x00\x00\x00\x00", 5);  // depth 8, grayscale, no interlace
  detail::png_chunk(out, "IHDR", ihdr);

  // Each scanline is prefixed by filter type 0.
  std::string raw;
  raw.reserve(pixels.size() + static_cast<std::size_t>(height));
  for (int r = 0; r < height; ++r) {
    raw.push_back('\0');
    const auto* row = pixels.data() + static_cast<std::size_t>(r) * width;
    raw.append(reinterpret_cast<const char*>(row), static_cast<std::size_t>(width));
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(packed_size, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &packed_size,
                reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                Z_BEST_COMPRESSION) != Z_OK) {
    throw Error("zlib compression failed");
  }
  packed.resize(packed_size);
  detail::png_chunk(out, "IDAT", packed);
  detail::png_chunk(out, "IEND", {});
  return out;
}

inline std::string base64_encode(std::string_view in) {
  static constexpr char kAlphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const std::uint32_t v = (static_cast<std::uint8_t>(in[i]) << 16) |
                            (static_cast<std::uint8_t>(in[i + 1]) << 8) |
                            static_cast<std::uint8_t>(in[i + 2]);
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(kAlphabet[(v >> 6) & 63]);
    out.push_back(kAlphabet[v & 63]);
  }
  if (i < in.size()) {
    std::uint32_t v = static_cast<std::uint8_t>(in[i]) << 16;
    if (i + 1 < in.size()) v |= static_cast<std::uint8_t>(in[i + 1]) << 8;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(i + 1 < in.size() ? kAlphabet[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

}  // namespace qalabel
