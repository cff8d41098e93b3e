// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#ifndef MVFUSE_IO_PFM_HPP
#define MVFUSE_IO_PFM_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "mvfuse/core.hpp"

namespace mvfuse::io {

/// Writes a single-channel float raster as grayscale PFM (scale -1.0 =
/// little-endian). Rows are stored bottom-up per the PFM convention. Unset
/// pixels are expected to carry +infinity; values round-trip bit-exactly.
inline void write_depth_map(const std::string& path, const ImageRaster& depth) {
  require(depth.valid(), ErrorCode::Precondition, "invalid raster");
  require(depth.channels == 1, ErrorCode::Precondition, "depth map must be single-channel");

  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoFailure, "cannot open '" + path + "' for writing");
  out << "Pf\n" << depth.width << ' ' << depth.height << "\n-1.0\n";
  for (int y = depth.height - 1; y >= 0; --y) {
    for (int x = 0; x < depth.width; ++x) {
      const float v = depth.at(x, y);
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      const char b[4] = {static_cast<char>(bits), static_cast<char>(bits >> 8),
                         static_cast<char>(bits >> 16), static_cast<char>(bits >> 24)};
      out.write(b, 4);
    }
  }
  require(out.good(), ErrorCode::IoFailure, "write failed for '" + path + "'");
}

inline ImageRaster read_depth_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoFailure, "cannot open '" + path + "'");

  std::string magic;
  in >> magic;
  require(magic == "Pf", ErrorCode::MalformedHeader, "not a grayscale PFM file");
  int width = 0, height = 0;
  double scale = 0.0;
  in >> width >> height >> scale;
  require(in.good() && width >= 1 && height >= 1, ErrorCode::MalformedHeader,
          "bad PFM dimensions");
  require(scale < 0.0, ErrorCode::UnsupportedProperty, "big-endian PFM not supported");
  in.get();  // single whitespace byte after the scale

  ImageRaster raster(width, height, 1);
  for (int y = height - 1; y >= 0; --y) {
    for (int x = 0; x < width; ++x) {
      unsigned char b[4];
      in.read(reinterpret_cast<char*>(b), 4);
      if (!in) fail(ErrorCode::TruncatedData, "short PFM payload");
      const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                                 (static_cast<std::uint32_t>(b[1]) << 8) |
                                 (static_cast<std::uint32_t>(b[2]) << 16) |
                                 (static_cast<std::uint32_t>(b[3]) << 24);
      float v;
      std::memcpy(&v, &bits, 4);
      raster.at(x, y) = v;
    }
  }
  return raster;
}

}  // namespace mvfuse::io

#endif  // MVFUSE_IO_PFM_HPP
