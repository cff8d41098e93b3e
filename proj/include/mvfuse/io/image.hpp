// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#ifndef MVFUSE_IO_IMAGE_HPP
#define MVFUSE_IO_IMAGE_HPP

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "mvfuse/core.hpp"

namespace mvfuse::io {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline ImageRaster read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  require(fp != nullptr, ErrorCode::IoFailure, "cannot open '" + path + "'");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::IoFailure, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(ErrorCode::IoFailure, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::MalformedHeader, "libpng rejected '" + path + "'");
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);

  // Normalize every input variant to 8-bit RGB.
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  std::vector<png_byte> row(png_get_rowbytes(png, info));
  ImageRaster raster(static_cast<int>(width), static_cast<int>(height), 3);
  for (png_uint_32 y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        raster.at(static_cast<int>(x), static_cast<int>(y), c) = row[x * 3 + c] / 255.0f;
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return raster;
}

struct JpegErrorMgr {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  longjmp(mgr->jump, 1);
}

inline ImageRaster read_jpeg(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  require(fp != nullptr, ErrorCode::IoFailure, "cannot open '" + path + "'");

  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    fail(ErrorCode::MalformedHeader, "libjpeg rejected '" + path + "'");
  }

  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, fp.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);

  ImageRaster raster(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height),
                     3);
  std::vector<JSAMPLE> row(static_cast<std::size_t>(cinfo.output_width) * 3);
  JSAMPROW rows[1] = {row.data()};
  while (cinfo.output_scanline < cinfo.output_height) {
    const int y = static_cast<int>(cinfo.output_scanline);
    jpeg_read_scanlines(&cinfo, rows, 1);
    for (int x = 0; x < raster.width; ++x) {
      for (int c = 0; c < 3; ++c) raster.at(x, y, c) = row[x * 3 + c] / 255.0f;
    }
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return raster;
}

}  // namespace detail

/// Reads a PNG or JPEG file into a 3-channel [0,1] raster, dispatching on
/// the file extension.
inline ImageRaster read_image(const std::string& path) {
  const auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == "png") return detail::read_png(path);
  if (ext == "jpg" || ext == "jpeg") return detail::read_jpeg(path);
  fail(ErrorCode::UnsupportedProperty, "unsupported image extension '" + ext + "'");
}

/// Writes a raster as an 8-bit PNG (gray or RGB depending on the channel
/// count); values are clamped to [0,1]. Quantization makes this lossy.
inline void write_png(const std::string& path, const ImageRaster& image) {
  require(image.valid(), ErrorCode::Precondition, "invalid raster");
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  require(fp != nullptr, ErrorCode::IoFailure, "cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::IoFailure, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    fail(ErrorCode::IoFailure, "libpng write failed for '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width, image.height, 8,
               image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(image.width) * image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        const float v = std::clamp(image.at(x, y, c), 0.0f, 1.0f);
        row[static_cast<std::size_t>(x) * image.channels + c] =
            static_cast<png_byte>(std::lround(v * 255.0f));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Writes a 3-channel raster as a JPEG (quality 0..100).
inline void write_jpeg(const std::string& path, const ImageRaster& image, int quality = 90) {
  require(image.valid() && image.channels == 3, ErrorCode::Precondition,
          "JPEG export wants a 3-channel raster");
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  require(fp != nullptr, ErrorCode::IoFailure, "cannot open '" + path + "' for writing");

  jpeg_compress_struct cinfo;
  detail::JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = detail::jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    fail(ErrorCode::IoFailure, "libjpeg write failed for '" + path + "'");
  }
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, fp.get());
  cinfo.image_width = static_cast<JDIMENSION>(image.width);
  cinfo.image_height = static_cast<JDIMENSION>(image.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  std::vector<JSAMPLE> row(static_cast<std::size_t>(image.width) * 3);
  JSAMPROW rows[1] = {row.data()};
  while (cinfo.next_scanline < cinfo.image_height) {
    const int y = static_cast<int>(cinfo.next_scanline);
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(x, y, c), 0.0f, 1.0f);
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<JSAMPLE>(std::lround(v * 255.0f));
      }
    }
    jpeg_write_scanlines(&cinfo, rows, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
}

/// Lossy 8-bit grayscale PNG preview of a depth map: finite values are
/// min-max normalized, +inf renders as black. For exact storage use
/// write_depth_map (PFM).
inline void write_depth_png(const std::string& path, const ImageRaster& depth) {
  require(depth.channels == 1, ErrorCode::Precondition, "depth preview wants 1 channel");
  float lo = std::numeric_limits<float>::infinity();
  float hi = -std::numeric_limits<float>::infinity();
  for (float v : depth.data) {
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const float span = (hi > lo) ? hi - lo : 1.0f;

  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  require(fp != nullptr, ErrorCode::IoFailure, "cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::IoFailure, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    fail(ErrorCode::IoFailure, "libpng write failed for '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, depth.width, depth.height, 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(depth.width);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const float v = depth.at(x, y);
      // Near maps to white, far to dark, unset to black.
      row[x] = std::isfinite(v)
                   ? static_cast<png_byte>(std::lround(255.0f * (1.0f - (v - lo) / span)))
                   : 0;
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace mvfuse::io

#endif  // MVFUSE_IO_IMAGE_HPP
