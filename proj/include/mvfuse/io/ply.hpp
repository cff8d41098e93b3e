// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#ifndef MVFUSE_IO_PLY_HPP
#define MVFUSE_IO_PLY_HPP

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mvfuse/core.hpp"

namespace mvfuse::io {

namespace detail {

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

inline PlyType parse_ply_type(const std::string& name) {
  if (name == "char" || name == "int8") return PlyType::Int8;
  if (name == "uchar" || name == "uint8") return PlyType::UInt8;
  if (name == "short" || name == "int16") return PlyType::Int16;
  if (name == "ushort" || name == "uint16") return PlyType::UInt16;
  if (name == "int" || name == "int32") return PlyType::Int32;
  if (name == "uint" || name == "uint32") return PlyType::UInt32;
  if (name == "float" || name == "float32") return PlyType::Float32;
  if (name == "double" || name == "float64") return PlyType::Float64;
  fail(ErrorCode::UnsupportedProperty, "unknown PLY property type '" + name + "'");
}

inline std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
  bool has_list = false;
};

inline double read_binary_scalar(std::istream& in, PlyType t) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(ply_type_size(t)));
  if (!in) fail(ErrorCode::TruncatedData, "unexpected end of PLY payload");
  auto le = [&](int n) {
    std::uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) v = (v << 8) | buf[i];
    return v;
  };
  switch (t) {
    case PlyType::Int8: return static_cast<double>(static_cast<std::int8_t>(buf[0]));
    case PlyType::UInt8: return static_cast<double>(buf[0]);
    case PlyType::Int16: return static_cast<double>(static_cast<std::int16_t>(le(2)));
    case PlyType::UInt16: return static_cast<double>(static_cast<std::uint16_t>(le(2)));
    case PlyType::Int32: return static_cast<double>(static_cast<std::int32_t>(le(4)));
    case PlyType::UInt32: return static_cast<double>(static_cast<std::uint32_t>(le(4)));
    case PlyType::Float32: {
      const std::uint32_t bits = static_cast<std::uint32_t>(le(4));
      float f;
      std::memcpy(&f, &bits, 4);
      return static_cast<double>(f);
    }
    case PlyType::Float64: {
      const std::uint64_t bits = le(8);
      double d;
      std::memcpy(&d, &bits, 8);
      return d;
    }
  }
  return 0.0;
}

}  // namespace detail

/// Reads a PLY point cloud (ASCII or binary little-endian). Vertex x/y/z are
/// required; uchar red/green/blue and integer label channels are picked up
/// when present, colors rescaled to [0,1]. Unknown scalar vertex properties
/// are skipped. Elements after "vertex" are ignored.
inline PointCloud read_point_cloud(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoFailure, "cannot open '" + path + "'");

  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "ply", ErrorCode::MalformedHeader, "missing 'ply' magic");

  bool binary = false;
  bool format_seen = false;
  std::vector<detail::PlyElement> elements;
  double resolution_c = 0.0;

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string keyword;
    ls >> keyword;
    if (keyword == "comment" || keyword == "obj_info") {
      std::string tag;
      ls >> tag;
      if (tag == "resolution_c") ls >> resolution_c;
      continue;
    }
    if (keyword == "format") {
      std::string fmt, version;
      ls >> fmt >> version;
      if (fmt == "ascii") {
        binary = false;
      } else if (fmt == "binary_little_endian") {
        binary = true;
      } else {
        fail(ErrorCode::UnsupportedProperty, "unsupported PLY format '" + fmt + "'");
      }
      format_seen = true;
      continue;
    }
    if (keyword == "element") {
      detail::PlyElement el;
      ls >> el.name >> el.count;
      require(!ls.fail(), ErrorCode::MalformedHeader, "malformed element line");
      elements.push_back(el);
      continue;
    }
    if (keyword == "property") {
      require(!elements.empty(), ErrorCode::MalformedHeader, "property before any element");
      std::string type_name;
      ls >> type_name;
      if (type_name == "list") {
        elements.back().has_list = true;
        continue;
      }
      detail::PlyProperty prop;
      prop.type = detail::parse_ply_type(type_name);
      ls >> prop.name;
      require(!ls.fail(), ErrorCode::MalformedHeader, "malformed property line");
      elements.back().properties.push_back(prop);
      continue;
    }
    if (keyword == "end_header") break;
    fail(ErrorCode::MalformedHeader, "unexpected header keyword '" + keyword + "'");
  }
  require(format_seen, ErrorCode::MalformedHeader, "missing format line");

  const detail::PlyElement* vertex = nullptr;
  std::size_t vertex_index = 0;
  for (std::size_t i = 0; i < elements.size(); ++i) {
    if (elements[i].name == "vertex") {
      vertex = &elements[i];
      vertex_index = i;
      break;
    }
  }
  require(vertex != nullptr, ErrorCode::MalformedHeader, "no vertex element");
  require(!vertex->has_list, ErrorCode::UnsupportedProperty, "list property on vertex element");

  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1, il = -1;
  for (std::size_t i = 0; i < vertex->properties.size(); ++i) {
    const auto& p = vertex->properties[i];
    if (p.name == "x") ix = static_cast<int>(i);
    else if (p.name == "y") iy = static_cast<int>(i);
    else if (p.name == "z") iz = static_cast<int>(i);
    else if (p.name == "red") ir = static_cast<int>(i);
    else if (p.name == "green") ig = static_cast<int>(i);
    else if (p.name == "blue") ib = static_cast<int>(i);
    else if (p.name == "label") il = static_cast<int>(i);
  }
  require(ix >= 0 && iy >= 0 && iz >= 0, ErrorCode::MalformedHeader,
          "vertex element lacks x/y/z");
  const bool has_color = ir >= 0 && ig >= 0 && ib >= 0;
  const bool color_is_byte = has_color && vertex->properties[ir].type == detail::PlyType::UInt8;

  // Elements declared before vertex must be traversed to reach the payload.
  for (std::size_t i = 0; i < vertex_index; ++i) {
    const auto& el = elements[i];
    require(!el.has_list, ErrorCode::UnsupportedProperty,
            "cannot skip element with list property before vertex data");
    if (binary) {
      std::size_t row = 0;
      for (const auto& p : el.properties) row += detail::ply_type_size(p.type);
      in.seekg(static_cast<std::streamoff>(row * el.count), std::ios::cur);
    } else {
      for (std::size_t r = 0; r < el.count; ++r) {
        if (!std::getline(in, line)) fail(ErrorCode::TruncatedData, "truncated leading element");
      }
    }
  }

  PointCloud cloud;
  cloud.positions.reserve(vertex->count);
  if (has_color) cloud.colors.reserve(vertex->count);
  if (il >= 0) cloud.labels.reserve(vertex->count);
  if (resolution_c > 0.0) cloud.resolution_c = resolution_c;

  const std::size_t num_props = vertex->properties.size();
  std::vector<double> row(num_props);
  for (std::size_t r = 0; r < vertex->count; ++r) {
    if (binary) {
      for (std::size_t p = 0; p < num_props; ++p) {
        row[p] = detail::read_binary_scalar(in, vertex->properties[p].type);
      }
    } else {
      if (!std::getline(in, line)) fail(ErrorCode::TruncatedData, "vertex count exceeds rows");
      std::istringstream ls(line);
      for (std::size_t p = 0; p < num_props; ++p) {
        if (!(ls >> row[p])) fail(ErrorCode::TruncatedData, "short vertex row");
      }
    }
    cloud.positions.emplace_back(row[ix], row[iy], row[iz]);
    if (has_color) {
      const float scale = color_is_byte ? 1.0f / 255.0f : 1.0f;
      cloud.colors.push_back({static_cast<float>(row[ir]) * scale,
                              static_cast<float>(row[ig]) * scale,
                              static_cast<float>(row[ib]) * scale});
    }
    if (il >= 0) cloud.labels.push_back(static_cast<std::int32_t>(row[il]));
  }
  cloud.validate();
  return cloud;
}

/// Writes a binary little-endian PLY. The grid resolution travels in a
/// comment so read_point_cloud can restore it.
inline void write_point_cloud(const std::string& path, const PointCloud& cloud) {
  cloud.validate();
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoFailure, "cannot open '" + path + "' for writing");

  out << "ply\nformat binary_little_endian 1.0\n";
  out << "comment resolution_c " << cloud.resolution_c << "\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_colors()) {
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  if (cloud.has_labels()) out << "property int label\n";
  out << "end_header\n";

  auto put_f32 = [&](float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    char b[4] = {static_cast<char>(bits), static_cast<char>(bits >> 8),
                 static_cast<char>(bits >> 16), static_cast<char>(bits >> 24)};
    out.write(b, 4);
  };
  auto put_i32 = [&](std::int32_t v) {
    const auto u = static_cast<std::uint32_t>(v);
    char b[4] = {static_cast<char>(u), static_cast<char>(u >> 8), static_cast<char>(u >> 16),
                 static_cast<char>(u >> 24)};
    out.write(b, 4);
  };

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    put_f32(static_cast<float>(p.x()));
    put_f32(static_cast<float>(p.y()));
    put_f32(static_cast<float>(p.z()));
    if (cloud.has_colors()) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(cloud.colors[i][c], 0.0f, 1.0f);
        out.put(static_cast<char>(std::lround(v * 255.0f)));
      }
    }
    if (cloud.has_labels()) put_i32(cloud.labels[i]);
  }
  require(out.good(), ErrorCode::IoFailure, "write failed for '" + path + "'");
}

}  // namespace mvfuse::io

#endif  // MVFUSE_IO_PLY_HPP
