// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#ifndef MVFUSE_IO_POSE_HPP
#define MVFUSE_IO_POSE_HPP

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "mvfuse/camera.hpp"
#include "mvfuse/core.hpp"

namespace mvfuse::io {

inline constexpr double kRotationTolerance = 1e-6;

/// Infinity norm of R^T R - I plus the determinant distance from +1; used to
/// reject scaled, reflected, or otherwise non-rigid rotation blocks.
inline void validate_rotation(const Mat3& r) {
  const Mat3 gram = r.transpose() * r - Mat3::Identity();
  double worst = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) worst = std::max(worst, std::abs(gram(i, j)));
  require(worst <= kRotationTolerance, ErrorCode::BadRotation,
          "rotation not orthonormal (|R^T R - I|_inf = " + std::to_string(worst) + ")");
  require(std::abs(r.determinant() - 1.0) <= kRotationTolerance, ErrorCode::BadRotation,
          "rotation determinant is not +1");
}

struct PoseManifest {
  std::vector<CameraView> views;
};

/// Parses the engine-native pose manifest. One record per line:
///   id raster_path PINHOLE fx fy cx cy W H r00 .. r22 t0 t1 t2
///   id raster_path EQUIRECT W H          r00 .. r22 t0 t1 t2
/// Rotation is row-major camera-to-world. Blank lines and lines starting
/// with '#' are skipped.
inline PoseManifest read_pose_manifest(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoFailure, "cannot open '" + path + "'");

  PoseManifest manifest;
  std::set<std::uint32_t> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    const std::string where = "line " + std::to_string(line_no);

    CameraView view;
    std::string model_tag;
    ls >> view.image_id >> view.raster_path >> model_tag;
    require(!ls.fail(), ErrorCode::MalformedHeader, "short pose record at " + where);
    require(ids.insert(view.image_id).second, ErrorCode::DuplicateId,
            "duplicate image id " + std::to_string(view.image_id) + " at " + where);

    if (model_tag == "PINHOLE") {
      PinholeModel m;
      ls >> m.fx >> m.fy >> m.cx >> m.cy >> m.width >> m.height;
      require(!ls.fail(), ErrorCode::MalformedHeader, "bad PINHOLE parameters at " + where);
      m.validate();
      view.model = m;
    } else if (model_tag == "EQUIRECT") {
      EquirectModel m;
      ls >> m.width >> m.height;
      require(!ls.fail(), ErrorCode::MalformedHeader, "bad EQUIRECT parameters at " + where);
      m.validate();
      view.model = m;
    } else {
      fail(ErrorCode::UnknownModel, "unknown camera model '" + model_tag + "' at " + where);
    }

    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) ls >> view.rotation(i, j);
    for (int i = 0; i < 3; ++i) ls >> view.translation(i);
    require(!ls.fail(), ErrorCode::MalformedHeader, "bad pose block at " + where);
    validate_rotation(view.rotation);

    manifest.views.push_back(std::move(view));
  }
  return manifest;
}

inline void write_pose_manifest(const std::string& path, const PoseManifest& manifest) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::IoFailure, "cannot open '" + path + "' for writing");
  out << std::setprecision(17);
  for (const CameraView& view : manifest.views) {
    out << view.image_id << ' ' << (view.raster_path.empty() ? "-" : view.raster_path) << ' ';
    if (const auto* pin = std::get_if<PinholeModel>(&view.model)) {
      out << "PINHOLE " << pin->fx << ' ' << pin->fy << ' ' << pin->cx << ' ' << pin->cy << ' '
          << pin->width << ' ' << pin->height;
    } else {
      const auto& eq = std::get<EquirectModel>(view.model);
      out << "EQUIRECT " << eq.width << ' ' << eq.height;
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out << ' ' << view.rotation(i, j);
    for (int i = 0; i < 3; ++i) out << ' ' << view.translation(i);
    out << '\n';
  }
  require(out.good(), ErrorCode::IoFailure, "write failed for '" + path + "'");
}

}  // namespace mvfuse::io

#endif  // MVFUSE_IO_POSE_HPP
