// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#ifndef MVFUSE_CAMERA_HPP
#define MVFUSE_CAMERA_HPP

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>

#include "mvfuse/core.hpp"

namespace mvfuse {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

struct PinholeModel {
  double fx = 0.0, fy = 0.0;  // focal lengths, pixels
  double cx = 0.0, cy = 0.0;  // principal point, pixels
  int width = 0, height = 0;

  void validate() const {
    require(fx > 0.0 && fy > 0.0, ErrorCode::Precondition, "focal lengths must be positive");
    require(width >= 1 && height >= 1, ErrorCode::Precondition, "image size must be >= 1");
    require(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height, ErrorCode::Precondition,
            "principal point must lie inside the raster");
  }
};

struct EquirectModel {
  int width = 0, height = 0;

  void validate() const {
    require(width >= 1 && height >= 1, ErrorCode::Precondition, "image size must be >= 1");
  }
};

using CameraModel = std::variant<PinholeModel, EquirectModel>;

inline int model_width(const CameraModel& m) {
  return std::visit([](const auto& v) { return v.width; }, m);
}
inline int model_height(const CameraModel& m) {
  return std::visit([](const auto& v) { return v.height; }, m);
}
inline bool is_equirect(const CameraModel& m) {
  return std::holds_alternative<EquirectModel>(m);
}

/// Pixels per unit of screen-space displacement at unit depth. Used to turn a
/// metric splat size into a pixel footprint: pinhole rays spread as 1/f,
/// equirectangular columns cover 2*pi of azimuth.
inline double pixel_scale(const CameraModel& m) {
  if (const auto* pin = std::get_if<PinholeModel>(&m)) return 0.5 * (pin->fx + pin->fy);
  return model_width(m) / kTwoPi;
}

/// A posed camera. The pose is camera-to-world: `rotation * q + translation`
/// maps camera-frame q to world coordinates. Camera axes: +Z forward,
/// +X right, +Y down (image rows grow along +Y).
struct CameraView {
  std::uint32_t image_id = 0;
  CameraModel model;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  std::string raster_path;
  std::shared_ptr<const ImageRaster> raster;  // optional pixel payload

  int width() const { return model_width(model); }
  int height() const { return model_height(model); }
  const Vec3& center() const { return translation; }

  Vec3 to_camera(const Vec3& p_world) const {
    return rotation.transpose() * (p_world - translation);
  }
};

/// Real-valued projection result before any rounding. `depth` is the
/// Euclidean camera-point distance for both camera models.
struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

struct PixelCoord {
  int u = 0;
  int v = 0;

  bool operator==(const PixelCoord&) const = default;
};

inline double wrap_u(double u, int width) {
  u = std::fmod(u, static_cast<double>(width));
  if (u < 0.0) u += width;
  // fmod can return exactly `width` after the negative adjustment when u is
  // a tiny negative value; fold it back.
  if (u >= width) u = 0.0;
  return u;
}

/// Projects a world point. Returns nullopt when the point has no image: a
/// pinhole point at or behind the camera plane (z <= 0), or a point exactly
/// at the camera center (no defined direction).
inline std::optional<Projection> project(const Vec3& p_world, const CameraView& view) {
  const Vec3 q = view.to_camera(p_world);
  if (const auto* pin = std::get_if<PinholeModel>(&view.model)) {
    if (q.z() <= 0.0) return std::nullopt;
    Projection out;
    out.u = pin->cx + pin->fx * q.x() / q.z();
    out.v = pin->cy + pin->fy * q.y() / q.z();
    out.depth = q.norm();
    return out;
  }
  const auto& eq = std::get<EquirectModel>(view.model);
  const double r = q.norm();
  if (r == 0.0) return std::nullopt;
  Projection out;
  out.u = (std::atan2(q.x(), q.z()) / kTwoPi + 0.5) * eq.width;
  // Clamp absorbs rounding at the poles where |y|/r can exceed 1 by an ulp.
  const double s = std::clamp(q.y() / r, -1.0, 1.0);
  out.v = (std::asin(s) / kPi + 0.5) * eq.height;
  out.depth = r;
  return out;
}

/// Integer pixel under the floor-rounding convention: pixel (u,v) covers
/// [u,u+1) x [v,v+1). Equirectangular u wraps modulo width and the pole row
/// v == H folds into the last row.
inline PixelCoord to_pixel(const Projection& proj, const CameraModel& model) {
  if (is_equirect(model)) {
    const int w = model_width(model);
    const int h = model_height(model);
    PixelCoord px;
    px.u = static_cast<int>(std::floor(wrap_u(proj.u, w)));
    px.v = std::min(static_cast<int>(std::floor(proj.v)), h - 1);
    if (px.u >= w) px.u = 0;
    if (px.v < 0) px.v = 0;
    return px;
  }
  return {static_cast<int>(std::floor(proj.u)), static_cast<int>(std::floor(proj.v))};
}

/// True iff the point projects, its rounded pixel addresses a valid raster
/// cell, and its distance is within r_max (inclusive). The equirectangular
/// frustum is the full sphere truncated at r_max.
inline bool in_frustum(const Vec3& p_world, const CameraView& view, double r_max) {
  const auto proj = project(p_world, view);
  if (!proj || proj->depth > r_max) return false;
  if (is_equirect(view.model)) return true;  // to_pixel always lands in-raster
  const PixelCoord px = to_pixel(*proj, view.model);
  return px.u >= 0 && px.u < view.width() && px.v >= 0 && px.v < view.height();
}

namespace detail {

inline Mat3 rotation_about_y(double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Mat3 r;
  r << c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c;
  return r;
}

}  // namespace detail

/// Rolls an equirectangular view about its vertical axis so the circular
/// mean of the given points' azimuths lands at column W/2. The offset is
/// quantized to whole columns so the returned raster roll and re-projection
/// agree exactly: new pixel u' = old u - shift (mod W).
inline CameraView recenter_equirect(const CameraView& view, std::span<const Vec3> points) {
  require(is_equirect(view.model), ErrorCode::Precondition,
          "recenter_equirect requires an equirectangular view");
  double sum_sin = 0.0;
  double sum_cos = 0.0;
  std::size_t seen = 0;
  for (const Vec3& p : points) {
    const Vec3 q = view.to_camera(p);
    if (q.norm() == 0.0) continue;
    const double az = std::atan2(q.x(), q.z());
    sum_sin += std::sin(az);
    sum_cos += std::cos(az);
    ++seen;
  }
  require(seen > 0, ErrorCode::NoVisiblePoints, "no points visible for recentering");

  const int w = view.width();
  const double mean_az = std::atan2(sum_sin, sum_cos);
  const long shift = std::lround(mean_az / kTwoPi * w);
  const double offset = static_cast<double>(shift) * kTwoPi / w;

  CameraView out = view;
  out.rotation = view.rotation * detail::rotation_about_y(offset);
  if (view.raster) {
    auto rolled = std::make_shared<ImageRaster>(*view.raster);
    const int channels = rolled->channels;
    for (int y = 0; y < rolled->height; ++y) {
      for (int x = 0; x < w; ++x) {
        const int src = static_cast<int>(((x + shift) % w + w) % w);
        for (int ch = 0; ch < channels; ++ch) {
          rolled->at(x, y, ch) = view.raster->at(src, y, ch);
        }
      }
    }
    out.raster = std::move(rolled);
  }
  return out;
}

}  // namespace mvfuse

#endif  // MVFUSE_CAMERA_HPP
