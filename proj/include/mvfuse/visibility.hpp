// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#ifndef MVFUSE_VISIBILITY_HPP
#define MVFUSE_VISIBILITY_HPP

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "mvfuse/camera.hpp"
#include "mvfuse/core.hpp"
#include "mvfuse/detail/point_grid.hpp"

namespace mvfuse {

inline constexpr std::uint32_t kNoPoint = std::numeric_limits<std::uint32_t>::max();

struct SplatParams {
  double resolution_c = 0.05;  // cloud grid resolution, meters
  double swell_k = 1.0;        // near-splat swell factor
  double r_max = 8.0;          // visibility cutoff, meters

  void validate() const {
    require(resolution_c > 0.0 && swell_k >= 0.0 && r_max > 0.0, ErrorCode::Precondition,
            "splat params out of range");
  }
};

/// Paired depth / winning-point-id rasters. index[px] == kNoPoint exactly
/// when depth[px] == +inf.
struct ZBufferPair {
  int width = 0;
  int height = 0;
  std::vector<float> depth;
  std::vector<std::uint32_t> index;

  ZBufferPair() = default;
  ZBufferPair(int w, int h)
      : width(w), height(h),
        depth(static_cast<std::size_t>(w) * h, std::numeric_limits<float>::infinity()),
        index(static_cast<std::size_t>(w) * h, kNoPoint) {}

  std::size_t at(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }

  ImageRaster depth_raster() const {
    ImageRaster out(width, height, 1);
    out.data = depth;
    return out;
  }
};

/// Metric side of the camera-facing square standing in for a point:
///   size = c * (1 + k * exp(-dist / r_max))
/// Near points swell toward c*(1+k) so they reliably hide what is behind
/// them; the size decays to c at the visibility cutoff.
inline double splat_size(double dist, const SplatParams& params) {
  return params.resolution_c * (1.0 + params.swell_k * std::exp(-dist / params.r_max));
}

/// Inclusive pixel bounds of a splat. For equirectangular views u_lo..u_hi
/// may run outside [0, W) and must be wrapped per column; `wraps` marks that
/// case. Pinhole extents are already clipped.
struct SplatExtent {
  int u_lo = 0, u_hi = -1;
  int v_lo = 0, v_hi = -1;
  bool wraps = false;

  int side_u() const { return u_hi - u_lo + 1; }
  bool empty() const { return u_hi < u_lo || v_hi < v_lo; }
};

inline SplatExtent splat_extent(const Projection& proj, const CameraView& view,
                                const SplatParams& params) {
  const PixelCoord center = to_pixel(proj, view.model);
  const double size = splat_size(proj.depth, params);
  const double scale = pixel_scale(view.model);
  int side = static_cast<int>(std::llround(size * scale / proj.depth));
  side = std::max(side, 1);

  const int w = view.width();
  const int h = view.height();
  SplatExtent ext;
  const bool equirect = is_equirect(view.model);
  if (equirect && side >= w) side = w;  // full azimuth band, cover each column once
  side = std::min(side, std::max(w, h) * 2);

  const int half_lo = (side - 1) / 2;
  ext.u_lo = center.u - half_lo;
  ext.u_hi = ext.u_lo + side - 1;
  ext.v_lo = std::max(center.v - half_lo, 0);
  ext.v_hi = std::min(center.v - half_lo + side - 1, h - 1);
  if (equirect) {
    ext.wraps = ext.u_lo < 0 || ext.u_hi >= w;
  } else {
    ext.u_lo = std::max(ext.u_lo, 0);
    ext.u_hi = std::min(ext.u_hi, w - 1);
  }
  return ext;
}

/// Materialized splat pixel set (the extent above, wrapped and clipped).
inline std::vector<PixelCoord> splat_mask(const Vec3& point, const CameraView& view,
                                          const SplatParams& params) {
  const auto proj = project(point, view);
  require(proj.has_value() && in_frustum(point, view, params.r_max), ErrorCode::Precondition,
          "splat_mask requires an in-frustum point");
  const SplatExtent ext = splat_extent(*proj, view, params);
  std::vector<PixelCoord> out;
  const int w = view.width();
  for (int v = ext.v_lo; v <= ext.v_hi; ++v) {
    for (int u = ext.u_lo; u <= ext.u_hi; ++u) {
      const int x = ext.wraps ? ((u % w) + w) % w : u;
      out.push_back({x, v});
    }
  }
  return out;
}

/// Accumulates all splats of in-frustum points into a Z-buffer / index-map
/// pair. Points are visited in ascending id order with a strict depth
/// comparison, so equal depths resolve to the smaller point id and the
/// result is independent of any outer parallel schedule.
inline ZBufferPair build_zbuffer(const PointCloud& cloud, const CameraView& view,
                                 const SplatParams& params) {
  params.validate();
  ZBufferPair zb(view.width(), view.height());
  const int w = zb.width;
  for (std::size_t id = 0; id < cloud.size(); ++id) {
    const auto proj = project(cloud.positions[id], view);
    if (!proj || proj->depth > params.r_max) continue;
    const PixelCoord px = to_pixel(*proj, view.model);
    if (!is_equirect(view.model) &&
        (px.u < 0 || px.u >= w || px.v < 0 || px.v >= zb.height)) {
      continue;
    }
    const SplatExtent ext = splat_extent(*proj, view, params);
    const float d = static_cast<float>(proj->depth);
    for (int v = ext.v_lo; v <= ext.v_hi; ++v) {
      for (int u = ext.u_lo; u <= ext.u_hi; ++u) {
        const int x = ext.wraps ? ((u % w) + w) % w : u;
        const std::size_t cell = zb.at(x, v);
        if (d < zb.depth[cell]) {
          zb.depth[cell] = d;
          zb.index[cell] = static_cast<std::uint32_t>(id);
        }
      }
    }
  }
  return zb;
}

/// One visible point-image pair: the point's own projection pixel and its
/// camera distance.
struct VisEntry {
  std::uint32_t point_id = 0;
  PixelCoord pixel;
  float depth = 0.0f;
};

/// Visible points are those whose id appears anywhere in the index map; the
/// recorded pixel is each point's own projection, which it need not have won
/// in the buffer. Output is sorted by point id, at most one entry per point.
inline std::vector<VisEntry> extract_mapping(const ZBufferPair& zb, const PointCloud& cloud,
                                             const CameraView& view, const SplatParams& params) {
  require(zb.width == view.width() && zb.height == view.height(), ErrorCode::StaleBuffer,
          "z-buffer dimensions do not match the view");
  std::vector<char> visible(cloud.size(), 0);
  for (const std::uint32_t id : zb.index) {
    if (id == kNoPoint) continue;
    require(id < cloud.size(), ErrorCode::StaleBuffer, "index map references unknown point");
    visible[id] = 1;
  }
  std::vector<VisEntry> out;
  for (std::size_t id = 0; id < cloud.size(); ++id) {
    if (!visible[id]) continue;
    const auto proj = project(cloud.positions[id], view);
    if (!proj) continue;
    out.push_back({static_cast<std::uint32_t>(id), to_pixel(*proj, view.model),
                   static_cast<float>(proj->depth)});
  }
  return out;
}

/// Brute-force visibility reference: a point is visible iff no other point's
/// sphere of radius `point_radius` intersects the camera ray strictly closer
/// than dist - point_radius (the slack rule). Grid-accelerated but exact;
/// output format matches extract_mapping.
inline std::vector<VisEntry> oracle_visibility(const PointCloud& cloud, const CameraView& view,
                                               const SplatParams& params, double point_radius) {
  params.validate();
  require(point_radius > 0.0, ErrorCode::Precondition, "point_radius must be positive");

  // Cell size >= 2r keeps every sphere within one cell ring of the ray walk.
  const double cell = std::max(2.0 * point_radius, params.resolution_c);
  const detail::PointGrid grid(cloud.positions, cell);
  const double h = grid.cell_size();
  const Vec3 origin = view.center();

  std::vector<std::uint32_t> stamp(cloud.size(), 0);
  std::uint32_t tick = 0;

  std::vector<VisEntry> out;
  for (std::size_t id = 0; id < cloud.size(); ++id) {
    const Vec3& p = cloud.positions[id];
    const auto proj = project(p, view);
    if (!proj || proj->depth > params.r_max) continue;
    const PixelCoord px = to_pixel(*proj, view.model);
    if (!is_equirect(view.model) &&
        (px.u < 0 || px.u >= view.width() || px.v < 0 || px.v >= view.height())) {
      continue;
    }

    const double length = proj->depth;
    const double t_max = length - point_radius;
    bool occluded = false;
    if (t_max > 0.0) {
      const Vec3 dir = (p - origin) / length;
      ++tick;
      const double r2 = point_radius * point_radius;
      const double step = 0.5 * h;
      const int samples = static_cast<int>(t_max / step) + 1;
      for (int s = 0; s <= samples && !occluded; ++s) {
        const double t = std::min(s * step, t_max);
        const auto center = grid.cell_of(origin + dir * t);
        grid.for_each_in_ring(center, 1, false, [&](std::uint32_t q) {
          if (occluded || q == id || stamp[q] == tick) return;
          stamp[q] = tick;
          const Vec3 rel = cloud.positions[q] - origin;
          const double tq = rel.dot(dir);
          if (tq <= 0.0 || tq >= t_max) return;
          if ((rel - tq * dir).squaredNorm() <= r2) occluded = true;
        });
      }
    }
    if (!occluded) {
      out.push_back({static_cast<std::uint32_t>(id), px, static_cast<float>(length)});
    }
  }
  return out;
}

/// Depth-map-driven alternative: a point maps iff it is in the frustum and
/// its distance agrees with the depth map at its projection pixel within
/// epsilon.
inline std::vector<VisEntry> depth_based_mapping(const PointCloud& cloud, const CameraView& view,
                                                 const ImageRaster& depth_map, double epsilon,
                                                 const SplatParams& params) {
  require(depth_map.channels == 1, ErrorCode::DimensionMismatch, "depth map must be 1-channel");
  require(depth_map.width == view.width() && depth_map.height == view.height(),
          ErrorCode::DimensionMismatch, "depth map dimensions do not match the view");
  require(epsilon > 0.0, ErrorCode::Precondition, "epsilon must be positive");

  std::vector<VisEntry> out;
  for (std::size_t id = 0; id < cloud.size(); ++id) {
    const auto proj = project(cloud.positions[id], view);
    if (!proj || proj->depth > params.r_max) continue;
    const PixelCoord px = to_pixel(*proj, view.model);
    if (!is_equirect(view.model) &&
        (px.u < 0 || px.u >= view.width() || px.v < 0 || px.v >= view.height())) {
      continue;
    }
    const float reference = depth_map.at(px.u, px.v);
    if (std::abs(proj->depth - static_cast<double>(reference)) <= epsilon) {
      out.push_back({static_cast<std::uint32_t>(id), px, static_cast<float>(proj->depth)});
    }
  }
  return out;
}

}  // namespace mvfuse

#endif  // MVFUSE_VISIBILITY_HPP
