// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic box-room scenes shared by the visibility tests, the acceptance
// suite, and the CLI tests. World convention matches the camera module:
// +Y is down, so the floor lies at y = 0 and the ceiling at y = -height.

#ifndef MVFUSE_TESTS_SUPPORT_SCENES_HPP
#define MVFUSE_TESTS_SUPPORT_SCENES_HPP

#include <algorithm>
#include <cstdint>
#include <vector>

#include <Eigen/Geometry>

#include "mvfuse/camera.hpp"
#include "mvfuse/core.hpp"
#include "mvfuse/rng.hpp"

namespace mvfuse::testsupport {

struct BoxRoomSpec {
  double width = 7.0;    // x extent, meters
  double depth = 5.0;    // z extent
  double height = 2.8;   // y extent (downward)
  double resolution_c = 0.05;
  int num_boxes = 3;     // interior occluders resting on the floor
  std::size_t target_points = 0;  // 0 = keep the full sampling
  std::uint64_t seed = 1;
};

namespace detail {

// Samples an axis-aligned rectangle: origin plus jittered grid along two
// edge vectors (unit length axes scaled by extent).
inline void sample_face(std::vector<Vec3>& points, const Vec3& origin, const Vec3& edge_a,
                        const Vec3& edge_b, double c, Rng& rng) {
  const double len_a = edge_a.norm();
  const double len_b = edge_b.norm();
  const int na = std::max(1, static_cast<int>(len_a / c));
  const int nb = std::max(1, static_cast<int>(len_b / c));
  const Vec3 ua = edge_a / len_a;
  const Vec3 ub = edge_b / len_b;
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < nb; ++j) {
      const double a = (i + 0.5) * len_a / na + rng.uniform(-0.3, 0.3) * c;
      const double b = (j + 0.5) * len_b / nb + rng.uniform(-0.3, 0.3) * c;
      points.push_back(origin + std::clamp(a, 0.0, len_a) * ua + std::clamp(b, 0.0, len_b) * ub);
    }
  }
}

}  // namespace detail

/// Walls, floor, and ceiling of a box room plus a few box-shaped occluders,
/// sampled on a jittered grid at resolution_c. When target_points is set the
/// sampling is randomly thinned to exactly that count.
inline PointCloud generate_box_room(const BoxRoomSpec& spec) {
  Rng rng(spec.seed);
  PointCloud cloud;
  cloud.resolution_c = spec.resolution_c;
  const double w = spec.width, d = spec.depth, h = spec.height;
  const double c = spec.resolution_c;
  auto& pts = cloud.positions;

  detail::sample_face(pts, {0, 0, 0}, {w, 0, 0}, {0, 0, d}, c, rng);    // floor (y = 0)
  detail::sample_face(pts, {0, -h, 0}, {w, 0, 0}, {0, 0, d}, c, rng);   // ceiling
  detail::sample_face(pts, {0, 0, 0}, {w, 0, 0}, {0, -h, 0}, c, rng);   // z = 0 wall
  detail::sample_face(pts, {0, 0, d}, {w, 0, 0}, {0, -h, 0}, c, rng);   // z = d wall
  detail::sample_face(pts, {0, 0, 0}, {0, 0, d}, {0, -h, 0}, c, rng);   // x = 0 wall
  detail::sample_face(pts, {w, 0, 0}, {0, 0, d}, {0, -h, 0}, c, rng);   // x = w wall

  // Interior boxes, kept away from the central camera ring.
  const double keep_out = std::min(1.6, 0.3 * std::min(w, d));
  for (int b = 0; b < spec.num_boxes; ++b) {
    const double size = rng.uniform(0.5, std::min(1.1, 0.3 * std::min(w, d)));
    double bx = 0.0, bz = 0.0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      bx = rng.uniform(0.4, w - 0.4 - size);
      bz = rng.uniform(0.4, d - 0.4 - size);
      if (std::hypot(bx + size / 2 - w / 2, bz + size / 2 - d / 2) >= keep_out) break;
    }
    const Vec3 o(bx, 0, bz);
    detail::sample_face(pts, o + Vec3(0, -size, 0), {size, 0, 0}, {0, 0, size}, c, rng);  // top
    detail::sample_face(pts, o, {size, 0, 0}, {0, -size, 0}, c, rng);
    detail::sample_face(pts, o + Vec3(0, 0, size), {size, 0, 0}, {0, -size, 0}, c, rng);
    detail::sample_face(pts, o, {0, 0, size}, {0, -size, 0}, c, rng);
    detail::sample_face(pts, o + Vec3(size, 0, 0), {0, 0, size}, {0, -size, 0}, c, rng);
  }

  if (spec.target_points > 0 && pts.size() > spec.target_points) {
    // Seeded partial Fisher-Yates, then truncate.
    for (std::size_t i = 0; i < spec.target_points; ++i) {
      const std::size_t j = i + rng.below(pts.size() - i);
      std::swap(pts[i], pts[j]);
    }
    pts.resize(spec.target_points);
  }
  return cloud;
}

/// Ring of inward-placed pinhole cameras looking outward at eye height.
inline std::vector<CameraView> pinhole_ring(const BoxRoomSpec& spec, int count, int image_size,
                                            double fov_degrees = 70.0) {
  std::vector<CameraView> views;
  const Vec3 center(spec.width / 2, -1.5, spec.depth / 2);
  const double fx = 0.5 * image_size / std::tan(0.5 * fov_degrees * kPi / 180.0);
  for (int i = 0; i < count; ++i) {
    // Half-step offset keeps every gaze direction off the room axes, where
    // axis-aligned faces would be seen edge-on.
    const double angle = kTwoPi * (i + 0.5) / count;
    const Vec3 outward(std::cos(angle), 0.0, std::sin(angle));
    CameraView view;
    view.image_id = static_cast<std::uint32_t>(i);
    view.translation = center + 0.3 * outward + Vec3(0, 0.1 * std::sin(angle * 3), 0);
    const Vec3 forward = (outward + Vec3(0, 0.05 * std::cos(angle * 2), 0)).normalized();
    const Vec3 world_down(0, 1, 0);
    Vec3 right = world_down.cross(forward).normalized();
    view.rotation.col(0) = right;
    view.rotation.col(1) = forward.cross(right);
    view.rotation.col(2) = forward;
    view.model = PinholeModel{fx, fx, image_size / 2.0, image_size / 2.0, image_size,
                              image_size};
    views.push_back(view);
  }
  return views;
}

/// Equirectangular cameras spread over the room interior.
inline std::vector<CameraView> equirect_grid(const BoxRoomSpec& spec, int count, int width,
                                             int height, std::uint64_t seed = 5) {
  Rng rng(seed);
  std::vector<CameraView> views;
  for (int i = 0; i < count; ++i) {
    CameraView view;
    view.image_id = static_cast<std::uint32_t>(i);
    view.translation = Vec3(rng.uniform(0.8, spec.width - 0.8), rng.uniform(-2.0, -1.0),
                            rng.uniform(0.8, spec.depth - 0.8));
    view.rotation = mvfuse::detail::rotation_about_y(rng.uniform(0, kTwoPi));
    view.model = EquirectModel{width, height};
    views.push_back(view);
  }
  return views;
}

}  // namespace mvfuse::testsupport

#endif  // MVFUSE_TESTS_SUPPORT_SCENES_HPP
