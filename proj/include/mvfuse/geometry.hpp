// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#ifndef MVFUSE_GEOMETRY_HPP
#define MVFUSE_GEOMETRY_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mvfuse/camera.hpp"
#include "mvfuse/core.hpp"
#include "mvfuse/detail/point_grid.hpp"
#include "mvfuse/parallel.hpp"
#include "mvfuse/visibility.hpp"

namespace mvfuse {

/// Exact k-nearest-neighbor table. Every point has the same list length
/// k_eff = min(requested k, N-1); ids/dists are flattened row-major with
/// that stride, distances ascending, self excluded.
struct NeighborIndex {
  int k = 0;
  std::vector<std::uint32_t> ids;
  std::vector<float> dists;

  std::span<const std::uint32_t> neighbors(std::size_t p) const {
    return {ids.data() + p * static_cast<std::size_t>(k), static_cast<std::size_t>(k)};
  }
  std::span<const float> distances(std::size_t p) const {
    return {dists.data() + p * static_cast<std::size_t>(k), static_cast<std::size_t>(k)};
  }
  /// Distance to the k-th (furthest stored) neighbor.
  float radius(std::size_t p) const { return dists[p * static_cast<std::size_t>(k) + k - 1]; }
};

/// Grid-accelerated exact kNN under the Euclidean metric. Rings of cells are
/// expanded until the k-th candidate distance proves no closer point can
/// remain outside; ties on distance keep the smaller point id.
inline NeighborIndex build_knn(const PointCloud& cloud, int knn_k, int threads = 0) {
  const std::size_t n = cloud.size();
  require(n >= 2, ErrorCode::DegenerateCloud, "kNN needs at least two points");
  const int k = std::min<std::size_t>(knn_k, n - 1);

  // Aim for a handful of points per cell; surfaces sampled at resolution_c
  // put roughly (h/c)^2 points in a cell of size h.
  const double cell = std::max(cloud.resolution_c * 3.0, 1e-9);
  const detail::PointGrid grid(cloud.positions, cell);
  const double h = grid.cell_size();

  NeighborIndex out;
  out.k = k;
  out.ids.resize(n * k);
  out.dists.resize(n * k);

  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    using Cand = std::pair<double, std::uint32_t>;  // (squared distance, id)
    std::vector<Cand> heap;
    heap.reserve(k + 1);
    for (std::size_t p = begin; p < end; ++p) {
      const Vec3& q = cloud.positions[p];
      const auto center = grid.cell_of(q);
      heap.clear();

      for (std::int64_t ring = 0;; ++ring) {
        grid.for_each_in_ring(center, ring, ring > 0, [&](std::uint32_t cand) {
          if (cand == p) return;
          const double d2 = (cloud.positions[cand] - q).squaredNorm();
          const Cand entry{d2, cand};
          if (static_cast<int>(heap.size()) < k) {
            heap.push_back(entry);
            std::push_heap(heap.begin(), heap.end());
          } else if (entry < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = entry;
            std::push_heap(heap.begin(), heap.end());
          }
        });
        // Points outside ring r lie at least r*h away from the query.
        const double bound = static_cast<double>(ring) * h;
        if (static_cast<int>(heap.size()) == k && heap.front().first <= bound * bound) break;
        if (grid.covers_all_rings(center, ring)) break;
      }

      std::sort_heap(heap.begin(), heap.end());
      for (int i = 0; i < k; ++i) {
        out.ids[p * k + i] = heap[i].second;
        out.dists[p * k + i] = static_cast<float>(std::sqrt(heap[i].first));
      }
    }
  });
  return out;
}

/// Eigenvalue shape descriptors of a point's neighborhood, plus the surface
/// normal estimate and neighborhood radius.
struct LocalGeometry {
  float linearity = 0.0f;
  float planarity = 0.0f;
  float scattering = 0.0f;
  Eigen::Vector3f normal = Eigen::Vector3f::UnitZ();
  float r_k = -1.0f;

  bool valid() const { return r_k >= 0.0f; }
};

/// Covariance eigen-decomposition over {p} and its neighbors. With
/// eigenvalues l1 >= l2 >= l3 >= 0:
///   linearity = (l1-l2)/l1, planarity = (l2-l3)/l1, scattering = l3/l1,
/// all zero for a degenerate (l1 = 0) neighborhood. The normal is the l3
/// eigenvector; its sign is disambiguated per view at use time.
inline LocalGeometry eigen_features(const PointCloud& cloud, const NeighborIndex& nbrs,
                                    std::size_t p) {
  const auto ids = nbrs.neighbors(p);
  require(!ids.empty(), ErrorCode::Precondition, "empty neighborhood");

  Vec3 mean = cloud.positions[p];
  for (const std::uint32_t id : ids) mean += cloud.positions[id];
  mean /= static_cast<double>(ids.size() + 1);

  Mat3 cov = Mat3::Zero();
  {
    const Vec3 d = cloud.positions[p] - mean;
    cov += d * d.transpose();
  }
  for (const std::uint32_t id : ids) {
    const Vec3 d = cloud.positions[id] - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(ids.size() + 1);

  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  const Vec3 evals = solver.eigenvalues().cwiseMax(0.0);  // ascending
  const double l1 = evals(2), l2 = evals(1), l3 = evals(0);

  LocalGeometry geom;
  geom.r_k = nbrs.radius(p);
  if (l1 > 0.0) {
    geom.linearity = static_cast<float>((l1 - l2) / l1);
    geom.planarity = static_cast<float>((l2 - l3) / l1);
    geom.scattering = static_cast<float>(l3 / l1);
    geom.normal = solver.eigenvectors().col(0).normalized().cast<float>();
  }
  return geom;
}

/// The 8 viewing-condition descriptors of one compatible point-image pair,
/// in storage order.
struct ViewingConditions {
  std::array<float, 8> values{};  // depth_norm, linearity, planarity, scattering,
                                  // view_angle_cos, pixel_row, local_density, covisibility
};

inline constexpr std::array<const char*, 8> kConditionNames = {
    "depth",      "linearity", "planarity",     "scattering",
    "view_angle", "pixel_row", "local_density", "covisibility"};

/// Assembles the descriptor vector for a visibility entry. `mapped_in_image`
/// flags, for every point id, whether this image's mapping contains it (the
/// covisibility denominator is the point's stored neighbor count).
inline ViewingConditions viewing_conditions(const PointCloud& cloud, const VisEntry& entry,
                                            const CameraView& view, const LocalGeometry& geom,
                                            const NeighborIndex& nbrs,
                                            const std::vector<char>& mapped_in_image,
                                            const SplatParams& params) {
  require(geom.valid(), ErrorCode::MissingGeometry, "local geometry not computed for point");
  const std::size_t p = entry.point_id;

  const Vec3 ray = (cloud.positions[p] - view.center()).normalized();
  const double cos_angle = std::abs(ray.dot(geom.normal.cast<double>()));

  std::size_t covisible = 0;
  const auto ids = nbrs.neighbors(p);
  for (const std::uint32_t id : ids) covisible += mapped_in_image[id] ? 1 : 0;

  ViewingConditions out;
  out.values[0] = static_cast<float>(entry.depth / params.r_max);
  out.values[1] = geom.linearity;
  out.values[2] = geom.planarity;
  out.values[3] = geom.scattering;
  out.values[4] = static_cast<float>(std::min(cos_angle, 1.0));
  out.values[5] = static_cast<float>(entry.pixel.v) / static_cast<float>(view.height());
  out.values[6] = static_cast<float>(kPi * geom.r_k * geom.r_k /
                                     (params.resolution_c * params.resolution_c));
  out.values[7] = static_cast<float>(covisible) / static_cast<float>(ids.size());
  return out;
}

}  // namespace mvfuse

#endif  // MVFUSE_GEOMETRY_HPP
