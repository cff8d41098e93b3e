// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#ifndef MVFUSE_DETAIL_POINT_GRID_HPP
#define MVFUSE_DETAIL_POINT_GRID_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <vector>

#include "mvfuse/core.hpp"

namespace mvfuse::detail {

/// Uniform hash-free 3D grid over a point set: CSR buckets of point ids per
/// cell. Cell count is capped so degenerate extents cannot blow up memory.
class PointGrid {
 public:
  PointGrid(const std::vector<Vec3>& points, double cell_size)
      : points_(points), cell_(cell_size) {
    if (points.empty()) return;
    lo_ = points[0];
    Vec3 hi = points[0];
    for (const Vec3& p : points) {
      lo_ = lo_.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Vec3 extent = hi - lo_;
    constexpr std::int64_t kMaxCells = 1 << 23;
    for (;;) {
      for (int a = 0; a < 3; ++a) {
        dims_[a] = std::max<std::int64_t>(1, static_cast<std::int64_t>(extent[a] / cell_) + 1);
      }
      if (dims_[0] * dims_[1] * dims_[2] <= kMaxCells) break;
      cell_ *= 2.0;
    }

    const std::size_t num_cells = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
    offsets_.assign(num_cells + 1, 0);
    for (const Vec3& p : points) ++offsets_[flat_index(cell_of(p)) + 1];
    for (std::size_t i = 1; i < offsets_.size(); ++i) offsets_[i] += offsets_[i - 1];
    ids_.resize(points.size());
    std::vector<std::uint64_t> cursor(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t i = 0; i < points.size(); ++i) {
      ids_[cursor[flat_index(cell_of(points[i]))]++] = static_cast<std::uint32_t>(i);
    }
  }

  double cell_size() const { return cell_; }
  const std::array<std::int64_t, 3>& dims() const { return dims_; }

  std::array<std::int64_t, 3> cell_of(const Vec3& p) const {
    std::array<std::int64_t, 3> c;
    for (int a = 0; a < 3; ++a) {
      c[a] = std::clamp<std::int64_t>(static_cast<std::int64_t>((p[a] - lo_[a]) / cell_), 0,
                                      dims_[a] - 1);
    }
    return c;
  }

  std::size_t flat_index(const std::array<std::int64_t, 3>& c) const {
    return static_cast<std::size_t>((c[2] * dims_[1] + c[1]) * dims_[0] + c[0]);
  }

  /// Applies `fn(point_id)` to every point whose cell lies within Chebyshev
  /// distance `ring` of `center`, visiting only the ring shell when
  /// `shell_only` (interior rings were visited on earlier calls).
  template <typename Fn>
  void for_each_in_ring(const std::array<std::int64_t, 3>& center, std::int64_t ring,
                        bool shell_only, Fn&& fn) const {
    const std::int64_t zlo = std::max<std::int64_t>(0, center[2] - ring);
    const std::int64_t zhi = std::min(dims_[2] - 1, center[2] + ring);
    const std::int64_t ylo = std::max<std::int64_t>(0, center[1] - ring);
    const std::int64_t yhi = std::min(dims_[1] - 1, center[1] + ring);
    const std::int64_t xlo = std::max<std::int64_t>(0, center[0] - ring);
    const std::int64_t xhi = std::min(dims_[0] - 1, center[0] + ring);
    for (std::int64_t z = zlo; z <= zhi; ++z) {
      for (std::int64_t y = ylo; y <= yhi; ++y) {
        for (std::int64_t x = xlo; x <= xhi; ++x) {
          if (shell_only && std::max({std::abs(x - center[0]), std::abs(y - center[1]),
                                      std::abs(z - center[2])}) != ring) {
            continue;
          }
          const std::size_t cell = flat_index({x, y, z});
          for (std::uint64_t s = offsets_[cell]; s < offsets_[cell + 1]; ++s) fn(ids_[s]);
        }
      }
    }
  }

  bool covers_all_rings(const std::array<std::int64_t, 3>& center, std::int64_t ring) const {
    return center[0] - ring <= 0 && center[0] + ring >= dims_[0] - 1 && center[1] - ring <= 0 &&
           center[1] + ring >= dims_[1] - 1 && center[2] - ring <= 0 &&
           center[2] + ring >= dims_[2] - 1;
  }

 private:
  const std::vector<Vec3>& points_;
  double cell_ = 1.0;
  Vec3 lo_ = Vec3::Zero();
  std::array<std::int64_t, 3> dims_ = {1, 1, 1};
  std::vector<std::uint64_t> offsets_;
  std::vector<std::uint32_t> ids_;
};

}  // namespace mvfuse::detail

#endif  // MVFUSE_DETAIL_POINT_GRID_HPP
