// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#ifndef MVFUSE_PIPELINE_HPP
#define MVFUSE_PIPELINE_HPP

#include <chrono>
#include <cstdint>
#include <vector>

#include "mvfuse/camera.hpp"
#include "mvfuse/core.hpp"
#include "mvfuse/geometry.hpp"
#include "mvfuse/mapping.hpp"
#include "mvfuse/parallel.hpp"
#include "mvfuse/visibility.hpp"

namespace mvfuse {

struct PipelineParams {
  SplatParams splat;
  int knn_k = 50;
  int threads = 0;  // 0 = all logical cores
};

struct PipelineTimings {
  double knn_s = 0.0;
  double geometry_s = 0.0;
  double mapping_s = 0.0;  // z-buffers, extraction, viewing conditions
  double csr_s = 0.0;
  double total_s = 0.0;
};

struct PipelineResult {
  MultiViewMapping mapping;
  PipelineTimings timings;
};

/// Full occlusion-aware mapping build: exact kNN, per-point eigen features,
/// per-image Z-buffer visibility plus viewing conditions, CSR regrouping.
/// Images are processed in parallel; the result is identical for any thread
/// count.
inline PipelineResult build_multiview_mapping(const PointCloud& cloud,
                                              const std::vector<CameraView>& views,
                                              const PipelineParams& params) {
  using Clock = std::chrono::steady_clock;
  const auto elapsed = [](Clock::time_point from) {
    return std::chrono::duration<double>(Clock::now() - from).count();
  };
  const auto t_start = Clock::now();
  cloud.validate();
  params.splat.validate();

  PipelineResult result;
  auto t0 = Clock::now();
  const NeighborIndex nbrs = build_knn(cloud, params.knn_k, params.threads);
  result.timings.knn_s = elapsed(t0);

  t0 = Clock::now();
  std::vector<LocalGeometry> geometry(cloud.size());
  parallel_for(cloud.size(), params.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) geometry[p] = eigen_features(cloud, nbrs, p);
  });
  result.timings.geometry_s = elapsed(t0);

  t0 = Clock::now();
  std::vector<ImageEntries> per_image(views.size());
  parallel_for(views.size(), params.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const CameraView& view = views[i];
      ImageEntries& img = per_image[i];
      img.image_id = view.image_id;
      const ZBufferPair zb = build_zbuffer(cloud, view, params.splat);
      img.entries = extract_mapping(zb, cloud, view, params.splat);

      std::vector<char> mapped(cloud.size(), 0);
      for (const VisEntry& e : img.entries) mapped[e.point_id] = 1;
      img.conditions.reserve(img.entries.size());
      for (const VisEntry& e : img.entries) {
        img.conditions.push_back(viewing_conditions(cloud, e, view, geometry[e.point_id], nbrs,
                                                    mapped, params.splat));
      }
    }
  });
  result.timings.mapping_s = elapsed(t0);

  t0 = Clock::now();
  result.mapping = build_mapping(cloud.size(), std::move(per_image));
  result.timings.csr_s = elapsed(t0);
  result.timings.total_s = elapsed(t_start);
  return result;
}

}  // namespace mvfuse

#endif  // MVFUSE_PIPELINE_HPP
