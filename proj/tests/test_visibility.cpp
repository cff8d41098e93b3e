// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#include "mvfuse/visibility.hpp"

#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "mvfuse/rng.hpp"
#include "support/scenes.hpp"

namespace mvfuse {
namespace {

CameraView axis_pinhole(double f, int size) {
  CameraView view;
  view.model = PinholeModel{f, f, size / 2.0, size / 2.0, size, size};
  return view;
}

TEST(SplatSize, FormulaValues) {
  const SplatParams params{0.05, 1.0, 8.0};
  EXPECT_DOUBLE_EQ(splat_size(0.0, params), 0.10);
  // c * (1 + e^-1) at the cutoff distance.
  EXPECT_NEAR(splat_size(8.0, params), 0.068394, 5e-7);
  const SplatParams no_swell{0.05, 0.0, 8.0};
  EXPECT_DOUBLE_EQ(splat_size(3.0, no_swell), 0.05);
  EXPECT_DOUBLE_EQ(splat_size(0.0, no_swell), 0.05);
}

TEST(SplatSize, StrictlyDecreasingWithSwell) {
  const SplatParams params{0.05, 1.0, 8.0};
  double prev = splat_size(0.0, params);
  for (double d = 0.25; d <= 8.0; d += 0.25) {
    const double s = splat_size(d, params);
    EXPECT_LT(s, prev);
    EXPECT_GE(s, params.resolution_c);
    EXPECT_LE(s, params.resolution_c * 2.0);
    prev = s;
  }
}

TEST(SplatMask, FarPointIsSinglePixel) {
  // s * sigma / dist = 0.05 * 100 / 7 < 1.
  const CameraView view = axis_pinhole(100, 128);
  const SplatParams params{0.05, 0.0, 8.0};
  const auto mask = splat_mask(Vec3(0, 0, 7), view, params);
  ASSERT_EQ(mask.size(), 1u);
  EXPECT_EQ(mask[0], (PixelCoord{64, 64}));
}

TEST(SplatMask, SideFiveBlock) {
  // round(0.05 * 100 / 1) = 5.
  const CameraView view = axis_pinhole(100, 128);
  const SplatParams params{0.05, 0.0, 8.0};
  const auto mask = splat_mask(Vec3(0, 0, 1), view, params);
  EXPECT_EQ(mask.size(), 25u);
  for (const PixelCoord& px : mask) {
    EXPECT_GE(px.u, 62);
    EXPECT_LE(px.u, 66);
    EXPECT_GE(px.v, 62);
    EXPECT_LE(px.v, 66);
  }
}

TEST(SplatMask, ClippedAtRasterEdge) {
  const CameraView view = axis_pinhole(100, 128);
  const SplatParams params{0.05, 0.0, 8.0};
  // Projects near u = 127: block would overflow the right edge.
  const auto mask = splat_mask(Vec3(0.635, 0, 1), view, params);
  ASSERT_FALSE(mask.empty());
  EXPECT_LT(mask.size(), 25u);
  for (const PixelCoord& px : mask) {
    EXPECT_GE(px.u, 0);
    EXPECT_LT(px.u, 128);
  }
}

TEST(SplatMask, ScreenSideNonIncreasingInDistance) {
  const CameraView view = axis_pinhole(150, 256);
  const SplatParams params{0.05, 1.0, 8.0};
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  for (double d = 0.5; d <= 8.0; d += 0.5) {
    const auto mask = splat_mask(Vec3(0, 0, d), view, params);
    EXPECT_LE(mask.size(), prev);
    prev = mask.size();
  }
}

TEST(SplatMask, EquirectWrapsAzimuthSeam) {
  CameraView view;
  view.model = EquirectModel{64, 32};
  const SplatParams params{0.5, 0.0, 8.0};
  // Point behind the camera projects at the u seam; mask columns wrap.
  const auto mask = splat_mask(Vec3(0, 0, -1.0), view, params);
  ASSERT_GT(mask.size(), 1u);
  std::set<int> cols;
  for (const PixelCoord& px : mask) {
    EXPECT_GE(px.u, 0);
    EXPECT_LT(px.u, 64);
    cols.insert(px.u);
  }
  EXPECT_TRUE(cols.count(0) == 1 || cols.count(63) == 1);
}

TEST(ZBuffer, NearSplatWinsContestedPixels) {
  PointCloud cloud;
  cloud.resolution_c = 0.2;
  cloud.positions = {Vec3(0, 0, 2), Vec3(0, 0, 5)};
  const CameraView view = axis_pinhole(100, 64);
  const SplatParams params{0.2, 1.0, 8.0};
  const ZBufferPair zb = build_zbuffer(cloud, view, params);
  const std::size_t center = zb.at(32, 32);
  EXPECT_FLOAT_EQ(zb.depth[center], 2.0f);
  EXPECT_EQ(zb.index[center], 0u);
}

TEST(ZBuffer, EmptyCloud) {
  const PointCloud cloud;
  const CameraView view = axis_pinhole(100, 32);
  const ZBufferPair zb = build_zbuffer(cloud, view, {0.05, 1.0, 8.0});
  for (std::size_t i = 0; i < zb.depth.size(); ++i) {
    EXPECT_EQ(zb.depth[i], std::numeric_limits<float>::infinity());
    EXPECT_EQ(zb.index[i], kNoPoint);
  }
}

TEST(ZBuffer, SinglePointSetsExactlyItsMask) {
  PointCloud cloud;
  cloud.resolution_c = 0.05;
  cloud.positions = {Vec3(0.1, -0.05, 1.5)};
  const CameraView view = axis_pinhole(120, 96);
  const SplatParams params{0.05, 1.0, 8.0};
  const ZBufferPair zb = build_zbuffer(cloud, view, params);
  const auto mask = splat_mask(cloud.positions[0], view, params);
  std::set<std::pair<int, int>> expected;
  for (const PixelCoord& px : mask) expected.insert({px.u, px.v});
  for (int y = 0; y < 96; ++y) {
    for (int x = 0; x < 96; ++x) {
      const bool in_mask = expected.count({x, y}) > 0;
      EXPECT_EQ(zb.index[zb.at(x, y)] == 0u, in_mask) << x << "," << y;
    }
  }
}

TEST(ZBuffer, DepthTieBrokenBySmallerId) {
  PointCloud cloud;
  cloud.resolution_c = 0.2;
  // Same depth, masks overlap near the center.
  cloud.positions = {Vec3(0.01, 0, 3), Vec3(-0.01, 0, 3)};
  const Vec3 adjusted = cloud.positions[1] * (cloud.positions[0].norm() /
                                              cloud.positions[1].norm());
  cloud.positions[1] = adjusted;
  const CameraView view = axis_pinhole(100, 64);
  const ZBufferPair zb = build_zbuffer(cloud, view, {0.2, 1.0, 8.0});
  int contested = 0;
  for (std::size_t i = 0; i < zb.index.size(); ++i) {
    if (zb.index[i] != kNoPoint && zb.depth[i] == static_cast<float>(adjusted.norm())) {
      // Any pixel both masks cover must carry id 0.
      const auto mask1 = splat_mask(cloud.positions[1], view, {0.2, 1.0, 8.0});
      const int x = static_cast<int>(i % 64), y = static_cast<int>(i / 64);
      for (const PixelCoord& px : mask1) {
        if (px.u == x && px.v == y && zb.index[i] != 1u) {
          EXPECT_EQ(zb.index[i], 0u);
          ++contested;
        }
      }
    }
  }
  EXPECT_GT(contested, 0);
}

TEST(ZBuffer, MonotoneUnderPointInsertion) {
  Rng rng(7);
  PointCloud cloud;
  cloud.resolution_c = 0.1;
  for (int i = 0; i < 60; ++i) {
    cloud.positions.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(1, 6));
  }
  const CameraView view = axis_pinhole(100, 64);
  const SplatParams params{0.1, 1.0, 8.0};
  const ZBufferPair before = build_zbuffer(cloud, view, params);
  cloud.positions.emplace_back(0.0, 0.0, 2.0);
  const ZBufferPair after = build_zbuffer(cloud, view, params);
  for (std::size_t i = 0; i < before.depth.size(); ++i) {
    EXPECT_LE(after.depth[i], before.depth[i]);
  }
}

TEST(ExtractMapping, ShadowedPointAbsent) {
  PointCloud cloud;
  cloud.resolution_c = 0.3;
  cloud.positions = {Vec3(0, 0, 1), Vec3(0, 0, 6)};  // same ray, near splat swells
  const CameraView view = axis_pinhole(100, 64);
  const SplatParams params{0.3, 1.0, 8.0};
  const ZBufferPair zb = build_zbuffer(cloud, view, params);
  const auto entries = extract_mapping(zb, cloud, view, params);
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_EQ(entries[0].point_id, 0u);
}

TEST(ExtractMapping, LonePointAtOwnProjection) {
  PointCloud cloud;
  cloud.resolution_c = 0.05;
  cloud.positions = {Vec3(0.2, 0.1, 2.0)};
  const CameraView view = axis_pinhole(100, 64);
  const SplatParams params{0.05, 1.0, 8.0};
  const auto entries = extract_mapping(build_zbuffer(cloud, view, params), cloud, view, params);
  ASSERT_EQ(entries.size(), 1u);
  const auto proj = project(cloud.positions[0], view);
  EXPECT_EQ(entries[0].pixel, to_pixel(*proj, view.model));
  EXPECT_FLOAT_EQ(entries[0].depth, static_cast<float>(proj->depth));
}

TEST(ExtractMapping, StaleBufferRejected) {
  PointCloud cloud;
  cloud.positions = {Vec3(0, 0, 2)};
  const CameraView view = axis_pinhole(100, 64);
  ZBufferPair zb(32, 32);
  try {
    extract_mapping(zb, cloud, view, {0.05, 1.0, 8.0});
    FAIL() << "expected StaleBuffer";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StaleBuffer);
  }
}

TEST(ExtractMapping, EntriesAreInFrustum) {
  const testsupport::BoxRoomSpec spec{6, 4, 2.6, 0.08, 2, 0, 42};
  const PointCloud cloud = testsupport::generate_box_room(spec);
  const auto views = testsupport::pinhole_ring(spec, 3, 96);
  const SplatParams params{spec.resolution_c, 1.0, 8.0};
  for (const CameraView& view : views) {
    const auto entries = extract_mapping(build_zbuffer(cloud, view, params), cloud, view, params);
    ASSERT_FALSE(entries.empty());
    for (const VisEntry& e : entries) {
      EXPECT_TRUE(in_frustum(cloud.positions[e.point_id], view, params.r_max));
      EXPECT_LE(e.depth, params.r_max);
    }
    // Sorted, unique point ids.
    for (std::size_t i = 1; i < entries.size(); ++i) {
      EXPECT_LT(entries[i - 1].point_id, entries[i].point_id);
    }
  }
}

TEST(Oracle, SinglePointVisible) {
  PointCloud cloud;
  cloud.resolution_c = 0.05;
  cloud.positions = {Vec3(0, 0, 3)};
  const CameraView view = axis_pinhole(100, 64);
  const auto entries = oracle_visibility(cloud, view, {0.05, 1.0, 8.0}, 0.025);
  ASSERT_EQ(entries.size(), 1u);
}

TEST(Oracle, SeparationAboveTwiceRadiusOccludes) {
  PointCloud cloud;
  cloud.resolution_c = 0.05;
  cloud.positions = {Vec3(0, 0, 2.0), Vec3(0, 0, 2.2)};  // separation 0.2 > 2r = 0.05
  const CameraView view = axis_pinhole(100, 64);
  const auto entries = oracle_visibility(cloud, view, {0.05, 1.0, 8.0}, 0.025);
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_EQ(entries[0].point_id, 0u);
}

TEST(Oracle, SeparationBelowSlackKeepsBoth) {
  PointCloud cloud;
  cloud.resolution_c = 0.05;
  // Separation 0.02 < point_radius 0.025: the slack rule keeps the far one.
  cloud.positions = {Vec3(0, 0, 2.0), Vec3(0, 0, 2.02)};
  const CameraView view = axis_pinhole(100, 64);
  const auto entries = oracle_visibility(cloud, view, {0.05, 1.0, 8.0}, 0.025);
  EXPECT_EQ(entries.size(), 2u);
}

TEST(Oracle, FrontalPlaneMatchesExtractExactly) {
  // Occlusion-free single-layer scene: a plane facing the camera head-on.
  Rng rng(17);
  PointCloud cloud;
  cloud.resolution_c = 0.05;
  for (int iy = 0; iy < 30; ++iy) {
    for (int ix = 0; ix < 30; ++ix) {
      cloud.positions.emplace_back(-0.75 + 0.05 * ix + rng.uniform(-0.01, 0.01),
                                   -0.75 + 0.05 * iy + rng.uniform(-0.01, 0.01), 3.0);
    }
  }
  const CameraView view = axis_pinhole(150, 128);
  const SplatParams params{0.05, 1.0, 8.0};
  const auto splat = extract_mapping(build_zbuffer(cloud, view, params), cloud, view, params);
  const auto oracle = oracle_visibility(cloud, view, params, 0.025);
  ASSERT_EQ(splat.size(), oracle.size());
  for (std::size_t i = 0; i < splat.size(); ++i) {
    EXPECT_EQ(splat[i].point_id, oracle[i].point_id);
    EXPECT_EQ(splat[i].pixel, oracle[i].pixel);
    EXPECT_FLOAT_EQ(splat[i].depth, oracle[i].depth);
  }
}

TEST(Oracle, BoxRoomAgreementIsHigh) {
  // Small-scale version of the acceptance fidelity check.
  const testsupport::BoxRoomSpec spec{6, 4, 2.6, 0.06, 2, 0, 3};
  const PointCloud cloud = testsupport::generate_box_room(spec);
  const auto views = testsupport::pinhole_ring(spec, 2, 128);
  const SplatParams params{spec.resolution_c, 1.0, 8.0};
  for (const CameraView& view : views) {
    const auto splat = extract_mapping(build_zbuffer(cloud, view, params), cloud, view, params);
    const auto oracle = oracle_visibility(cloud, view, params, spec.resolution_c / 2);
    std::set<std::uint32_t> splat_ids, oracle_ids;
    for (const auto& e : splat) splat_ids.insert(e.point_id);
    for (const auto& e : oracle) oracle_ids.insert(e.point_id);
    std::size_t common = 0;
    for (const auto id : splat_ids) common += oracle_ids.count(id);
    const double precision = static_cast<double>(common) / splat_ids.size();
    const double recall = static_cast<double>(common) / oracle_ids.size();
    const double f1 = 2 * precision * recall / (precision + recall);
    EXPECT_GT(f1, 0.95) << "view " << view.image_id;
  }
}

TEST(DepthBasedMapping, RecoversOracleSetFromItsDepthMap) {
  const testsupport::BoxRoomSpec spec{5, 4, 2.5, 0.08, 1, 0, 9};
  const PointCloud cloud = testsupport::generate_box_room(spec);
  const CameraView view = testsupport::pinhole_ring(spec, 1, 96)[0];
  const SplatParams params{spec.resolution_c, 1.0, 8.0};

  const auto oracle = oracle_visibility(cloud, view, params, spec.resolution_c / 2);
  ImageRaster depth_map(view.width(), view.height(), 1,
                        std::numeric_limits<float>::infinity());
  for (const VisEntry& e : oracle) depth_map.at(e.pixel.u, e.pixel.v) = e.depth;

  const auto mapped =
      depth_based_mapping(cloud, view, depth_map, spec.resolution_c, params);
  std::set<std::uint32_t> oracle_ids, mapped_ids;
  for (const auto& e : oracle) oracle_ids.insert(e.point_id);
  for (const auto& e : mapped) mapped_ids.insert(e.point_id);
  // Every oracle point is recovered (its own pixel holds its own depth).
  for (const auto id : oracle_ids) EXPECT_EQ(mapped_ids.count(id), 1u);
}

TEST(DepthBasedMapping, OutsideEpsilonExcluded) {
  PointCloud cloud;
  cloud.resolution_c = 0.05;
  cloud.positions = {Vec3(0, 0, 2.0)};
  const CameraView view = axis_pinhole(100, 64);
  ImageRaster depth_map(64, 64, 1, std::numeric_limits<float>::infinity());
  depth_map.at(32, 32) = 2.0f + 0.2f;  // |dist - map| = 2 * epsilon
  const auto entries = depth_based_mapping(cloud, view, depth_map, 0.1, {0.05, 1.0, 8.0});
  EXPECT_TRUE(entries.empty());
}

TEST(DepthBasedMapping, AllInfinityMapIsEmpty) {
  PointCloud cloud;
  cloud.resolution_c = 0.05;
  cloud.positions = {Vec3(0, 0, 2.0), Vec3(0.3, 0.2, 3.0)};
  const CameraView view = axis_pinhole(100, 64);
  const ImageRaster depth_map(64, 64, 1, std::numeric_limits<float>::infinity());
  EXPECT_TRUE(depth_based_mapping(cloud, view, depth_map, 0.5, {0.05, 1.0, 8.0}).empty());
}

TEST(DepthBasedMapping, DimensionMismatchRejected) {
  PointCloud cloud;
  cloud.positions = {Vec3(0, 0, 2.0)};
  const CameraView view = axis_pinhole(100, 64);
  const ImageRaster depth_map(32, 32, 1);
  try {
    depth_based_mapping(cloud, view, depth_map, 0.1, {0.05, 1.0, 8.0});
    FAIL() << "expected DimensionMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

}  // namespace
}  // namespace mvfuse
