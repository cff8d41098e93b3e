// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "mvfuse/io/config.hpp"
#include "mvfuse/io/image.hpp"
#include "mvfuse/io/pfm.hpp"
#include "mvfuse/io/ply.hpp"
#include "mvfuse/io/pose.hpp"
#include "mvfuse/rng.hpp"

namespace mvfuse {
namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::path(::testing::TempDir()) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected a typed error";
  return ErrorCode::IoFailure;
}

// --- PLY ---

TEST(Ply, AsciiThreeVertices) {
  const std::string path = temp_path("tri.ply");
  write_text(path,
             "ply\nformat ascii 1.0\nelement vertex 3\n"
             "property float x\nproperty float y\nproperty float z\nend_header\n"
             "0 0 0\n1 0 0\n0 1 0\n");
  const PointCloud cloud = io::read_point_cloud(path);
  ASSERT_EQ(cloud.size(), 3u);
  EXPECT_EQ(cloud.positions[1], Vec3(1, 0, 0));
  EXPECT_EQ(cloud.positions[2], Vec3(0, 1, 0));
  EXPECT_FALSE(cloud.has_colors());
}

TEST(Ply, ColorScaledTo01) {
  const std::string path = temp_path("red.ply");
  write_text(path,
             "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property float x\nproperty float y\nproperty float z\n"
             "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
             "0 0 0 255 0 0\n");
  const PointCloud cloud = io::read_point_cloud(path);
  ASSERT_TRUE(cloud.has_colors());
  EXPECT_FLOAT_EQ(cloud.colors[0][0], 1.0f);
  EXPECT_FLOAT_EQ(cloud.colors[0][1], 0.0f);
  EXPECT_FLOAT_EQ(cloud.colors[0][2], 0.0f);
}

TEST(Ply, TruncatedVertexData) {
  const std::string path = temp_path("trunc.ply");
  std::string body;
  for (int i = 0; i < 9; ++i) body += "0 0 0\n";
  write_text(path,
             "ply\nformat ascii 1.0\nelement vertex 10\n"
             "property float x\nproperty float y\nproperty float z\nend_header\n" +
                 body);
  EXPECT_EQ(code_of([&] { io::read_point_cloud(path); }), ErrorCode::TruncatedData);
}

TEST(Ply, MalformedMagic) {
  const std::string path = temp_path("notply.ply");
  write_text(path, "plx\nformat ascii 1.0\nend_header\n");
  EXPECT_EQ(code_of([&] { io::read_point_cloud(path); }), ErrorCode::MalformedHeader);
}

TEST(Ply, ListPropertyOnVertexRejected) {
  const std::string path = temp_path("list.ply");
  write_text(path,
             "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property float x\nproperty float y\nproperty float z\n"
             "property list uchar int verts\nend_header\n0 0 0 0\n");
  EXPECT_EQ(code_of([&] { io::read_point_cloud(path); }), ErrorCode::UnsupportedProperty);
}

TEST(Ply, UnknownScalarPropertySkipped) {
  const std::string path = temp_path("extra.ply");
  write_text(path,
             "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property float x\nproperty float y\nproperty float z\n"
             "property float intensity\nend_header\n1 2 3 9.5\n");
  const PointCloud cloud = io::read_point_cloud(path);
  ASSERT_EQ(cloud.size(), 1u);
  EXPECT_EQ(cloud.positions[0], Vec3(1, 2, 3));
}

TEST(Ply, BinaryRoundTrip) {
  Rng rng(21);
  PointCloud cloud;
  cloud.resolution_c = 0.04;
  for (int i = 0; i < 257; ++i) {
    // Values representable in float32 so the round trip is exact.
    cloud.positions.emplace_back(static_cast<float>(rng.uniform(-10, 10)),
                                 static_cast<float>(rng.uniform(-10, 10)),
                                 static_cast<float>(rng.uniform(-10, 10)));
    cloud.labels.push_back(static_cast<std::int32_t>(rng.below(5)) - 1);
  }
  const std::string path = temp_path("roundtrip.ply");
  io::write_point_cloud(path, cloud);
  const PointCloud back = io::read_point_cloud(path);
  ASSERT_EQ(back.size(), cloud.size());
  EXPECT_EQ(back.resolution_c, cloud.resolution_c);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    EXPECT_EQ(back.positions[i], cloud.positions[i]);
    EXPECT_EQ(back.labels[i], cloud.labels[i]);
  }
}

// --- Pose manifest ---

constexpr const char* kIdentityRow = " 1 0 0 0 1 0 0 0 1 0 0 0\n";

TEST(PoseManifest, ValidPinholeEntry) {
  const std::string path = temp_path("poses.txt");
  write_text(path, std::string("0 img.png PINHOLE 100 100 64 64 128 128") + kIdentityRow);
  const io::PoseManifest manifest = io::read_pose_manifest(path);
  ASSERT_EQ(manifest.views.size(), 1u);
  const auto& pin = std::get<PinholeModel>(manifest.views[0].model);
  EXPECT_EQ(pin.width, 128);
  EXPECT_TRUE(manifest.views[0].rotation.isIdentity(0.0));
  EXPECT_EQ(manifest.views[0].translation, Vec3::Zero());
}

TEST(PoseManifest, ScaledRotationRejected) {
  const std::string path = temp_path("badrot.txt");
  write_text(path, "0 img.png PINHOLE 100 100 64 64 128 128 2 0 0 0 2 0 0 0 2 0 0 0\n");
  EXPECT_EQ(code_of([&] { io::read_pose_manifest(path); }), ErrorCode::BadRotation);
}

TEST(PoseManifest, ReflectionRejected) {
  // Orthonormal but det = -1.
  const std::string path = temp_path("reflect.txt");
  write_text(path, "0 img.png EQUIRECT 64 32 -1 0 0 0 1 0 0 0 1 0 0 0\n");
  EXPECT_EQ(code_of([&] { io::read_pose_manifest(path); }), ErrorCode::BadRotation);
}

TEST(PoseManifest, DuplicateIdRejected) {
  const std::string path = temp_path("dup.txt");
  write_text(path, std::string("7 a.png EQUIRECT 64 32") + kIdentityRow +
                       "7 b.png EQUIRECT 64 32" + kIdentityRow);
  EXPECT_EQ(code_of([&] { io::read_pose_manifest(path); }), ErrorCode::DuplicateId);
}

TEST(PoseManifest, UnknownModelRejected) {
  const std::string path = temp_path("model.txt");
  write_text(path, std::string("0 a.png FISHEYE 64 32") + kIdentityRow);
  EXPECT_EQ(code_of([&] { io::read_pose_manifest(path); }), ErrorCode::UnknownModel);
}

TEST(PoseManifest, WriteReadRoundTrip) {
  io::PoseManifest manifest;
  CameraView a;
  a.image_id = 3;
  a.model = PinholeModel{123.5, 99.25, 10.5, 20.75, 64, 48};
  a.rotation = detail::rotation_about_y(0.7);
  a.translation = Vec3(1.5, -2.25, 3.125);
  a.raster_path = "a.png";
  manifest.views.push_back(a);
  CameraView b;
  b.image_id = 9;
  b.model = EquirectModel{256, 128};
  b.rotation = detail::rotation_about_y(-1.2);
  b.translation = Vec3(-4, 0.5, 2);
  manifest.views.push_back(b);

  const std::string path = temp_path("manifest_rt.txt");
  io::write_pose_manifest(path, manifest);
  const io::PoseManifest back = io::read_pose_manifest(path);
  ASSERT_EQ(back.views.size(), 2u);
  EXPECT_EQ(back.views[0].image_id, 3u);
  EXPECT_TRUE(back.views[0].rotation.isApprox(a.rotation, 1e-15));
  EXPECT_EQ(back.views[0].translation, a.translation);
  EXPECT_EQ(back.views[1].image_id, 9u);
  EXPECT_EQ(std::get<EquirectModel>(back.views[1].model).width, 256);
}

// --- PFM ---

TEST(Pfm, RoundTripBitExact) {
  ImageRaster depth(2, 2, 1);
  depth.at(0, 0) = 1.0f;
  depth.at(1, 0) = 2.0f;
  depth.at(0, 1) = 3.0f;
  depth.at(1, 1) = std::numeric_limits<float>::infinity();
  const std::string path = temp_path("depth.pfm");
  io::write_depth_map(path, depth);
  const ImageRaster back = io::read_depth_map(path);
  ASSERT_EQ(back.width, 2);
  ASSERT_EQ(back.height, 2);
  EXPECT_EQ(back.data, depth.data);
}

TEST(Pfm, MinimalFileBytes) {
  ImageRaster depth(1, 1, 1);
  depth.at(0, 0) = 0.0f;
  const std::string path = temp_path("tiny.pfm");
  io::write_depth_map(path, depth);

  std::ifstream in(path, std::ios::binary);
  std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "Pf\n1 1\n-1.0\n";
  ASSERT_EQ(contents.size(), header.size() + 4);
  EXPECT_EQ(contents.substr(0, header.size()), header);
  EXPECT_EQ(contents.substr(header.size()), std::string(4, '\0'));
}

TEST(Pfm, RejectsMultiChannel) {
  const ImageRaster rgb(2, 2, 3);
  EXPECT_EQ(code_of([&] { io::write_depth_map(temp_path("bad.pfm"), rgb); }),
            ErrorCode::Precondition);
}

TEST(Pfm, FuzzRoundTrip) {
  Rng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(17));
    const int h = 1 + static_cast<int>(rng.below(13));
    ImageRaster depth(w, h, 1);
    for (float& v : depth.data) {
      v = rng.below(8) == 0 ? std::numeric_limits<float>::infinity()
                            : static_cast<float>(rng.uniform(0, 100));
    }
    const std::string path = temp_path("fuzz.pfm");
    io::write_depth_map(path, depth);
    const ImageRaster back = io::read_depth_map(path);
    ASSERT_EQ(back.data, depth.data);
  }
}

// --- PNG / JPEG ---

TEST(Image, PngRoundTripExactAt8Bit) {
  ImageRaster img(7, 5, 3);
  Rng rng(41);
  for (float& v : img.data) v = static_cast<float>(rng.below(256)) / 255.0f;
  const std::string path = temp_path("img.png");
  io::write_png(path, img);
  const ImageRaster back = io::read_image(path);
  ASSERT_EQ(back.width, 7);
  ASSERT_EQ(back.height, 5);
  ASSERT_EQ(back.channels, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    EXPECT_NEAR(back.data[i], img.data[i], 0.5f / 255.0f);
  }
}

TEST(Image, JpegRoundTripApproximate) {
  ImageRaster img(32, 24, 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      img.at(x, y, 0) = 0.8f;
      img.at(x, y, 1) = 0.4f;
      img.at(x, y, 2) = 0.2f;
    }
  }
  const std::string path = temp_path("img.jpg");
  io::write_jpeg(path, img, 95);
  const ImageRaster back = io::read_image(path);
  ASSERT_EQ(back.width, 32);
  ASSERT_EQ(back.channels, 3);
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(back.at(16, 12, c), img.at(16, 12, c), 0.05f);
  }
}

TEST(Image, UnknownExtensionRejected) {
  EXPECT_EQ(code_of([&] { io::read_image(temp_path("img.bmp")); }),
            ErrorCode::UnsupportedProperty);
}

// --- Config ---

TEST(Config, ParsesDocumentedKeys) {
  const std::string path = temp_path("engine.cfg");
  write_text(path,
             "# engine config\n"
             "R_max = 20\n"
             "swell_k = 0.5\n"
             "knn_k = 30\n"
             "crops = 64x64,128x128\n"
             "margin = 4\n"
             "budget = 500000\n"
             "lambda = 1.5\n"
             "C = 16\nK = 2\nM = 8\nseed = 99\n");
  const io::EngineConfig cfg = io::read_config(path);
  EXPECT_EQ(cfg.r_max, 20.0);
  EXPECT_EQ(cfg.swell_k, 0.5);
  EXPECT_EQ(cfg.knn_k, 30);
  ASSERT_EQ(cfg.crops.size(), 2u);
  EXPECT_EQ(cfg.crops[1], std::make_pair(128, 128));
  EXPECT_EQ(cfg.margin, 4);
  EXPECT_EQ(cfg.budget, 500000.0);
  EXPECT_EQ(cfg.lambda, 1.5);
  EXPECT_EQ(cfg.c, 16);
  EXPECT_EQ(cfg.k, 2);
  EXPECT_EQ(cfg.m, 8);
  EXPECT_EQ(cfg.seed, 99u);
}

TEST(Config, UnknownKeyRejected) {
  const std::string path = temp_path("bad.cfg");
  write_text(path, "R_maximum = 8\n");
  EXPECT_EQ(code_of([&] { io::read_config(path); }), ErrorCode::ConfigError);
}

TEST(Config, DefaultsMatchReferenceValues) {
  const io::EngineConfig cfg;
  EXPECT_EQ(cfg.r_max, 8.0);
  EXPECT_EQ(cfg.swell_k, 1.0);
  EXPECT_EQ(cfg.knn_k, 50);
  EXPECT_EQ(cfg.crops.size(), 8u);
  EXPECT_EQ(cfg.crops.front(), std::make_pair(64, 64));
  EXPECT_EQ(cfg.crops.back(), std::make_pair(1024, 512));
  EXPECT_EQ(cfg.margin, 8);
  EXPECT_EQ(cfg.lambda, 2.0);
}

}  // namespace
}  // namespace mvfuse
