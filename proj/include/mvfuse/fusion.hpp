// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#ifndef MVFUSE_FUSION_HPP
#define MVFUSE_FUSION_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "mvfuse/aggregation.hpp"
#include "mvfuse/camera.hpp"
#include "mvfuse/core.hpp"
#include "mvfuse/io/image.hpp"
#include "mvfuse/io/ply.hpp"
#include "mvfuse/io/pose.hpp"
#include "mvfuse/nn.hpp"
#include "mvfuse/pipeline.hpp"
#include "mvfuse/rng.hpp"

namespace mvfuse {

/// Per-point concatenation of 3D features and pooled image features, in
/// that order. Both inputs stay recoverable as row slices.
template <class S>
struct FusedFeatures {
  MatX<S> features;
  std::vector<char> seen;
  int width_3d = 0;
  int width_image = 0;
};

template <class S>
FusedFeatures<S> fuse_features(const MatX<S>& features_3d, const PooledFeatures<S>& pooled) {
  require(features_3d.cols() == pooled.pooled.cols(), ErrorCode::LengthMismatch,
          "3D features and pooled features disagree on point count");
  FusedFeatures<S> out;
  out.width_3d = static_cast<int>(features_3d.rows());
  out.width_image = static_cast<int>(pooled.pooled.rows());
  out.features.resize(out.width_3d + out.width_image, features_3d.cols());
  out.features.topRows(out.width_3d) = features_3d;
  out.features.bottomRows(out.width_image) = pooled.pooled;
  out.seen = pooled.seen;
  return out;
}

/// Early fusion: raw 3D features join the pooled image features before the
/// point encoder.
template <class S>
FusedFeatures<S> early_fuse(const MatX<S>& raw_3d, const PooledFeatures<S>& pooled) {
  return fuse_features(raw_3d, pooled);
}

/// Late fusion: the same concatenation applied to decoded point features,
/// immediately before the classifier.
template <class S>
FusedFeatures<S> late_fuse(const MatX<S>& decoded_3d, const PooledFeatures<S>& pooled) {
  return fuse_features(decoded_3d, pooled);
}

// ---------------------------------------------------------------------------
// Synthetic textured-plane scene.
//
// Geometrically identical tiles on a wall carry class-colored textures, so
// class identity is only observable through images: geometry alone cannot
// separate the classes, image features can.
// ---------------------------------------------------------------------------

struct ToySceneSpec {
  int tiles_x = 8;
  int tiles_y = 6;
  double tile_size = 0.4;   // meters
  int num_classes = 3;
  double resolution_c = 0.05;
  int num_cameras = 6;
  int image_size = 96;
  double camera_distance = 3.0;
  std::uint64_t seed = 7;
};

struct ToyScene {
  PointCloud cloud;
  std::vector<CameraView> views;
  ToySceneSpec spec;
  std::vector<int> tile_classes;

  int class_at(double x, double y) const {
    const double wx = spec.tiles_x * spec.tile_size;
    const double wy = spec.tiles_y * spec.tile_size;
    const int tx = std::clamp(static_cast<int>((x + 0.5 * wx) / spec.tile_size), 0,
                              spec.tiles_x - 1);
    const int ty = std::clamp(static_cast<int>((y + 0.5 * wy) / spec.tile_size), 0,
                              spec.tiles_y - 1);
    return tile_classes[static_cast<std::size_t>(ty) * spec.tiles_x + tx];
  }
};

namespace detail {

inline std::array<float, 3> class_color(int cls, int num_classes) {
  // Evenly spaced hues at full saturation.
  const double h = 6.0 * static_cast<double>(cls) / num_classes;
  const int i = static_cast<int>(h) % 6;
  const float f = static_cast<float>(h - std::floor(h));
  const float q = 1.0f - f;
  switch (i) {
    case 0: return {1.0f, f, 0.15f};
    case 1: return {q, 1.0f, 0.15f};
    case 2: return {0.15f, 1.0f, f};
    case 3: return {0.15f, q, 1.0f};
    case 4: return {f, 0.15f, 1.0f};
    default: return {1.0f, 0.15f, q};
  }
}

inline std::array<float, 3> wall_texture(const ToyScene& scene, double x, double y) {
  const int cls = scene.class_at(x, y);
  std::array<float, 3> rgb = class_color(cls, scene.spec.num_classes);
  // Fine checker modulation keeps local/mean statistics distinct.
  const int cx = static_cast<int>(std::floor(x / 0.05));
  const int cy = static_cast<int>(std::floor(y / 0.05));
  const float mod = ((cx + cy) & 1) ? 0.75f : 1.0f;
  for (float& v : rgb) v *= mod;
  return rgb;
}

inline Mat3 look_at_rotation(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 world_down(0.0, 1.0, 0.0);
  Vec3 right = world_down.cross(forward);
  if (right.norm() < 1e-9) right = Vec3(1.0, 0.0, 0.0);
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat3 rot;
  rot.col(0) = right;
  rot.col(1) = down;
  rot.col(2) = forward;
  return rot;
}

}  // namespace detail

/// Builds the textured-wall scene: a jittered point grid on the z = 0 plane
/// labeled by tile class, plus an arc of pinhole cameras with analytically
/// rendered rasters.
inline ToyScene generate_toy_scene(const ToySceneSpec& spec) {
  require(spec.num_classes >= 2 && spec.tiles_x >= 1 && spec.tiles_y >= 1 &&
              spec.num_cameras >= 1 && spec.image_size >= 16 && spec.resolution_c > 0,
          ErrorCode::ConfigError, "bad scene spec");
  Rng rng(spec.seed);
  ToyScene scene;
  scene.spec = spec;

  // Balanced class assignment, shuffled so position never implies class.
  const int tiles = spec.tiles_x * spec.tiles_y;
  scene.tile_classes.resize(tiles);
  for (int t = 0; t < tiles; ++t) scene.tile_classes[t] = t % spec.num_classes;
  for (int t = tiles - 1; t > 0; --t) {
    std::swap(scene.tile_classes[t],
              scene.tile_classes[rng.below(static_cast<std::uint64_t>(t) + 1)]);
  }

  const double wx = spec.tiles_x * spec.tile_size;
  const double wy = spec.tiles_y * spec.tile_size;
  scene.cloud.resolution_c = spec.resolution_c;
  const int nx = static_cast<int>(wx / spec.resolution_c);
  const int ny = static_cast<int>(wy / spec.resolution_c);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const double jx = rng.uniform(-0.3, 0.3) * spec.resolution_c;
      const double jy = rng.uniform(-0.3, 0.3) * spec.resolution_c;
      const double x = -0.5 * wx + (ix + 0.5) * spec.resolution_c + jx;
      const double y = -0.5 * wy + (iy + 0.5) * spec.resolution_c + jy;
      scene.cloud.positions.emplace_back(x, y, 0.0);
      scene.cloud.labels.push_back(scene.class_at(x, y));
    }
  }

  for (int cam = 0; cam < spec.num_cameras; ++cam) {
    const double frac = spec.num_cameras == 1
                            ? 0.5
                            : static_cast<double>(cam) / (spec.num_cameras - 1);
    CameraView view;
    view.image_id = static_cast<std::uint32_t>(cam);
    const Vec3 eye((frac - 0.5) * 0.8 * wx, rng.uniform(-0.15, 0.15) * wy,
                   spec.camera_distance * rng.uniform(0.85, 1.15));
    const Vec3 target(rng.uniform(-0.1, 0.1) * wx, rng.uniform(-0.1, 0.1) * wy, 0.0);
    view.rotation = detail::look_at_rotation(eye, target);
    view.translation = eye;

    PinholeModel model;
    model.width = model.height = spec.image_size;
    model.fx = model.fy = 0.5 * spec.image_size * spec.camera_distance / (0.65 * wx);
    model.cx = model.cy = 0.5 * spec.image_size;
    view.model = model;

    // Analytic render: intersect each pixel ray with the wall plane.
    auto raster = std::make_shared<ImageRaster>(model.width, model.height, 3, 0.5f);
    for (int py = 0; py < model.height; ++py) {
      for (int px = 0; px < model.width; ++px) {
        const Vec3 dir_cam((px + 0.5 - model.cx) / model.fx, (py + 0.5 - model.cy) / model.fy,
                           1.0);
        const Vec3 dir = view.rotation * dir_cam.normalized();
        if (std::abs(dir.z()) < 1e-12) continue;
        const double t_hit = -eye.z() / dir.z();
        if (t_hit <= 0.0) continue;
        const Vec3 hit = eye + t_hit * dir;
        if (std::abs(hit.x()) > 0.5 * wx || std::abs(hit.y()) > 0.5 * wy) continue;
        const auto rgb = detail::wall_texture(scene, hit.x(), hit.y());
        for (int c = 0; c < 3; ++c) raster->at(px, py, c) = rgb[c];
      }
    }
    view.raster = std::move(raster);
    scene.views.push_back(std::move(view));
  }
  return scene;
}

struct ExportedScene {
  std::string cloud_path;
  std::string poses_path;
};

/// Writes the scene as engine-native files (PLY cloud, pose manifest, PNG
/// rasters) under `directory`.
inline ExportedScene export_scene(const ToyScene& scene, const std::string& directory) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  ExportedScene out;
  out.cloud_path = (fs::path(directory) / "cloud.ply").string();
  io::write_point_cloud(out.cloud_path, scene.cloud);

  io::PoseManifest manifest;
  for (const CameraView& view : scene.views) {
    CameraView copy = view;
    copy.raster_path =
        (fs::path(directory) / ("image_" + std::to_string(view.image_id) + ".png")).string();
    if (view.raster) io::write_png(copy.raster_path, *view.raster);
    manifest.views.push_back(std::move(copy));
  }
  out.poses_path = (fs::path(directory) / "poses.txt").string();
  io::write_pose_manifest(out.poses_path, manifest);
  return out;
}

// ---------------------------------------------------------------------------
// Toy trainable stack.
// ---------------------------------------------------------------------------

enum class ToyMode { XyzOnly, Early, Late, ImageOnly };

inline const char* to_string(ToyMode mode) {
  switch (mode) {
    case ToyMode::XyzOnly: return "xyz-only";
    case ToyMode::Early: return "early";
    case ToyMode::Late: return "late";
    case ToyMode::ImageOnly: return "image-only";
  }
  return "?";
}

inline ToyMode parse_toy_mode(const std::string& name) {
  if (name == "xyz-only") return ToyMode::XyzOnly;
  if (name == "early") return ToyMode::Early;
  if (name == "late") return ToyMode::Late;
  if (name == "image-only") return ToyMode::ImageOnly;
  fail(ErrorCode::ConfigError, "unknown mode '" + name + "'");
}

struct ToyTrainConfig {
  ToyMode mode = ToyMode::Early;
  int epochs = 200;
  double learning_rate = 0.05;
  std::uint64_t seed = 1;
  int c = 16, k = 4, m = 8;      // aggregation head dims
  int encoder_hidden = 32;
  int encoder_out = 32;
  int knn_k = 20;
  double r_max = 8.0;
};

/// Pointwise stand-ins for the out-of-scope 2D/3D backbones: a pixel-feature
/// map over multi-scale local mean RGB, a point encoder, and a linear
/// classifier around the aggregation head.
template <class S>
struct ToyModel {
  Mlp<S> extractor;  // 9 -> C -> C
  Mlp<S> encoder;
  Linear<S> classifier;
  AggregationParams<S> agg;
  ToyMode mode = ToyMode::Early;
  int num_classes = 0;
};

template <class S>
struct ToyData {
  ViewBatch<S> batch;     // conditions filled; features filled per epoch
  MatX<S> pixel_inputs;   // 9 x V: RGB, 3x3 mean RGB, 9x9 mean RGB
  MatX<S> xyz;            // 3 x P
  std::vector<int> labels;
  MultiViewMapping mapping;
};

namespace detail {

/// Summed-area table per channel for O(1) clamped box means.
class BoxMeans {
 public:
  explicit BoxMeans(const ImageRaster& image)
      : w_(image.width), h_(image.height), ch_(image.channels),
        sat_(static_cast<std::size_t>(w_ + 1) * (h_ + 1) * ch_, 0.0) {
    for (int y = 0; y < h_; ++y) {
      for (int x = 0; x < w_; ++x) {
        for (int c = 0; c < ch_; ++c) {
          at(x + 1, y + 1, c) = image.at(x, y, c) + at(x, y + 1, c) + at(x + 1, y, c) -
                                at(x, y, c);
        }
      }
    }
  }

  double mean(int x, int y, int radius, int c) const {
    const int x0 = std::max(0, x - radius), x1 = std::min(w_ - 1, x + radius);
    const int y0 = std::max(0, y - radius), y1 = std::min(h_ - 1, y + radius);
    const double sum = at(x1 + 1, y1 + 1, c) - at(x0, y1 + 1, c) - at(x1 + 1, y0, c) +
                       at(x0, y0, c);
    return sum / (static_cast<double>(x1 - x0 + 1) * (y1 - y0 + 1));
  }

 private:
  double& at(int x, int y, int c) {
    return sat_[(static_cast<std::size_t>(y) * (w_ + 1) + x) * ch_ + c];
  }
  double at(int x, int y, int c) const {
    return sat_[(static_cast<std::size_t>(y) * (w_ + 1) + x) * ch_ + c];
  }

  int w_, h_, ch_;
  std::vector<double> sat_;
};

}  // namespace detail

/// Runs the mapping pipeline on a toy scene and assembles the fixed training
/// inputs: the view batch (conditions), per-view pixel inputs, XYZ features,
/// and labels.
template <class S>
ToyData<S> prepare_toy_data(const ToyScene& scene, const ToyTrainConfig& config) {
  require(!scene.cloud.positions.empty() && !scene.views.empty(), ErrorCode::ConfigError,
          "empty scene");
  PipelineParams pipe;
  pipe.splat = {scene.cloud.resolution_c, 1.0, config.r_max};
  pipe.knn_k = config.knn_k;
  pipe.threads = 1;

  ToyData<S> data;
  data.mapping = build_multiview_mapping(scene.cloud, scene.views, pipe).mapping;
  data.labels.assign(scene.cloud.labels.begin(), scene.cloud.labels.end());

  const std::size_t num_views = data.mapping.num_entries();
  data.batch.offsets = data.mapping.offsets();
  data.batch.image_ids.resize(num_views);
  data.batch.conditions.resize(8, num_views);
  data.batch.features = MatX<S>::Zero(config.c, num_views);
  data.pixel_inputs.resize(9, num_views);

  std::vector<detail::BoxMeans> tables;
  tables.reserve(scene.views.size());
  for (const CameraView& view : scene.views) {
    require(view.raster != nullptr, ErrorCode::ConfigError, "scene view lacks a raster");
    tables.emplace_back(*view.raster);
  }
  std::map<std::uint32_t, std::size_t> view_index;
  for (std::size_t i = 0; i < scene.views.size(); ++i) {
    view_index[scene.views[i].image_id] = i;
  }

  const auto& entries = data.mapping.entries();
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const MappingEntry& entry = entries[e];
    data.batch.image_ids[e] = entry.image_id;
    for (int d = 0; d < 8; ++d) data.batch.conditions(d, e) = S(entry.conditions[d]);
    const std::size_t vi = view_index.at(entry.image_id);
    const detail::BoxMeans& box = tables[vi];
    const ImageRaster& raster = *scene.views[vi].raster;
    for (int c = 0; c < 3; ++c) {
      data.pixel_inputs(c, e) = S(raster.at(entry.u, entry.v, c));
      data.pixel_inputs(3 + c, e) = S(box.mean(entry.u, entry.v, 1, c));
      data.pixel_inputs(6 + c, e) = S(box.mean(entry.u, entry.v, 4, c));
    }
  }

  data.xyz.resize(3, scene.cloud.size());
  for (std::size_t p = 0; p < scene.cloud.size(); ++p) {
    data.xyz.col(p) = scene.cloud.positions[p].template cast<S>();
  }
  return data;
}

template <class S>
ToyModel<S> init_toy_model(const ToyTrainConfig& config, int num_classes) {
  ToyModel<S> model;
  model.mode = config.mode;
  model.num_classes = num_classes;
  Rng ext_rng(config.seed + 1);
  Rng enc_rng(config.seed + 2);
  Rng cls_rng(config.seed + 3);
  model.extractor = Mlp<S>::init(9, config.c, config.c, Activation::LeakyRelu, ext_rng);
  model.agg = init_params<S>(config.c, config.k, config.m, config.seed + 4);

  int encoder_in = 3;
  if (config.mode == ToyMode::Early) encoder_in = 3 + config.c;
  if (config.mode == ToyMode::ImageOnly) encoder_in = config.c;
  int classifier_in = config.encoder_out;
  if (config.mode == ToyMode::Late) classifier_in = config.encoder_out + config.c;

  model.encoder =
      Mlp<S>::init(encoder_in, config.encoder_hidden, config.encoder_out,
                   Activation::LeakyRelu, enc_rng);
  model.classifier = Linear<S>::init(classifier_in, num_classes, cls_rng);
  return model;
}

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

template <class S>
struct ToyResult {
  double final_accuracy = 0.0;
  std::vector<EpochRecord> curve;
  ToyModel<S> model;
  std::size_t mapping_entries = 0;
  double mean_views_per_point = 0.0;
};

namespace detail {

template <class S>
void sgd_step(Mlp<S>& mlp, const Mlp<S>& grads, double lr) {
  mlp.w1 -= S(lr) * grads.w1;
  mlp.b1 -= S(lr) * grads.b1;
  mlp.w2 -= S(lr) * grads.w2;
  mlp.b2 -= S(lr) * grads.b2;
}

}  // namespace detail

/// Full-batch gradient descent on softmax cross-entropy over all points.
/// Single-threaded with a fixed reduction order: two runs with the same
/// seed produce bitwise identical curves.
template <class S = double>
ToyResult<S> train_toy(const ToyScene& scene, const ToyTrainConfig& config) {
  require(config.epochs >= 1 && config.learning_rate > 0.0, ErrorCode::ConfigError,
          "bad training config");
  require(config.c % config.k == 0, ErrorCode::ConfigError, "C must be divisible by K");

  ToyData<S> data = prepare_toy_data<S>(scene, config);
  const std::size_t num_points = scene.cloud.size();
  const int num_classes = scene.spec.num_classes;
  ToyModel<S> model = init_toy_model<S>(config, num_classes);

  const bool uses_images = config.mode != ToyMode::XyzOnly;

  ToyResult<S> result;
  result.mapping_entries = data.mapping.num_entries();
  result.mean_views_per_point = data.mapping.mean_views_per_point();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Forward.
    MatX<S> ext_hidden;
    PooledFeatures<S> pooled;
    ForwardTrace<S> trace;
    if (uses_images) {
      data.batch.features = model.extractor.forward(data.pixel_inputs, &ext_hidden);
      pooled = forward(data.batch, model.agg, &trace);
    }

    MatX<S> encoder_in;
    switch (config.mode) {
      case ToyMode::XyzOnly: encoder_in = data.xyz; break;
      case ToyMode::Early: encoder_in = early_fuse(data.xyz, pooled).features; break;
      case ToyMode::Late: encoder_in = data.xyz; break;
      case ToyMode::ImageOnly: encoder_in = pooled.pooled; break;
    }
    MatX<S> enc_hidden;
    MatX<S> encoded = model.encoder.forward(encoder_in, &enc_hidden);

    MatX<S> classifier_in = encoded;
    if (config.mode == ToyMode::Late) {
      classifier_in = late_fuse(encoded, pooled).features;
    }
    MatX<S> logits = model.classifier.forward(classifier_in);

    // Softmax cross-entropy, mean over points.
    double loss = 0.0;
    std::size_t correct = 0;
    MatX<S> dlogits(num_classes, num_points);
    for (std::size_t p = 0; p < num_points; ++p) {
      const int label = data.labels[p];
      Eigen::Index best;
      const S maxv = logits.col(p).maxCoeff(&best);
      S denom = S(0);
      for (int c = 0; c < num_classes; ++c) denom += std::exp(logits(c, p) - maxv);
      const S lse = maxv + std::log(denom);
      loss += static_cast<double>(lse - logits(label, p));
      if (static_cast<int>(best) == label) ++correct;
      for (int c = 0; c < num_classes; ++c) {
        dlogits(c, p) = std::exp(logits(c, p) - lse) / S(num_points);
      }
      dlogits(label, p) -= S(1) / S(num_points);
    }
    loss /= static_cast<double>(num_points);
    const double accuracy = static_cast<double>(correct) / static_cast<double>(num_points);
    result.curve.push_back({epoch, loss, accuracy});
    result.final_accuracy = accuracy;

    // Backward.
    Linear<S> cls_grads = Linear<S>::zeros_like(model.classifier);
    MatX<S> dclassifier_in = model.classifier.backward(classifier_in, dlogits, cls_grads);

    MatX<S> dencoded = dclassifier_in;
    MatX<S> dpooled_late;
    if (config.mode == ToyMode::Late) {
      dencoded = dclassifier_in.topRows(config.encoder_out);
      dpooled_late = dclassifier_in.bottomRows(config.c);
    }

    Mlp<S> enc_grads = Mlp<S>::zeros_like(model.encoder);
    MatX<S> dencoder_in = model.encoder.backward(encoder_in, enc_hidden, dencoded, enc_grads);

    Gradients<S> agg_grads;
    Mlp<S> ext_grads = Mlp<S>::zeros_like(model.extractor);
    if (uses_images) {
      MatX<S> dpooled;
      switch (config.mode) {
        case ToyMode::Early: dpooled = dencoder_in.bottomRows(config.c); break;
        case ToyMode::ImageOnly: dpooled = dencoder_in; break;
        case ToyMode::Late: dpooled = dpooled_late; break;
        case ToyMode::XyzOnly: break;
      }
      agg_grads = backward(data.batch, model.agg, trace, dpooled);
      model.extractor.backward(data.pixel_inputs, ext_hidden, agg_grads.features, ext_grads);
    }

    // Parameter step.
    const double lr = config.learning_rate;
    model.classifier.w -= S(lr) * cls_grads.w;
    model.classifier.b -= S(lr) * cls_grads.b;
    detail::sgd_step(model.encoder, enc_grads, lr);
    if (uses_images) {
      detail::sgd_step(model.extractor, ext_grads, lr);
      detail::sgd_step(model.agg.phi0, agg_grads.params.phi0, lr);
      detail::sgd_step(model.agg.phi1, agg_grads.params.phi1, lr);
      detail::sgd_step(model.agg.phi2, agg_grads.params.phi2, lr);
      detail::sgd_step(model.agg.phi3, agg_grads.params.phi3, lr);
      model.agg.alpha -= S(lr) * agg_grads.params.alpha;
      model.agg.beta -= S(lr) * agg_grads.params.beta;
    }
  }

  result.model = std::move(model);
  return result;
}

template <class S = double>
ToyResult<S> train_toy(const ToySceneSpec& spec, const ToyTrainConfig& config) {
  return train_toy<S>(generate_toy_scene(spec), config);
}

}  // namespace mvfuse

#endif  // MVFUSE_FUSION_HPP
