// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#ifndef MVFUSE_CORE_HPP
#define MVFUSE_CORE_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mvfuse {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Typed error categories. Every recoverable failure in the engine maps to
/// exactly one of these; callers dispatch on code(), not on message text.
enum class ErrorCode {
  IoFailure,
  MalformedHeader,
  UnsupportedProperty,
  TruncatedData,
  BadRotation,
  DuplicateId,
  UnknownModel,
  NoVisiblePoints,
  StaleBuffer,
  DimensionMismatch,
  DegenerateCloud,
  MissingGeometry,
  DuplicatePair,
  OutOfRange,
  BadMagic,
  VersionMismatch,
  Truncated,
  InvariantViolation,
  BadDims,
  WidthMismatch,
  EmptyView,
  ShapeMismatch,
  MissingIntermediates,
  LengthMismatch,
  ConfigError,
  Precondition,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnsupportedProperty: return "UnsupportedProperty";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::BadRotation: return "BadRotation";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::NoVisiblePoints: return "NoVisiblePoints";
    case ErrorCode::StaleBuffer: return "StaleBuffer";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateCloud: return "DegenerateCloud";
    case ErrorCode::MissingGeometry: return "MissingGeometry";
    case ErrorCode::DuplicatePair: return "DuplicatePair";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::BadDims: return "BadDims";
    case ErrorCode::WidthMismatch: return "WidthMismatch";
    case ErrorCode::EmptyView: return "EmptyView";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingIntermediates: return "MissingIntermediates";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::Precondition: return "Precondition";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

/// Row-major scalar raster, 1 (gray/depth) or 3 (RGB) channels.
struct ImageRaster {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> data;

  ImageRaster() = default;
  ImageRaster(int w, int h, int ch, float fill = 0.0f)
      : width(w), height(h), channels(ch),
        data(static_cast<std::size_t>(w) * h * ch, fill) {
    require(w >= 1 && h >= 1, ErrorCode::Precondition, "raster dimensions must be >= 1");
    require(ch == 1 || ch == 3, ErrorCode::Precondition, "raster must have 1 or 3 channels");
  }

  float& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  bool valid() const {
    return width >= 1 && height >= 1 && (channels == 1 || channels == 3) &&
           data.size() == pixel_count() * static_cast<std::size_t>(channels);
  }
};

/// Point cloud with optional per-point color and class label channels.
/// `resolution_c` is the voxel-grid spacing the cloud was sampled at, in
/// meters; it feeds the splat-size and density formulas downstream.
struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<std::array<float, 3>> colors;  // empty or same length, RGB in [0,1]
  std::vector<std::int32_t> labels;          // empty or same length, -1 = unlabeled
  double resolution_c = 0.05;

  std::size_t size() const { return positions.size(); }
  bool has_colors() const { return !colors.empty(); }
  bool has_labels() const { return !labels.empty(); }

  void validate() const {
    require(resolution_c > 0.0, ErrorCode::Precondition, "resolution_c must be positive");
    for (const Vec3& p : positions) {
      require(p.allFinite(), ErrorCode::Precondition, "point positions must be finite");
    }
    require(colors.empty() || colors.size() == positions.size(), ErrorCode::LengthMismatch,
            "color channel length mismatch");
    require(labels.empty() || labels.size() == positions.size(), ErrorCode::LengthMismatch,
            "label channel length mismatch");
  }
};

}  // namespace mvfuse

#endif  // MVFUSE_CORE_HPP
