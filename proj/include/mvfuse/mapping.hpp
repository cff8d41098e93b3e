// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#ifndef MVFUSE_MAPPING_HPP
#define MVFUSE_MAPPING_HPP

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mvfuse/core.hpp"
#include "mvfuse/geometry.hpp"
#include "mvfuse/visibility.hpp"

namespace mvfuse {

/// One compatible point-image pair as stored: which image, the projection
/// pixel, the camera distance, and the 8 viewing-condition descriptors.
struct MappingEntry {
  std::uint32_t image_id = 0;
  std::uint16_t u = 0;
  std::uint16_t v = 0;
  float depth = 0.0f;
  std::array<float, 8> conditions{};

  bool operator==(const MappingEntry&) const = default;
};

/// Per-image input to the CSR build: the visibility entries of one image
/// together with their viewing conditions.
struct ImageEntries {
  std::uint32_t image_id = 0;
  std::vector<VisEntry> entries;
  std::vector<ViewingConditions> conditions;
};

/// CSR store of point-image pairs: entries for point p live in
/// [offsets[p], offsets[p+1]), sorted by image id within the slice.
class MultiViewMapping {
 public:
  MultiViewMapping() = default;
  MultiViewMapping(std::uint64_t num_points, std::vector<std::uint64_t> offsets,
                   std::vector<MappingEntry> entries)
      : num_points_(num_points), offsets_(std::move(offsets)), entries_(std::move(entries)) {
    verify_invariants();
  }

  std::uint64_t num_points() const { return num_points_; }
  std::uint64_t num_entries() const { return entries_.size(); }
  const std::vector<std::uint64_t>& offsets() const { return offsets_; }
  const std::vector<MappingEntry>& entries() const { return entries_; }

  std::span<const MappingEntry> views_of(std::uint64_t p) const {
    require(p < num_points_, ErrorCode::OutOfRange, "point id out of range");
    return {entries_.data() + offsets_[p], entries_.data() + offsets_[p + 1]};
  }

  double mean_views_per_point() const {
    return num_points_ == 0 ? 0.0
                            : static_cast<double>(entries_.size()) /
                                  static_cast<double>(num_points_);
  }

  void verify_invariants() const {
    require(offsets_.size() == num_points_ + 1, ErrorCode::InvariantViolation,
            "offsets length must be N+1");
    require(offsets_.front() == 0, ErrorCode::InvariantViolation, "offsets[0] must be 0");
    require(offsets_.back() == entries_.size(), ErrorCode::InvariantViolation,
            "offsets[N] must equal the entry count");
    for (std::size_t p = 0; p < num_points_; ++p) {
      require(offsets_[p] <= offsets_[p + 1], ErrorCode::InvariantViolation,
              "offsets must be monotone");
      for (std::uint64_t e = offsets_[p] + 1; e < offsets_[p + 1]; ++e) {
        require(entries_[e - 1].image_id < entries_[e].image_id, ErrorCode::InvariantViolation,
                "image ids must be strictly increasing within a point slice");
      }
    }
    for (const MappingEntry& e : entries_) {
      require(std::isfinite(e.depth) && e.depth >= 0.0f, ErrorCode::InvariantViolation,
              "entry depth must be finite and non-negative");
    }
  }

 private:
  std::uint64_t num_points_ = 0;
  std::vector<std::uint64_t> offsets_ = {0};
  std::vector<MappingEntry> entries_;
};

/// Regroups per-image visibility entries into the CSR layout. Images are
/// scattered in ascending image-id order so each point's slice comes out
/// sorted without a per-slice sort pass.
inline MultiViewMapping build_mapping(std::uint64_t num_points,
                                      std::vector<ImageEntries> per_image) {
  std::sort(per_image.begin(), per_image.end(),
            [](const ImageEntries& a, const ImageEntries& b) { return a.image_id < b.image_id; });
  for (std::size_t i = 1; i < per_image.size(); ++i) {
    require(per_image[i - 1].image_id != per_image[i].image_id, ErrorCode::DuplicateId,
            "two entry sets share image id " + std::to_string(per_image[i].image_id));
  }

  std::vector<std::uint64_t> offsets(num_points + 1, 0);
  for (const ImageEntries& img : per_image) {
    require(img.conditions.size() == img.entries.size(), ErrorCode::LengthMismatch,
            "conditions/entries length mismatch");
    for (const VisEntry& e : img.entries) {
      require(e.point_id < num_points, ErrorCode::OutOfRange, "entry references unknown point");
      ++offsets[e.point_id + 1];
    }
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());

  std::vector<MappingEntry> entries(offsets.back());
  std::vector<std::uint64_t> cursor(offsets.begin(), offsets.end() - 1);
  for (const ImageEntries& img : per_image) {
    for (std::size_t i = 0; i < img.entries.size(); ++i) {
      const VisEntry& e = img.entries[i];
      require(e.pixel.u >= 0 && e.pixel.u <= 0xFFFF && e.pixel.v >= 0 && e.pixel.v <= 0xFFFF,
              ErrorCode::OutOfRange, "pixel coordinates exceed 16 bits");
      const std::uint64_t slot = cursor[e.point_id]++;
      if (slot > offsets[e.point_id]) {
        require(entries[slot - 1].image_id != img.image_id, ErrorCode::DuplicatePair,
                "duplicate (point, image) pair");
      }
      entries[slot] = {img.image_id, static_cast<std::uint16_t>(e.pixel.u),
                       static_cast<std::uint16_t>(e.pixel.v), e.depth,
                       img.conditions[i].values};
    }
  }
  return MultiViewMapping(num_points, std::move(offsets), std::move(entries));
}

/// Keeps entries with depth <= d_max and restores the CSR invariants.
inline MultiViewMapping filter_by_depth(const MultiViewMapping& m, double d_max) {
  require(d_max >= 0.0, ErrorCode::Precondition, "d_max must be non-negative");
  std::vector<std::uint64_t> offsets(m.num_points() + 1, 0);
  std::vector<MappingEntry> entries;
  entries.reserve(m.num_entries());
  for (std::uint64_t p = 0; p < m.num_points(); ++p) {
    for (const MappingEntry& e : m.views_of(p)) {
      if (static_cast<double>(e.depth) <= d_max) entries.push_back(e);
    }
    offsets[p + 1] = entries.size();
  }
  return MultiViewMapping(m.num_points(), std::move(offsets), std::move(entries));
}

/// Replaces one descriptor column by its mean over all entries (the
/// feature-usage ablation). Idempotent by construction.
inline MultiViewMapping ablate_condition(const MultiViewMapping& m, int field_index) {
  require(field_index >= 0 && field_index < 8, ErrorCode::OutOfRange,
          "condition index must be in [0, 8)");
  double sum = 0.0;
  for (const MappingEntry& e : m.entries()) sum += e.conditions[field_index];
  const float mean =
      m.num_entries() == 0 ? 0.0f : static_cast<float>(sum / static_cast<double>(m.num_entries()));

  std::vector<MappingEntry> entries = m.entries();
  for (MappingEntry& e : entries) e.conditions[field_index] = mean;
  return MultiViewMapping(m.num_points(), m.offsets(), std::move(entries));
}

namespace detail {

inline constexpr char kMappingMagic[4] = {'M', 'V', 'M', 'P'};
inline constexpr std::uint32_t kMappingVersion = 1;

struct LeWriter {
  std::ofstream out;

  void u16(std::uint16_t v) {
    const char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
    out.write(b, 2);
  }
  void u32(std::uint32_t v) {
    const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
                       static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
    out.write(b, 4);
  }
  void u64(std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
    out.write(b, 8);
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
};

struct LeReader {
  std::ifstream in;

  void bytes(void* dst, std::size_t n) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in) fail(ErrorCode::Truncated, "unexpected end of file");
  }
  std::uint16_t u16() {
    unsigned char b[2];
    bytes(b, 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  bool at_eof() {
    in.peek();
    return in.eof();
  }
};

}  // namespace detail

/// MVMP binary layout (all little-endian):
///   magic "MVMP" | version u32 | N u64 | E u64 | offsets u64[N+1] |
///   entries E x { image_id u32, u u16, v u16, depth f32, conditions f32[8] }
inline void serialize(const MultiViewMapping& m, const std::string& path) {
  detail::LeWriter w{std::ofstream(path, std::ios::binary)};
  require(w.out.good(), ErrorCode::IoFailure, "cannot open '" + path + "' for writing");
  w.out.write(detail::kMappingMagic, 4);
  w.u32(detail::kMappingVersion);
  w.u64(m.num_points());
  w.u64(m.num_entries());
  for (const std::uint64_t off : m.offsets()) w.u64(off);
  for (const MappingEntry& e : m.entries()) {
    w.u32(e.image_id);
    w.u16(e.u);
    w.u16(e.v);
    w.f32(e.depth);
    for (const float c : e.conditions) w.f32(c);
  }
  require(w.out.good(), ErrorCode::IoFailure, "write failed for '" + path + "'");
}

inline MultiViewMapping deserialize(const std::string& path) {
  detail::LeReader r{std::ifstream(path, std::ios::binary)};
  require(r.in.good(), ErrorCode::IoFailure, "cannot open '" + path + "'");

  char magic[4];
  r.bytes(magic, 4);
  require(std::memcmp(magic, detail::kMappingMagic, 4) == 0, ErrorCode::BadMagic,
          "not an MVMP file");
  const std::uint32_t version = r.u32();
  require(version == detail::kMappingVersion, ErrorCode::VersionMismatch,
          "unsupported MVMP version " + std::to_string(version));

  const std::uint64_t n = r.u64();
  const std::uint64_t e = r.u64();
  std::vector<std::uint64_t> offsets(n + 1);
  for (auto& off : offsets) off = r.u64();
  std::vector<MappingEntry> entries(e);
  for (MappingEntry& entry : entries) {
    entry.image_id = r.u32();
    entry.u = r.u16();
    entry.v = r.u16();
    entry.depth = r.f32();
    for (float& c : entry.conditions) c = r.f32();
  }
  require(r.at_eof(), ErrorCode::InvariantViolation, "trailing bytes after entry payload");
  // The constructor re-verifies every structural invariant; a corrupted
  // store must not enter the pipeline.
  return MultiViewMapping(n, std::move(offsets), std::move(entries));
}

}  // namespace mvfuse

#endif  // MVFUSE_MAPPING_HPP
