// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#ifndef MVFUSE_BATCHING_HPP
#define MVFUSE_BATCHING_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "mvfuse/camera.hpp"
#include "mvfuse/core.hpp"
#include "mvfuse/mapping.hpp"
#include "mvfuse/rng.hpp"

namespace mvfuse {

struct BatchConfig {
  // Crop menu, kept sorted by area ascending at use.
  std::vector<std::pair<int, int>> crops = {{64, 64},   {128, 64},  {128, 128}, {256, 128},
                                            {256, 256}, {512, 256}, {512, 512}, {1024, 512}};
  int margin = 8;                 // pixels added around the seen-point bbox
  double budget = 0.0;            // pixel budget; <= 0 derives 4x the largest full image
  double lambda = 2.0;            // area-vs-coverage trade-off
  std::optional<int> max_images;  // image-count cap per plan
  std::uint64_t seed = 0;
};

/// A chosen window into an image. For equirectangular views the window is
/// expressed after rolling the panorama by `azimuth_offset` (u coordinates
/// wrap modulo the image width).
struct Viewport {
  int u0 = 0, v0 = 0;
  int w = 0, h = 0;
  double azimuth_offset = 0.0;

  std::int64_t area() const { return static_cast<std::int64_t>(w) * h; }
};

/// Picks the smallest crop-set window whose centered placement contains the
/// bounding box of the given pixels inflated by the margin. Equirectangular
/// pixels are recentered first (the returned azimuth_offset records the
/// roll). When even the largest crop cannot contain the box, the largest
/// crop is used centered on the box; mappings outside are simply clipped by
/// the consumer.
inline Viewport crop_image(const CameraView& view, const std::vector<PixelCoord>& pixels,
                           const BatchConfig& config) {
  require(!pixels.empty(), ErrorCode::NoVisiblePoints, "no sampled points visible in view");
  const int w_img = view.width();
  const int h_img = view.height();

  Viewport vp;
  std::vector<PixelCoord> local = pixels;
  if (is_equirect(view.model)) {
    // Circular mean of the pixels' azimuths, quantized to whole columns.
    double sum_sin = 0.0, sum_cos = 0.0;
    for (const PixelCoord& px : pixels) {
      const double az = ((px.u + 0.5) / w_img - 0.5) * kTwoPi;
      sum_sin += std::sin(az);
      sum_cos += std::cos(az);
    }
    const long shift = std::lround(std::atan2(sum_sin, sum_cos) / kTwoPi * w_img);
    vp.azimuth_offset = static_cast<double>(shift) * kTwoPi / w_img;
    for (PixelCoord& px : local) {
      px.u = static_cast<int>((((px.u - shift) % w_img) + w_img) % w_img);
    }
  }

  int u_min = local[0].u, u_max = local[0].u;
  int v_min = local[0].v, v_max = local[0].v;
  for (const PixelCoord& px : local) {
    u_min = std::min(u_min, px.u);
    u_max = std::max(u_max, px.u);
    v_min = std::min(v_min, px.v);
    v_max = std::max(v_max, px.v);
  }
  const int need_w = (u_max - u_min + 1) + 2 * config.margin;
  const int need_h = (v_max - v_min + 1) + 2 * config.margin;

  std::vector<std::pair<int, int>> crops = config.crops;
  std::sort(crops.begin(), crops.end(), [](const auto& a, const auto& b) {
    return static_cast<std::int64_t>(a.first) * a.second <
           static_cast<std::int64_t>(b.first) * b.second;
  });
  require(!crops.empty(), ErrorCode::ConfigError, "empty crop set");

  std::pair<int, int> size = crops.back();
  for (const auto& crop : crops) {
    if (crop.first >= need_w && crop.second >= need_h) {
      size = crop;
      break;
    }
  }
  vp.w = size.first;
  vp.h = size.second;

  const double center_u = 0.5 * (u_min + u_max + 1);
  const double center_v = 0.5 * (v_min + v_max + 1);
  vp.u0 = static_cast<int>(std::lround(center_u - 0.5 * vp.w));
  vp.v0 = static_cast<int>(std::lround(center_v - 0.5 * vp.h));
  // Pull the window back inside the raster where it fits; center it when it
  // does not (origin may then be negative, meaning padded borders).
  if (is_equirect(view.model)) {
    vp.u0 = vp.w >= w_img ? 0 : ((vp.u0 % w_img) + w_img) % w_img;
  } else {
    vp.u0 = vp.w <= w_img ? std::clamp(vp.u0, 0, w_img - vp.w) : (w_img - vp.w) / 2;
  }
  vp.v0 = vp.h <= h_img ? std::clamp(vp.v0, 0, h_img - vp.h) : (h_img - vp.h) / 2;
  return vp;
}

/// The selection score: normalized crop area plus lambda times normalized
/// newly-seen point count. Zero-valued maxima contribute 0 for their term.
inline double score_image(std::int64_t area, std::size_t unseen, std::int64_t max_area,
                          std::size_t max_unseen, double lambda) {
  double score = 0.0;
  if (max_area > 0) score += static_cast<double>(area) / static_cast<double>(max_area);
  if (max_unseen > 0) {
    score += lambda * static_cast<double>(unseen) / static_cast<double>(max_unseen);
  }
  return score;
}

struct PlannedImage {
  std::uint32_t image_id = 0;
  Viewport viewport;
  std::int64_t area = 0;
  std::size_t unseen_at_pick = 0;
  double score_at_pick = 0.0;
};

struct SizeBucket {
  int w = 0, h = 0;
  std::vector<std::uint32_t> image_ids;
};

struct BatchPlan {
  std::vector<PlannedImage> chosen;
  double spent = 0.0;
  std::vector<SizeBucket> buckets;
};

namespace detail {

class SampleBitset {
 public:
  explicit SampleBitset(std::size_t n) : bits_((n + 63) / 64, 0) {}

  void set(std::size_t i) { bits_[i >> 6] |= std::uint64_t{1} << (i & 63); }
  bool test(std::size_t i) const { return (bits_[i >> 6] >> (i & 63)) & 1; }

  std::size_t count_not_in(const SampleBitset& other) const {
    std::size_t total = 0;
    for (std::size_t w = 0; w < bits_.size(); ++w) {
      total += static_cast<std::size_t>(__builtin_popcountll(bits_[w] & ~other.bits_[w]));
    }
    return total;
  }

  void merge(const SampleBitset& other) {
    for (std::size_t w = 0; w < bits_.size(); ++w) bits_[w] |= other.bits_[w];
  }

 private:
  std::vector<std::uint64_t> bits_;
};

}  // namespace detail

/// Budgeted stochastic image selection over the images seeing a point
/// sample. Each round scores the surviving candidates, draws one with
/// probability proportional to score, and subtracts its crop area from the
/// budget after the pick, so the final image may overshoot (spent stays
/// below budget + the largest chosen area). Fully determined by the seed.
inline BatchPlan plan_batch(const std::vector<std::uint32_t>& sample,
                            const std::vector<CameraView>& views, const MultiViewMapping& mapping,
                            const BatchConfig& config) {
  struct Candidate {
    std::uint32_t image_id;
    const CameraView* view;
    std::vector<PixelCoord> pixels;
    detail::SampleBitset seen;
    Viewport viewport;
    std::int64_t area = 0;

    Candidate(std::uint32_t id, const CameraView* v, std::size_t sample_size)
        : image_id(id), view(v), seen(sample_size) {}
  };

  std::map<std::uint32_t, const CameraView*> view_by_id;
  for (const CameraView& v : views) view_by_id[v.image_id] = &v;

  std::map<std::uint32_t, std::size_t> slot_of_image;
  std::vector<Candidate> candidates;
  for (std::size_t s = 0; s < sample.size(); ++s) {
    for (const MappingEntry& e : mapping.views_of(sample[s])) {
      auto [it, inserted] = slot_of_image.try_emplace(e.image_id, candidates.size());
      if (inserted) {
        const auto view_it = view_by_id.find(e.image_id);
        require(view_it != view_by_id.end(), ErrorCode::OutOfRange,
                "mapping references image " + std::to_string(e.image_id) + " with no pose");
        candidates.emplace_back(e.image_id, view_it->second, sample.size());
      }
      Candidate& cand = candidates[it->second];
      cand.pixels.push_back({e.u, e.v});
      cand.seen.set(s);
    }
  }
  for (Candidate& cand : candidates) {
    cand.viewport = crop_image(*cand.view, cand.pixels, config);
    cand.area = cand.viewport.area();
  }

  double budget = config.budget;
  if (budget <= 0.0) {
    std::int64_t full = 0;
    for (const Candidate& cand : candidates) {
      full = std::max(full, static_cast<std::int64_t>(cand.view->width()) *
                                cand.view->height());
    }
    budget = 4.0 * static_cast<double>(full);
  }

  BatchPlan plan;
  detail::SampleBitset covered(sample.size());
  std::vector<std::size_t> remaining(candidates.size());
  std::iota(remaining.begin(), remaining.end(), 0);
  Rng rng(config.seed);

  while (budget > 0.0 && !remaining.empty()) {
    if (config.max_images && static_cast<int>(plan.chosen.size()) >= *config.max_images) break;

    std::int64_t max_area = 0;
    std::size_t max_unseen = 0;
    std::vector<std::size_t> unseen(remaining.size());
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      const Candidate& cand = candidates[remaining[i]];
      unseen[i] = cand.seen.count_not_in(covered);
      max_area = std::max(max_area, cand.area);
      max_unseen = std::max(max_unseen, unseen[i]);
    }

    std::vector<double> scores(remaining.size());
    double total = 0.0;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      scores[i] =
          score_image(candidates[remaining[i]].area, unseen[i], max_area, max_unseen,
                      config.lambda);
      if (scores[i] > 0.0) total += scores[i];
    }
    if (total <= 0.0) break;

    const double draw = rng.uniform(0.0, total);
    double cumulative = 0.0;
    std::size_t picked = remaining.size() - 1;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      if (scores[i] <= 0.0) continue;
      cumulative += scores[i];
      if (draw < cumulative) {
        picked = i;
        break;
      }
    }

    const Candidate& cand = candidates[remaining[picked]];
    plan.chosen.push_back(
        {cand.image_id, cand.viewport, cand.area, unseen[picked], scores[picked]});
    plan.spent += static_cast<double>(cand.area);
    budget -= static_cast<double>(cand.area);
    covered.merge(cand.seen);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(picked));
  }

  std::map<std::pair<int, int>, std::vector<std::uint32_t>> buckets;
  for (const PlannedImage& img : plan.chosen) {
    buckets[{img.viewport.w, img.viewport.h}].push_back(img.image_id);
  }
  for (auto& [size, ids] : buckets) plan.buckets.push_back({size.first, size.second, ids});
  return plan;
}

}  // namespace mvfuse

#endif  // MVFUSE_BATCHING_HPP
