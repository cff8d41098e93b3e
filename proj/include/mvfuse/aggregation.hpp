// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#ifndef MVFUSE_AGGREGATION_HPP
#define MVFUSE_AGGREGATION_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "mvfuse/core.hpp"
#include "mvfuse/nn.hpp"
#include "mvfuse/rng.hpp"

namespace mvfuse {

/// Trainable tensors of the multi-view aggregation head.
///
/// phi0 encodes sampled image features (C -> C -> C). phi1/phi2/phi3 form
/// the deep-set quality-score stack: z = phi1(o), x = phi3([z, phi2(max z)])
/// with phi1: D -> M -> M, phi2: M -> M -> M, phi3: 2M -> M -> K. alpha and
/// beta scale and shift the per-block gate.
template <class S>
struct AggregationParams {
  int c = 0, k = 0, m = 0, d = 8;
  Mlp<S> phi0, phi1, phi2, phi3;
  VecX<S> alpha, beta;

  int block_width() const { return c / k; }

  struct TensorView {
    std::string name;
    S* data;
    Eigen::Index rows, cols;

    Eigen::Index size() const { return rows * cols; }
  };

  std::vector<TensorView> tensor_views() {
    std::vector<TensorView> out;
    auto add_mlp = [&out](const char* prefix, Mlp<S>& mlp) {
      out.push_back({std::string(prefix) + ".w1", mlp.w1.data(), mlp.w1.rows(), mlp.w1.cols()});
      out.push_back({std::string(prefix) + ".b1", mlp.b1.data(), mlp.b1.size(), 1});
      out.push_back({std::string(prefix) + ".w2", mlp.w2.data(), mlp.w2.rows(), mlp.w2.cols()});
      out.push_back({std::string(prefix) + ".b2", mlp.b2.data(), mlp.b2.size(), 1});
    };
    add_mlp("phi0", phi0);
    add_mlp("phi1", phi1);
    add_mlp("phi2", phi2);
    add_mlp("phi3", phi3);
    out.push_back({"alpha", alpha.data(), alpha.size(), 1});
    out.push_back({"beta", beta.data(), beta.size(), 1});
    return out;
  }

  bool finite() const {
    auto ok = [](const auto& m) { return m.allFinite(); };
    return ok(phi0.w1) && ok(phi0.w2) && ok(phi1.w1) && ok(phi1.w2) && ok(phi2.w1) &&
           ok(phi2.w2) && ok(phi3.w1) && ok(phi3.w2) && ok(alpha) && ok(beta);
  }
};

/// Seeded parameter initialization: uniform fan-in weights, zero biases,
/// alpha = 1 and beta = 0 so an all-negative score block gates to exactly
/// zero from the first step.
template <class S>
AggregationParams<S> init_params(int c, int k, int m, std::uint64_t seed,
                                 Activation act = Activation::LeakyRelu) {
  require(c >= 1 && k >= 1 && m >= 1, ErrorCode::BadDims, "dims must be positive");
  require(c % k == 0, ErrorCode::BadDims,
          "C must be divisible by K (got C=" + std::to_string(c) + ", K=" + std::to_string(k) +
              ")");
  Rng rng(seed);
  AggregationParams<S> params;
  params.c = c;
  params.k = k;
  params.m = m;
  params.phi0 = Mlp<S>::init(c, c, c, act, rng);
  params.phi1 = Mlp<S>::init(params.d, m, m, act, rng);
  params.phi2 = Mlp<S>::init(m, m, m, act, rng);
  params.phi3 = Mlp<S>::init(2 * m, m, k, act, rng);
  params.alpha = VecX<S>::Ones(k);
  params.beta = VecX<S>::Zero(k);
  return params;
}

template <class S>
AggregationParams<S> zero_grads_like(const AggregationParams<S>& p) {
  AggregationParams<S> g;
  g.c = p.c;
  g.k = p.k;
  g.m = p.m;
  g.d = p.d;
  g.phi0 = Mlp<S>::zeros_like(p.phi0);
  g.phi1 = Mlp<S>::zeros_like(p.phi1);
  g.phi2 = Mlp<S>::zeros_like(p.phi2);
  g.phi3 = Mlp<S>::zeros_like(p.phi3);
  g.alpha = VecX<S>::Zero(p.alpha.size());
  g.beta = VecX<S>::Zero(p.beta.size());
  return g;
}

/// Ragged per-point view data: columns of `conditions` / `features` are
/// views; the views of point p occupy columns [offsets[p], offsets[p+1])
/// and mirror a mapping slice restricted to the sampled images.
template <class S>
struct ViewBatch {
  std::vector<std::uint64_t> offsets = {0};
  std::vector<std::uint32_t> image_ids;
  MatX<S> conditions;  // D x V
  MatX<S> features;    // C x V

  std::size_t num_points() const { return offsets.size() - 1; }
  std::size_t num_views() const { return image_ids.size(); }
  std::size_t views_of(std::size_t p) const { return offsets[p + 1] - offsets[p]; }

  void validate() const {
    require(offsets.front() == 0 && offsets.back() == image_ids.size() &&
                std::is_sorted(offsets.begin(), offsets.end()),
            ErrorCode::ShapeMismatch, "batch offsets malformed");
    require(static_cast<std::size_t>(conditions.cols()) == image_ids.size() &&
                static_cast<std::size_t>(features.cols()) == image_ids.size(),
            ErrorCode::ShapeMismatch, "batch column count mismatch");
  }
};

/// Retained intermediates of one forward pass; required by backward(). View
/// columns stay in batch order, `order` lists them per point sorted by
/// image id — every reduction walks that order, which pins the result
/// bitwise under any input permutation.
template <class S>
struct ForwardTrace {
  std::vector<std::uint32_t> order;
  MatX<S> h0pre, fenc;
  MatX<S> h1pre, z;
  MatX<S> zmax, h2pre, phimax;
  std::vector<std::uint32_t> zargmax;  // M x P, column-major
  MatX<S> cat, h3pre, x;
  MatX<S> xmax, tanhpre;
  std::vector<std::uint32_t> xargmax;  // K x P, column-major
  MatX<S> attention, sums;
  std::size_t num_views = 0, num_points = 0;
  bool valid = false;
};

template <class S>
struct PooledFeatures {
  MatX<S> pooled;          // C x P
  std::vector<char> seen;  // P
  MatX<S> attention;       // K x V, batch column order
  MatX<S> gates;           // K x P, zero for unseen points
};

/// Per-view encoded features f = phi0(sampled image feature).
template <class S>
MatX<S> view_encode(const ViewBatch<S>& batch, const AggregationParams<S>& params,
                    MatX<S>* hidden_pre = nullptr) {
  require(batch.features.rows() == params.c, ErrorCode::WidthMismatch,
          "feature width does not match C");
  return params.phi0.forward(batch.features, hidden_pre);
}

namespace detail {

template <class S>
MatX<S> gather_cols(const MatX<S>& m, const std::uint32_t* idx, std::size_t n) {
  MatX<S> out(m.rows(), n);
  for (std::size_t j = 0; j < n; ++j) out.col(j) = m.col(idx[j]);
  return out;
}

}  // namespace detail

template <class S>
PooledFeatures<S> forward(const ViewBatch<S>& batch, const AggregationParams<S>& params,
                          ForwardTrace<S>* trace_out = nullptr) {
  batch.validate();
  require(batch.features.rows() == params.c, ErrorCode::WidthMismatch,
          "feature width does not match C");
  require(batch.conditions.rows() == params.d, ErrorCode::WidthMismatch,
          "condition width does not match D");
  require(params.finite(), ErrorCode::Precondition, "parameters must be finite");

  const std::size_t num_points = batch.num_points();
  const std::size_t num_views = batch.num_views();
  const int blocks = params.k;
  const int block_w = params.block_width();

  ForwardTrace<S> local;
  ForwardTrace<S>& t = trace_out ? *trace_out : local;
  t = ForwardTrace<S>();
  t.num_views = num_views;
  t.num_points = num_points;

  // Per-point view order sorted by image id; all reductions follow it.
  t.order.resize(num_views);
  std::iota(t.order.begin(), t.order.end(), 0);
  for (std::size_t p = 0; p < num_points; ++p) {
    std::sort(t.order.begin() + batch.offsets[p], t.order.begin() + batch.offsets[p + 1],
              [&](std::uint32_t a, std::uint32_t b) {
                return batch.image_ids[a] < batch.image_ids[b];
              });
  }

  t.fenc = params.phi0.forward(batch.features, &t.h0pre);
  t.z = params.phi1.forward(batch.conditions, &t.h1pre);

  t.zmax.setZero(params.m, num_points);
  t.zargmax.assign(static_cast<std::size_t>(params.m) * num_points, 0);
  for (std::size_t p = 0; p < num_points; ++p) {
    const std::size_t begin = batch.offsets[p], end = batch.offsets[p + 1];
    if (begin == end) continue;
    for (int ch = 0; ch < params.m; ++ch) {
      std::uint32_t best = t.order[begin];
      S best_val = t.z(ch, best);
      for (std::size_t s = begin + 1; s < end; ++s) {
        const std::uint32_t j = t.order[s];
        if (t.z(ch, j) > best_val) {
          best_val = t.z(ch, j);
          best = j;
        }
      }
      t.zmax(ch, p) = best_val;
      t.zargmax[p * params.m + ch] = best;
    }
  }

  t.phimax = params.phi2.forward(t.zmax, &t.h2pre);

  t.cat.resize(2 * params.m, num_views);
  for (std::size_t p = 0; p < num_points; ++p) {
    for (std::size_t s = batch.offsets[p]; s < batch.offsets[p + 1]; ++s) {
      t.cat.col(s).head(params.m) = t.z.col(s);
      t.cat.col(s).tail(params.m) = t.phimax.col(p);
    }
  }
  t.x = params.phi3.forward(t.cat, &t.h3pre);

  PooledFeatures<S> out;
  out.pooled.setZero(params.c, num_points);
  out.seen.assign(num_points, 0);
  out.gates.setZero(blocks, num_points);
  t.attention.setZero(blocks, num_views);
  t.sums.setZero(params.c, num_points);
  t.xmax.setZero(blocks, num_points);
  t.tanhpre.setZero(blocks, num_points);
  t.xargmax.assign(static_cast<std::size_t>(blocks) * num_points, 0);

  for (std::size_t p = 0; p < num_points; ++p) {
    const std::size_t begin = batch.offsets[p], end = batch.offsets[p + 1];
    const std::size_t vp = end - begin;
    if (vp == 0) continue;
    out.seen[p] = 1;
    const S inv_sqrt_v = S(1) / std::sqrt(static_cast<S>(vp));

    for (int k = 0; k < blocks; ++k) {
      // Scaled softmax over the point's views (Eq. 5 shape).
      S tmax = -std::numeric_limits<S>::infinity();
      for (std::size_t s = begin; s < end; ++s) {
        tmax = std::max(tmax, t.x(k, t.order[s]) * inv_sqrt_v);
      }
      S denom = S(0);
      for (std::size_t s = begin; s < end; ++s) {
        const std::uint32_t j = t.order[s];
        const S e = std::exp(t.x(k, j) * inv_sqrt_v - tmax);
        t.attention(k, j) = e;
        denom += e;
      }
      for (std::size_t s = begin; s < end; ++s) t.attention(k, t.order[s]) /= denom;

      // Gate from the block's best quality score.
      std::uint32_t best = t.order[begin];
      S best_val = t.x(k, best);
      for (std::size_t s = begin + 1; s < end; ++s) {
        const std::uint32_t j = t.order[s];
        if (t.x(k, j) > best_val) {
          best_val = t.x(k, j);
          best = j;
        }
      }
      t.xmax(k, p) = best_val;
      t.xargmax[p * blocks + k] = best;
      const S pre = params.alpha(k) * best_val + params.beta(k);
      const S th = std::tanh(pre);
      t.tanhpre(k, p) = th;
      out.gates(k, p) = std::max(th, S(0));

      // Attention-weighted block sum, then the gate.
      for (std::size_t s = begin; s < end; ++s) {
        const std::uint32_t j = t.order[s];
        t.sums.col(p).segment(k * block_w, block_w) +=
            t.attention(k, j) * t.fenc.col(j).segment(k * block_w, block_w);
      }
      out.pooled.col(p).segment(k * block_w, block_w) =
          out.gates(k, p) * t.sums.col(p).segment(k * block_w, block_w);
    }
  }

  out.attention = t.attention;
  t.valid = true;
  return out;
}

/// Deep-set quality scores x (K x V) without running the pooling tail.
template <class S>
MatX<S> quality_scores(const ViewBatch<S>& batch, const AggregationParams<S>& params) {
  require(batch.conditions.rows() == params.d, ErrorCode::WidthMismatch,
          "condition width does not match D");
  ViewBatch<S> encoded = batch;
  if (encoded.features.rows() != params.c) {
    encoded.features = MatX<S>::Zero(params.c, batch.num_views());
  }
  ForwardTrace<S> trace;
  forward(encoded, params, &trace);
  return trace.x;
}

/// Scaled softmax over one point's quality scores (columns = that point's
/// views, any order). Weights are positive and sum to one per block.
template <class S>
MatX<S> attention(const MatX<S>& x_point) {
  require(x_point.cols() >= 1, ErrorCode::EmptyView, "attention needs at least one view");
  const S inv_sqrt_v = S(1) / std::sqrt(static_cast<S>(x_point.cols()));
  MatX<S> out(x_point.rows(), x_point.cols());
  for (Eigen::Index k = 0; k < x_point.rows(); ++k) {
    const S tmax = (x_point.row(k) * inv_sqrt_v).maxCoeff();
    S denom = S(0);
    for (Eigen::Index j = 0; j < x_point.cols(); ++j) {
      out(k, j) = std::exp(x_point(k, j) * inv_sqrt_v - tmax);
      denom += out(k, j);
    }
    out.row(k) /= denom;
  }
  return out;
}

/// Per-block gate g = relu(tanh(alpha * max_i x + beta)).
template <class S>
VecX<S> gating(const MatX<S>& x_point, const VecX<S>& alpha, const VecX<S>& beta) {
  require(x_point.cols() >= 1, ErrorCode::EmptyView, "gating needs at least one view");
  require(alpha.size() == x_point.rows() && beta.size() == x_point.rows(),
          ErrorCode::ShapeMismatch, "alpha/beta size mismatch");
  VecX<S> out(x_point.rows());
  for (Eigen::Index k = 0; k < x_point.rows(); ++k) {
    const S pre = alpha(k) * x_point.row(k).maxCoeff() + beta(k);
    out(k) = std::max(std::tanh(pre), S(0));
  }
  return out;
}

template <class S>
struct Gradients {
  AggregationParams<S> params;
  MatX<S> features;    // C x V
  MatX<S> conditions;  // D x V
};

namespace detail {

/// Reverse pass of the quality-score stack for one point: consumes dL/dx
/// over the point's views (sorted order) and accumulates condition
/// gradients; parameter gradients are accumulated when `grads` is non-null.
template <class S>
void score_backward_point(const ViewBatch<S>& batch, const AggregationParams<S>& params,
                          const ForwardTrace<S>& t, std::size_t p, const MatX<S>& dx_sorted,
                          AggregationParams<S>* grads, MatX<S>& dcond) {
  const std::size_t begin = batch.offsets[p], end = batch.offsets[p + 1];
  const std::size_t vp = end - begin;
  const std::uint32_t* order = t.order.data() + begin;

  AggregationParams<S> scratch;
  const bool want_params = grads != nullptr;
  if (!want_params) scratch = zero_grads_like(params);
  AggregationParams<S>& g = want_params ? *grads : scratch;

  const MatX<S> cat_s = gather_cols(t.cat, order, vp);
  const MatX<S> h3pre_s = gather_cols(t.h3pre, order, vp);
  MatX<S> dcat = params.phi3.backward(cat_s, h3pre_s, dx_sorted, g.phi3);

  MatX<S> dz_sorted = dcat.topRows(params.m);
  VecX<S> dphimax = dcat.bottomRows(params.m).rowwise().sum();

  MatX<S> dzmax =
      params.phi2.backward(t.zmax.col(p), t.h2pre.col(p), MatX<S>(dphimax), g.phi2);

  // Channelwise max routes to the winning view.
  for (int ch = 0; ch < params.m; ++ch) {
    const std::uint32_t winner = t.zargmax[p * params.m + ch];
    for (std::size_t s = 0; s < vp; ++s) {
      if (order[s] == winner) {
        dz_sorted(ch, s) += dzmax(ch, 0);
        break;
      }
    }
  }

  const MatX<S> cond_s = gather_cols(batch.conditions, order, vp);
  const MatX<S> h1pre_s = gather_cols(t.h1pre, order, vp);
  MatX<S> dcond_sorted = params.phi1.backward(cond_s, h1pre_s, dz_sorted, g.phi1);
  for (std::size_t s = 0; s < vp; ++s) dcond.col(order[s]) += dcond_sorted.col(s);
}

}  // namespace detail

/// Exact reverse-mode differentiation of the full head. `upstream` is
/// dL/d(pooled), C x P. Returns gradients for every parameter tensor, every
/// input feature column, and every condition column.
template <class S>
Gradients<S> backward(const ViewBatch<S>& batch, const AggregationParams<S>& params,
                      const ForwardTrace<S>& t, const MatX<S>& upstream) {
  require(t.valid && t.num_views == batch.num_views() && t.num_points == batch.num_points(),
          ErrorCode::MissingIntermediates, "forward trace missing or stale");
  require(upstream.rows() == params.c &&
              static_cast<std::size_t>(upstream.cols()) == batch.num_points(),
          ErrorCode::ShapeMismatch, "upstream gradient must be C x P");

  const int blocks = params.k;
  const int block_w = params.block_width();
  Gradients<S> out;
  out.params = zero_grads_like(params);
  out.features.setZero(params.c, batch.num_views());
  out.conditions.setZero(params.d, batch.num_views());

  MatX<S> dfenc = MatX<S>::Zero(params.c, batch.num_views());
  MatX<S> dx = MatX<S>::Zero(blocks, batch.num_views());

  for (std::size_t p = 0; p < batch.num_points(); ++p) {
    const std::size_t begin = batch.offsets[p], end = batch.offsets[p + 1];
    const std::size_t vp = end - begin;
    if (vp == 0) continue;
    const S inv_sqrt_v = S(1) / std::sqrt(static_cast<S>(vp));

    for (int k = 0; k < blocks; ++k) {
      const auto u_k = upstream.col(p).segment(k * block_w, block_w);
      const auto s_k = t.sums.col(p).segment(k * block_w, block_w);
      const S gate = std::max(t.tanhpre(k, p), S(0));
      const S dgate = u_k.dot(s_k);

      // Pool: dS = g * U, da_j = dS . f_jk, df_jk += a_j * dS.
      S inner = S(0);
      std::vector<S> da(vp);
      for (std::size_t s = 0; s < vp; ++s) {
        const std::uint32_t j = t.order[begin + s];
        da[s] = gate * u_k.dot(t.fenc.col(j).segment(k * block_w, block_w));
        dfenc.col(j).segment(k * block_w, block_w) += (gate * t.attention(k, j)) * u_k;
        inner += t.attention(k, j) * da[s];
      }
      // Softmax: dt_j = a_j (da_j - sum_l a_l da_l), dx_j = dt_j / sqrt(V).
      for (std::size_t s = 0; s < vp; ++s) {
        const std::uint32_t j = t.order[begin + s];
        dx(k, j) += t.attention(k, j) * (da[s] - inner) * inv_sqrt_v;
      }
      // Gate: relu(tanh(.)) passes gradient only while the gate is open.
      if (t.tanhpre(k, p) > S(0)) {
        const S dpre = dgate * (S(1) - t.tanhpre(k, p) * t.tanhpre(k, p));
        out.params.alpha(k) += dpre * t.xmax(k, p);
        out.params.beta(k) += dpre;
        dx(k, t.xargmax[p * blocks + k]) += dpre * params.alpha(k);
      }
    }
  }

  for (std::size_t p = 0; p < batch.num_points(); ++p) {
    const std::size_t begin = batch.offsets[p], end = batch.offsets[p + 1];
    const std::size_t vp = end - begin;
    if (vp == 0) continue;
    const std::uint32_t* order = t.order.data() + begin;

    const MatX<S> dx_sorted = detail::gather_cols(dx, order, vp);
    detail::score_backward_point(batch, params, t, p, dx_sorted, &out.params, out.conditions);

    const MatX<S> feat_s = detail::gather_cols(batch.features, order, vp);
    const MatX<S> h0pre_s = detail::gather_cols(t.h0pre, order, vp);
    const MatX<S> dfenc_s = detail::gather_cols(dfenc, order, vp);
    MatX<S> dfeat_sorted = params.phi0.backward(feat_s, h0pre_s, dfenc_s, out.params.phi0);
    for (std::size_t s = 0; s < vp; ++s) out.features.col(order[s]) += dfeat_sorted.col(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient verification.
// ---------------------------------------------------------------------------

struct GradCheckEntry {
  std::string tensor;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> tensors;
  std::string worst_tensor;
  double worst = 0.0;
  bool pass = false;
};

/// Compares analytic gradients against central finite differences on the
/// scalar loss sum(G .* pooled) with a fixed random G. Relative error per
/// coordinate is |ga - gfd| / max(1e-12, |ga| + |gfd|); a tensor's score is
/// its worst coordinate. `fault` adds a constant to one analytic phi1.w1
/// gradient entry, for validating that the check actually detects faults.
inline GradCheckReport grad_check(const ViewBatch<double>& batch,
                                  AggregationParams<double> params, double tolerance,
                                  double step = 1e-6, double fault = 0.0,
                                  std::uint64_t upstream_seed = 1234) {
  Rng rng(upstream_seed);
  MatX<double> upstream(params.c, batch.num_points());
  for (Eigen::Index i = 0; i < upstream.size(); ++i) upstream(i) = rng.uniform(-1.0, 1.0);

  ForwardTrace<double> trace;
  forward(batch, params, &trace);
  Gradients<double> analytic = backward(batch, params, trace, upstream);
  if (fault != 0.0) analytic.params.phi1.w1(0, 0) += fault;

  auto loss = [&](AggregationParams<double>& current, const MatX<double>& features,
                  const MatX<double>& conditions) {
    ViewBatch<double> b = batch;
    b.features = features;
    b.conditions = conditions;
    const PooledFeatures<double> pooled = forward(b, current);
    return (upstream.array() * pooled.pooled.array()).sum();
  };

  GradCheckReport report;
  auto check_tensor = [&](const std::string& name, double* value, const double* grad,
                          Eigen::Index size, auto&& eval) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < size; ++i) {
      const double keep = value[i];
      value[i] = keep + step;
      const double up = eval();
      value[i] = keep - step;
      const double down = eval();
      value[i] = keep;
      const double fd = (up - down) / (2.0 * step);
      const double rel =
          std::abs(grad[i] - fd) / std::max(1e-12, std::abs(grad[i]) + std::abs(fd));
      worst = std::max(worst, rel);
    }
    report.tensors.push_back({name, worst});
    if (worst > report.worst) {
      report.worst = worst;
      report.worst_tensor = name;
    }
  };

  MatX<double> features = batch.features;
  MatX<double> conditions = batch.conditions;
  auto eval_params = [&]() { return loss(params, features, conditions); };

  auto views = params.tensor_views();
  auto grad_views = analytic.params.tensor_views();
  for (std::size_t i = 0; i < views.size(); ++i) {
    check_tensor(views[i].name, views[i].data, grad_views[i].data, views[i].size(), eval_params);
  }
  check_tensor("features", features.data(), analytic.features.data(), features.size(),
               eval_params);
  check_tensor("conditions", conditions.data(), analytic.conditions.data(), conditions.size(),
               eval_params);

  report.pass = report.worst < tolerance;
  return report;
}

// ---------------------------------------------------------------------------
// Descriptor sensitivity.
// ---------------------------------------------------------------------------

struct SensitivityReport {
  std::array<double, 8> percent{};
  std::array<double, 8> raw{};
  bool degenerate = false;
};

/// Mean over all views and blocks of the squared partial derivative of the
/// quality score with respect to each of the view's own descriptors,
/// normalized to percentages. A constant score stack reports uniform with
/// the degenerate flag set.
template <class S>
SensitivityReport descriptor_sensitivity(const ViewBatch<S>& batch,
                                         const AggregationParams<S>& params) {
  ViewBatch<S> encoded = batch;
  if (encoded.features.rows() != params.c) {
    encoded.features = MatX<S>::Zero(params.c, batch.num_views());
  }
  ForwardTrace<S> trace;
  forward(encoded, params, &trace);

  SensitivityReport report;
  std::size_t samples = 0;
  MatX<S> dcond(params.d, batch.num_views());
  for (std::size_t p = 0; p < batch.num_points(); ++p) {
    const std::size_t begin = batch.offsets[p], end = batch.offsets[p + 1];
    const std::size_t vp = end - begin;
    if (vp == 0) continue;
    for (std::size_t s = 0; s < vp; ++s) {
      const std::uint32_t j = trace.order[begin + s];
      for (int k = 0; k < params.k; ++k) {
        MatX<S> dx_sorted = MatX<S>::Zero(params.k, vp);
        dx_sorted(k, s) = S(1);
        dcond.setZero();
        detail::score_backward_point(encoded, params, trace, p, dx_sorted,
                                     static_cast<AggregationParams<S>*>(nullptr), dcond);
        for (int d = 0; d < params.d; ++d) {
          const double partial = static_cast<double>(dcond(d, j));
          report.raw[d] += partial * partial;
        }
        ++samples;
      }
    }
  }
  double total = 0.0;
  for (int d = 0; d < 8; ++d) {
    if (samples > 0) report.raw[d] /= static_cast<double>(samples);
    total += report.raw[d];
  }
  if (total <= 0.0) {
    report.degenerate = true;
    report.percent.fill(100.0 / 8.0);
  } else {
    for (int d = 0; d < 8; ++d) report.percent[d] = 100.0 * report.raw[d] / total;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Checkpointing.
// ---------------------------------------------------------------------------

template <class S>
void save_params(const std::string& path, const AggregationParams<S>& params) {
  AggregationParams<S> copy = params;
  NamedTensors tensors;
  tensors.emplace_back("dims", [&] {
    MatX<double> dims(4, 1);
    dims << params.c, params.k, params.m, params.d;
    return dims;
  }());
  for (const auto& view : copy.tensor_views()) {
    MatX<double> value(view.rows, view.cols);
    for (Eigen::Index i = 0; i < view.size(); ++i) value(i) = static_cast<double>(view.data[i]);
    tensors.emplace_back(view.name, std::move(value));
  }
  save_named_tensors(path, tensors);
}

template <class S>
AggregationParams<S> load_params(const std::string& path,
                                 Activation act = Activation::LeakyRelu) {
  const NamedTensors tensors = load_named_tensors(path);
  require(!tensors.empty() && tensors.front().first == "dims" &&
              tensors.front().second.size() == 4,
          ErrorCode::InvariantViolation, "checkpoint lacks dims tensor");
  const auto& dims = tensors.front().second;
  AggregationParams<S> params = init_params<S>(
      static_cast<int>(dims(0)), static_cast<int>(dims(1)), static_cast<int>(dims(2)), 0, act);
  auto views = params.tensor_views();
  require(tensors.size() == views.size() + 1, ErrorCode::InvariantViolation,
          "checkpoint tensor count mismatch");
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& [name, value] = tensors[i + 1];
    require(name == views[i].name, ErrorCode::InvariantViolation,
            "unexpected tensor '" + name + "'");
    require(value.rows() == views[i].rows && value.cols() == views[i].cols,
            ErrorCode::ShapeMismatch, "tensor shape mismatch for '" + name + "'");
    for (Eigen::Index j = 0; j < views[i].size(); ++j) {
      views[i].data[j] = static_cast<S>(value(j));
    }
  }
  return params;
}

}  // namespace mvfuse

#endif  // MVFUSE_AGGREGATION_HPP
