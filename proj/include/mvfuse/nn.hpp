// Copyright (c) 2026 mvfuse contributors
// SPDX-License-Identifier: Apache-2.0

#ifndef MVFUSE_NN_HPP
#define MVFUSE_NN_HPP

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mvfuse/core.hpp"
#include "mvfuse/mapping.hpp"  // little-endian stream helpers
#include "mvfuse/rng.hpp"

namespace mvfuse {

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Hidden-layer nonlinearity. LeakyRelu (slope 0.2) is the default; Relu is
/// the plain-rectifier switch; Identity turns an MLP into a purely linear
/// map for verification.
enum class Activation { LeakyRelu, Relu, Identity };

template <class S>
inline S activate(S pre, Activation act) {
  switch (act) {
    case Activation::LeakyRelu: return pre > S(0) ? pre : S(0.2) * pre;
    case Activation::Relu: return pre > S(0) ? pre : S(0);
    case Activation::Identity: return pre;
  }
  return pre;
}

template <class S>
inline S activate_grad(S pre, Activation act) {
  switch (act) {
    case Activation::LeakyRelu: return pre > S(0) ? S(1) : S(0.2);
    case Activation::Relu: return pre > S(0) ? S(1) : S(0);
    case Activation::Identity: return S(1);
  }
  return S(1);
}

/// Two-layer perceptron y = w2 * act(w1 * x + b1) + b2 operating on column
/// batches. The caller keeps the pre-activation matrix from forward() to
/// drive backward().
template <class S>
struct Mlp {
  MatX<S> w1, w2;
  VecX<S> b1, b2;
  Activation act = Activation::LeakyRelu;

  int in_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }
  int out_dim() const { return static_cast<int>(w2.rows()); }

  static Mlp init(int in, int hidden, int out, Activation act, Rng& rng) {
    Mlp mlp;
    mlp.act = act;
    auto fill = [&rng](MatX<S>& m, int rows, int cols) {
      m.resize(rows, cols);
      const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = static_cast<S>(rng.uniform(-bound, bound));
    };
    fill(mlp.w1, hidden, in);
    fill(mlp.w2, out, hidden);
    mlp.b1 = VecX<S>::Zero(hidden);
    mlp.b2 = VecX<S>::Zero(out);
    return mlp;
  }

  static Mlp zeros_like(const Mlp& other) {
    Mlp mlp;
    mlp.act = other.act;
    mlp.w1 = MatX<S>::Zero(other.w1.rows(), other.w1.cols());
    mlp.w2 = MatX<S>::Zero(other.w2.rows(), other.w2.cols());
    mlp.b1 = VecX<S>::Zero(other.b1.size());
    mlp.b2 = VecX<S>::Zero(other.b2.size());
    return mlp;
  }

  MatX<S> forward(const MatX<S>& x, MatX<S>* hidden_pre = nullptr) const {
    MatX<S> h = (w1 * x).colwise() + b1;
    if (hidden_pre) *hidden_pre = h;
    for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = activate(h(i), act);
    return (w2 * h).colwise() + b2;
  }

  /// Accumulates parameter gradients into `grads` and returns dL/dx.
  MatX<S> backward(const MatX<S>& x, const MatX<S>& hidden_pre, const MatX<S>& dy,
                   Mlp& grads) const {
    MatX<S> h = hidden_pre;
    for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = activate(h(i), act);
    grads.w2.noalias() += dy * h.transpose();
    grads.b2 += dy.rowwise().sum();
    MatX<S> dh = w2.transpose() * dy;
    for (Eigen::Index c = 0; c < dh.cols(); ++c)
      for (Eigen::Index r = 0; r < dh.rows(); ++r)
        dh(r, c) *= activate_grad(hidden_pre(r, c), act);
    grads.w1.noalias() += dh * x.transpose();
    grads.b1 += dh.rowwise().sum();
    return w1.transpose() * dh;
  }
};

template <class S>
struct Linear {
  MatX<S> w;
  VecX<S> b;

  static Linear init(int in, int out, Rng& rng) {
    Linear lin;
    lin.w.resize(out, in);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) lin.w(r, c) = static_cast<S>(rng.uniform(-bound, bound));
    lin.b = VecX<S>::Zero(out);
    return lin;
  }

  static Linear zeros_like(const Linear& other) {
    Linear lin;
    lin.w = MatX<S>::Zero(other.w.rows(), other.w.cols());
    lin.b = VecX<S>::Zero(other.b.size());
    return lin;
  }

  MatX<S> forward(const MatX<S>& x) const { return (w * x).colwise() + b; }

  MatX<S> backward(const MatX<S>& x, const MatX<S>& dy, Linear& grads) const {
    grads.w.noalias() += dy * x.transpose();
    grads.b += dy.rowwise().sum();
    return w.transpose() * dy;
  }
};

// ---------------------------------------------------------------------------
// Named-tensor checkpoint container.
//
// Layout (little-endian):
//   magic "MVCP" | version u32 | count u32 | hash u64 |
//   count x { name_len u32, name bytes, rows u32, cols u32, f64 payload }
// The hash is FNV-1a 64 over every tensor's name and payload bytes and is
// verified on load.
// ---------------------------------------------------------------------------

using NamedTensors = std::vector<std::pair<std::string, MatX<double>>>;

namespace detail {

inline constexpr char kCheckpointMagic[4] = {'M', 'V', 'C', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

inline void fnv_mix(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= kFnvPrime;
  }
}

inline std::uint64_t tensors_hash(const NamedTensors& tensors) {
  std::uint64_t h = kFnvOffset;
  for (const auto& [name, value] : tensors) {
    fnv_mix(h, name.data(), name.size());
    for (Eigen::Index c = 0; c < value.cols(); ++c) {
      for (Eigen::Index r = 0; r < value.rows(); ++r) {
        const double v = value(r, c);
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
        fnv_mix(h, b, 8);
      }
    }
  }
  return h;
}

}  // namespace detail

inline void save_named_tensors(const std::string& path, const NamedTensors& tensors) {
  detail::LeWriter w{std::ofstream(path, std::ios::binary)};
  require(w.out.good(), ErrorCode::IoFailure, "cannot open '" + path + "' for writing");
  w.out.write(detail::kCheckpointMagic, 4);
  w.u32(detail::kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  w.u64(detail::tensors_hash(tensors));
  for (const auto& [name, value] : tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.out.write(name.data(), static_cast<std::streamsize>(name.size()));
    w.u32(static_cast<std::uint32_t>(value.rows()));
    w.u32(static_cast<std::uint32_t>(value.cols()));
    for (Eigen::Index c = 0; c < value.cols(); ++c)
      for (Eigen::Index r = 0; r < value.rows(); ++r) w.f64(value(r, c));
  }
  require(w.out.good(), ErrorCode::IoFailure, "write failed for '" + path + "'");
}

inline NamedTensors load_named_tensors(const std::string& path) {
  detail::LeReader r{std::ifstream(path, std::ios::binary)};
  require(r.in.good(), ErrorCode::IoFailure, "cannot open '" + path + "'");
  char magic[4];
  r.bytes(magic, 4);
  require(std::memcmp(magic, detail::kCheckpointMagic, 4) == 0, ErrorCode::BadMagic,
          "not a checkpoint file");
  require(r.u32() == detail::kCheckpointVersion, ErrorCode::VersionMismatch,
          "unsupported checkpoint version");
  const std::uint32_t count = r.u32();
  const std::uint64_t stored_hash = r.u64();

  NamedTensors tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    MatX<double> value(rows, cols);
    for (std::uint32_t c = 0; c < cols; ++c)
      for (std::uint32_t row = 0; row < rows; ++row) value(row, c) = r.f64();
    tensors.emplace_back(std::move(name), std::move(value));
  }
  require(detail::tensors_hash(tensors) == stored_hash, ErrorCode::InvariantViolation,
          "checkpoint hash mismatch");
  return tensors;
}

}  // namespace mvfuse

#endif  // MVFUSE_NN_HPP
