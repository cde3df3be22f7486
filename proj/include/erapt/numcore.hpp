#pragma once

// Dense 64-bit vectors and matrices, the probability primitives used by the
// classifier head and losses, a central-difference gradient oracle, and a
// counter-based splittable random stream.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "erapt/error.hpp"

namespace erapt {

using RealVector = std::vector<double>;

/// Floor applied to probabilities inside every logarithm.
inline constexpr double kProbFloor = 1e-12;

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); });
}

inline void require_finite(std::span<const double> v, std::string_view what) {
  if (!all_finite(v)) throw NumericalError(std::string(what) + ": non-finite entry");
}

inline void require_same_size(std::span<const double> a, std::span<const double> b,
                              std::string_view what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + ")");
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require_same_size(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline double dist_inf(std::span<const double> a, std::span<const double> b) {
  require_same_size(a, b, "dist_inf");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline RealVector add(std::span<const double> a, std::span<const double> b) {
  require_same_size(a, b, "add");
  RealVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline RealVector sub(std::span<const double> a, std::span<const double> b) {
  require_same_size(a, b, "sub");
  RealVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline RealVector scaled(std::span<const double> a, double s) {
  RealVector out(a.begin(), a.end());
  for (double& v : out) v *= s;
  return out;
}

/// y += s * x
inline void axpy(double s, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw DimensionError("axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

/// Mean of equally sized vectors, formed as first + sum(v_i - first) / n so that
/// a set of identical vectors averages to that vector bit-exactly.
inline RealVector mean_of(std::span<const RealVector> vs) {
  if (vs.empty()) throw ConfigError("mean_of: empty set");
  const RealVector& base = vs.front();
  RealVector acc(base.size(), 0.0);
  for (std::size_t k = 1; k < vs.size(); ++k) {
    require_same_size(base, vs[k], "mean_of");
    for (std::size_t i = 0; i < base.size(); ++i) acc[i] += vs[k][i] - base[i];
  }
  const double n = static_cast<double>(vs.size());
  RealVector out(base);
  for (std::size_t i = 0; i < base.size(); ++i) out[i] += acc[i] / n;
  return out;
}

/// Scalar counterpart of mean_of.
inline double mean_of(std::span<const double> xs) {
  if (xs.empty()) throw ConfigError("mean_of: empty set");
  double acc = 0.0;
  for (std::size_t k = 1; k < xs.size(); ++k) acc += xs[k] - xs[0];
  return xs[0] + acc / static_cast<double>(xs.size());
}

class RealMatrix {
 public:
  RealMatrix() = default;
  RealMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  RealMatrix(std::size_t rows, std::size_t cols, RealVector data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("RealMatrix: data length " + std::to_string(data_.size()) +
                           " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const RealVector& data() const { return data_; }
  RealVector& data() { return data_; }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }
  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols_, cols_); }

  /// A * x
  RealVector apply(std::span<const double> x) const {
    if (x.size() != cols_) {
      throw DimensionError("RealMatrix::apply: expected length " + std::to_string(cols_) +
                           ", got " + std::to_string(x.size()));
    }
    RealVector y(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      double s = 0.0;
      const double* a = data_.data() + r * cols_;
      for (std::size_t c = 0; c < cols_; ++c) s += a[c] * x[c];
      y[r] = s;
    }
    return y;
  }

  /// A^T * y
  RealVector apply_transposed(std::span<const double> y) const {
    if (y.size() != rows_) {
      throw DimensionError("RealMatrix::apply_transposed: expected length " +
                           std::to_string(rows_) + ", got " + std::to_string(y.size()));
    }
    RealVector x(cols_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      const double* a = data_.data() + r * cols_;
      for (std::size_t c = 0; c < cols_; ++c) x[c] += a[c] * y[r];
    }
    return x;
  }

  bool operator==(const RealMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  RealVector data_;
};

// ---------------------------------------------------------------------------
// Probability primitives
// ---------------------------------------------------------------------------

inline RealVector softmax(std::span<const double> logits) {
  if (logits.empty()) throw ConfigError("softmax: empty input");
  require_finite(logits, "softmax");
  const double m = *std::max_element(logits.begin(), logits.end());
  RealVector out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

/// Vector-Jacobian product of softmax: given p = softmax(a) and dL/dp, returns dL/da.
inline RealVector softmax_backward(std::span<const double> probs, std::span<const double> grad_probs) {
  const double inner = dot(probs, grad_probs);
  RealVector out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] * (grad_probs[i] - inner);
  return out;
}

inline double cross_entropy(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) {
    throw ConfigError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                      std::to_string(probs.size()) + " classes");
  }
  return -std::log(std::max(probs[label], kProbFloor));
}

/// d cross_entropy / d probs, exact for the floored expression.
inline RealVector cross_entropy_grad_probs(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) throw ConfigError("cross_entropy: label out of range");
  RealVector g(probs.size(), 0.0);
  if (probs[label] > kProbFloor) g[label] = -1.0 / probs[label];
  return g;
}

/// KL(p || q) = sum_i p_i ln(p_i / q_i), both arguments floored inside the log.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  require_same_size(p, q, "kl_divergence");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    s += p[i] * (std::log(std::max(p[i], kProbFloor)) - std::log(std::max(q[i], kProbFloor)));
  }
  return s;
}

/// Partial derivatives of kl_divergence with respect to p and to q.
inline std::pair<RealVector, RealVector> kl_divergence_grad_probs(std::span<const double> p,
                                                                  std::span<const double> q) {
  require_same_size(p, q, "kl_divergence");
  RealVector gp(p.size(), 0.0), gq(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double lp = std::log(std::max(p[i], kProbFloor));
    const double lq = std::log(std::max(q[i], kProbFloor));
    gp[i] = lp - lq + (p[i] > kProbFloor ? 1.0 : 0.0);
    gq[i] = q[i] > kProbFloor ? -p[i] / q[i] : 0.0;
  }
  return {std::move(gp), std::move(gq)};
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  require_same_size(a, b, "cosine_similarity");
  const double na = norm2(a), nb = norm2(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw NumericalError("cosine_similarity: zero-norm input");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

/// Index of the largest entry; ties resolve to the smallest index.
inline std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw ConfigError("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

template <class F>
RealVector finite_diff_gradient(F&& f, std::span<const double> at, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_gradient: step must be positive");
  RealVector x(at.begin(), at.end());
  RealVector g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(std::as_const(x));
    x[i] = orig - h;
    const double fm = f(std::as_const(x));
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalError("finite_diff_gradient: non-finite evaluation at coordinate " +
                           std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

/// Counter-based generator: draw k of a stream is mix64(seed + (k+1)*golden), so
/// the sequence depends only on (seed, counter). Child streams are keyed by a
/// hash of (seed, label) and never share the parent's counter.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    ++counter_;
    return detail::mix64(seed_ + counter_ * detail::kGolden);
  }

  RandomStream split(std::uint64_t label) const {
    const std::uint64_t key =
        detail::mix64(detail::mix64(seed_ ^ 0x6a09e667f3bcc909ull) + detail::mix64(label + detail::kGolden));
    return RandomStream(key);
  }
  RandomStream split(std::string_view label) const { return split(detail::fnv1a(label)); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Unbiased integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw ConfigError("uniform_index: empty range");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// Standard normal via Box-Muller; consumes two draws, keeps the cosine branch.
  double normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool operator==(const RandomStream&) const = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

inline RealVector uniform_vector(RandomStream& stream, std::size_t dim, double lo, double hi) {
  if (!(lo <= hi)) throw ConfigError("uniform_vector: lo > hi");
  RealVector v(dim);
  for (double& x : v) x = stream.uniform(lo, hi);
  return v;
}

}  // namespace erapt
