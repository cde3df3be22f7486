#pragma once

// Shared helpers for the test suites: random model/input generators and a
// scratch directory.

#include <filesystem>
#include <random>

#include "erapt/erapt.hpp"

namespace erapt::testing {

/// Hand-rolled generator state for property tests; independent of RandomStream
/// so that tests do not share the code under test.
struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }
  std::size_t range(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); }
  RealVector vec(std::size_t n, double lo, double hi) {
    RealVector v(n);
    for (double& x : v) x = real(lo, hi);
    return v;
  }
};

inline PromptedClassifier random_model(Gen& g, BackboneKind kind, std::size_t input_dim = 0,
                                       std::size_t num_classes = 0) {
  ModelInitSpec spec;
  spec.input_dim = input_dim ? input_dim : g.range(1, 4);
  spec.prompt_dim = g.range(1, 5);
  spec.feature_dim = g.range(2, 8);
  spec.num_classes = num_classes ? num_classes : g.range(2, 4);
  spec.backbone_kind = kind;
  spec.init_seed = g.rng();
  spec.init_scale = g.real(0.3, 1.2);
  spec.tau_logit = g.real(0.2, 1.0);
  PromptedClassifier m = init_model(spec);
  m.prompt = g.vec(m.prompt_dim(), -0.5, 0.5);
  return m;
}

/// Norm-wise relative error max|a-b| / max(|a|, |b|, 1e-3). Central
/// differences at h = 1e-6 carry ~1e-10 absolute roundoff, so gradients far
/// below unit scale are compared against the floor instead of themselves.
inline constexpr double kRelErrFloor = 1e-3;

inline double rel_err(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max({den, std::abs(a[i]), std::abs(b[i])});
  }
  return num / std::max(den, kRelErrFloor);
}

struct ScratchDir {
  std::filesystem::path path;
  explicit ScratchDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("erapt-" + tag + "-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace erapt::testing
