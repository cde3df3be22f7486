#pragma once

// L-infinity projected sign-gradient (PGD) attack.

#include <optional>

#include "erapt/model.hpp"

namespace erapt {

struct PerturbationBall {
  double epsilon = 1.0 / 255.0;
  std::optional<double> input_lo;
  std::optional<double> input_hi;
};

/// epsilon = 0 is accepted here (it collapses the ball to a point, which
/// evaluation uses); training configs require epsilon > 0.
inline void validate(const PerturbationBall& ball) {
  if (!(ball.epsilon >= 0.0) || !std::isfinite(ball.epsilon))
    throw ConfigError("ball.epsilon must be a finite value >= 0");
  if (ball.input_lo.has_value() != ball.input_hi.has_value())
    throw ConfigError("ball.input_lo and ball.input_hi must be given together");
  if (ball.input_lo && !(*ball.input_lo < *ball.input_hi))
    throw ConfigError("ball.input_lo must be < ball.input_hi");
}

struct AttackConfig {
  std::size_t steps = 2;
  double step_size = 1.0 / 255.0;
  bool random_start = false;
};

inline RealVector project(std::span<const double> delta, const PerturbationBall& ball) {
  const double e = ball.epsilon;
  RealVector out(delta.begin(), delta.end());
  for (double& d : out) d = std::clamp(d, -e, e);
  return out;
}

/// Projection onto the eps-ball intersected with {delta : x + delta in [lo, hi]}.
inline RealVector project(std::span<const double> delta, const PerturbationBall& ball,
                          std::span<const double> x) {
  if (!ball.input_lo) return project(delta, ball);
  require_same_size(delta, x, "project");
  const double e = ball.epsilon;
  RealVector out(delta.size());
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double lower = std::max(-e, *ball.input_lo - x[i]);
    const double upper = std::min(e, *ball.input_hi - x[i]);
    // Empty intersection only when x itself lies more than eps outside the box.
    out[i] = lower <= upper ? std::clamp(delta[i], lower, upper) : std::clamp(lower, -e, e);
  }
  return out;
}

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline RealVector pgd_step(const PromptedClassifier& m, std::span<const double> x, std::size_t y,
                           std::span<const double> delta, const PerturbationBall& ball,
                           double step_size) {
  require_same_size(delta, x, "pgd_step");
  const RealVector g = grad_input_ce(m, add(x, delta), y);
  require_finite(g, "pgd_step: input gradient");
  RealVector moved(delta.begin(), delta.end());
  for (std::size_t i = 0; i < moved.size(); ++i) moved[i] += step_size * sign_of(g[i]);
  return project(moved, ball, x);
}

inline RealVector pgd_attack(const PromptedClassifier& m, std::span<const double> x, std::size_t y,
                             const PerturbationBall& ball, const AttackConfig& cfg, RandomStream& stream) {
  RealVector delta = cfg.random_start
                         ? project(uniform_vector(stream, x.size(), -ball.epsilon, ball.epsilon), ball, x)
                         : RealVector(x.size(), 0.0);
  for (std::size_t s = 0; s < cfg.steps; ++s) delta = pgd_step(m, x, y, delta, ball, cfg.step_size);
  return delta;
}

}  // namespace erapt
