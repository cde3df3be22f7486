#pragma once

// Clean/robust training objective and the per-epoch dynamic loss weighting.
//
// Epoch convention: `epoch_index` is the 1-based epoch currently being
// trained. epoch_weighting() closes that epoch and sets the weights for the
// next one. Epochs 1 and 2 always train with (alpha_init, beta_init); epoch T
// >= 3 uses the ratio of the mean losses of epochs T-1 and T-2, the two most
// recent complete epochs.

#include <optional>

#include "erapt/model.hpp"

namespace erapt {

inline constexpr double kRatioFloor = 1e-12;

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.5;
};

struct LossWeightState {
  double alpha = 1.0;
  double beta = 1.5;
  double alpha_init = 1.0;
  double beta_init = 1.5;
  double temperature = 1.0;

  double epoch_ce_sum = 0.0;
  double epoch_kl_sum = 0.0;
  std::size_t epoch_count = 0;

  std::optional<double> prev_ce;
  std::optional<double> prev_kl;
  std::size_t epoch_index = 1;

  // Speeds from the most recent dynamic update, for logging.
  std::optional<double> last_w_acc;
  std::optional<double> last_w_rob;

  LossWeights weights() const { return {alpha, beta}; }
};

inline LossWeightState make_weight_state(double alpha_init = 1.0, double beta_init = 1.5,
                                         double temperature = 1.0) {
  if (!(alpha_init > 0.0) || !(beta_init > 0.0)) throw ConfigError("weights.alpha_init/beta_init must be > 0");
  if (!(temperature > 0.0)) throw ConfigError("weights.temperature must be > 0");
  LossWeightState s;
  s.alpha = s.alpha_init = alpha_init;
  s.beta = s.beta_init = beta_init;
  s.temperature = temperature;
  return s;
}

struct CombinedLoss {
  double total = 0.0;
  double ce = 0.0;
  double kl_mean = 0.0;
  RealVector grad_prompt;
};

/// alpha * CE(f(x), y) + beta * mean_i KL(f(x) || f(x + delta_i)), with the
/// prompt gradient of the total.
inline CombinedLoss combined_loss(const PromptedClassifier& m, std::span<const double> x, std::size_t y,
                                  std::span<const RealVector> adv_deltas, const LossWeights& w,
                                  KlOrder order = KlOrder::clean_adv) {
  if (adv_deltas.empty()) throw ConfigError("combined_loss: empty perturbation set");
  const LossAndGrads ce = ce_with_grads(m, x, y);

  std::vector<double> kls;
  std::vector<RealVector> kl_grads;
  kls.reserve(adv_deltas.size());
  kl_grads.reserve(adv_deltas.size());
  for (const RealVector& d : adv_deltas) {
    LossAndGrads kl = kl_with_grads(m, x, add(x, d), order);
    kls.push_back(kl.loss);
    kl_grads.push_back(std::move(kl.grad_prompt));
  }

  CombinedLoss out;
  out.ce = ce.loss;
  out.kl_mean = mean_of(std::span<const double>(kls));
  out.total = w.alpha * out.ce + w.beta * out.kl_mean;
  out.grad_prompt = scaled(ce.grad_prompt, w.alpha);
  axpy(w.beta, mean_of(std::span<const RealVector>(kl_grads)), out.grad_prompt);
  return out;
}

/// Folds per-example loss components into the current epoch's accumulators.
inline void accumulate(LossWeightState& s, double ce_sum, double kl_sum, std::size_t count) {
  s.epoch_ce_sum += ce_sum;
  s.epoch_kl_sum += kl_sum;
  s.epoch_count += count;
}

struct LearningSpeeds {
  double w_acc = 1.0;
  double w_rob = 1.0;
};

inline double epoch_mean_ce(const LossWeightState& s) {
  if (s.epoch_count == 0) throw ConfigError("loss weighting: epoch has no accumulated examples");
  return s.epoch_ce_sum / static_cast<double>(s.epoch_count);
}

inline double epoch_mean_kl(const LossWeightState& s) {
  if (s.epoch_count == 0) throw ConfigError("loss weighting: epoch has no accumulated examples");
  return s.epoch_kl_sum / static_cast<double>(s.epoch_count);
}

/// Ratio of the current epoch mean to the previous epoch mean for each task.
inline LearningSpeeds learning_speeds(const LossWeightState& s) {
  if (!s.prev_ce || !s.prev_kl) throw ConfigError("learning_speeds: no previous epoch recorded");
  return {epoch_mean_ce(s) / std::max(*s.prev_ce, kRatioFloor),
          epoch_mean_kl(s) / std::max(*s.prev_kl, kRatioFloor)};
}

inline LossWeightState update_weights(LossWeightState s, double w_acc, double w_rob) {
  if (!(s.temperature > 0.0)) throw ConfigError("update_weights: temperature must be > 0");
  if (!std::isfinite(w_acc) || !std::isfinite(w_rob)) throw NumericalError("update_weights: non-finite speeds");
  const double a = w_acc / s.temperature;
  const double b = w_rob / s.temperature;
  const double m = std::max(a, b);
  const double ea = std::exp(a - m), eb = std::exp(b - m);
  const double denom = ea + eb;
  // Both masses are strictly positive in exact arithmetic; keep them so when
  // one speed dwarfs the other and the exponential underflows.
  constexpr double tiny = std::numeric_limits<double>::min();
  s.alpha = s.alpha_init * 2.0 * std::max(ea / denom, tiny);
  s.beta = s.beta_init * 2.0 * std::max(eb / denom, tiny);
  return s;
}

inline LossWeightState epoch_weighting(LossWeightState s) {
  const double mean_ce = epoch_mean_ce(s);
  const double mean_kl = epoch_mean_kl(s);
  const std::size_t next_epoch = s.epoch_index + 1;
  if (next_epoch <= 2) {
    s.alpha = s.alpha_init;
    s.beta = s.beta_init;
    s.last_w_acc.reset();
    s.last_w_rob.reset();
  } else {
    const LearningSpeeds v = learning_speeds(s);
    s = update_weights(std::move(s), v.w_acc, v.w_rob);
    s.last_w_acc = v.w_acc;
    s.last_w_rob = v.w_rob;
  }
  s.prev_ce = mean_ce;
  s.prev_kl = mean_kl;
  s.epoch_ce_sum = s.epoch_kl_sum = 0.0;
  s.epoch_count = 0;
  s.epoch_index = next_epoch;
  return s;
}

}  // namespace erapt
