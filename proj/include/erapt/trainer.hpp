#pragma once

// Adversarial prompt tuning: per-example population evolution (or a single
// PGD perturbation for the baseline arm), combined clean/robust loss, SGD with
// momentum under warmup + cosine learning rate, and per-epoch loss weighting.

#include <chrono>
#include <functional>
#include <optional>

#include <nlohmann/json.hpp>

#include "erapt/evaluation.hpp"
#include "erapt/losses.hpp"

namespace erapt {

enum class TrainMode { er_apt, single_pgd_baseline };

inline std::string_view to_string(TrainMode m) {
  return m == TrainMode::er_apt ? "er_apt" : "single_pgd_baseline";
}

inline TrainMode parse_train_mode(std::string_view s) {
  if (s == "er_apt") return TrainMode::er_apt;
  if (s == "single_pgd_baseline") return TrainMode::single_pgd_baseline;
  throw ConfigError("train.mode: unknown mode '" + std::string(s) + "'");
}

struct WeightingConfig {
  double alpha_init = 1.0;
  double beta_init = 1.5;
  double temperature = 1.0;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr_init = 0.0035;
  double momentum = 0.9;
  std::size_t warmup_epochs = 1;
  AttackConfig attack;
  EvolutionConfig evolution;
  PerturbationBall ball;
  WeightingConfig weights;
  TrainMode mode = TrainMode::er_apt;
  std::uint64_t seed = 0;
  bool average_full_population = false;
  bool kl_reversed = false;
  bool shuffle = true;
  std::size_t workers = 1;
  /// PGD used for the per-epoch robust accuracy column.
  AttackConfig report_attack{20, 1.0 / 255.0 / 4.0, false};
};

inline void validate(const TrainConfig& c) {
  if (c.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(c.lr_init > 0.0)) throw ConfigError("train.lr_init must be > 0");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (!(c.ball.epsilon > 0.0)) throw ConfigError("ball.epsilon must be > 0");
  validate(c.ball);
  if (c.attack.steps < 1) throw ConfigError("attack.steps must be >= 1");
  if (!(c.attack.step_size > 0.0)) throw ConfigError("attack.step_size must be > 0");
  validate(c.evolution);
  if (!(c.weights.alpha_init > 0.0)) throw ConfigError("weights.alpha_init must be > 0");
  if (!(c.weights.beta_init > 0.0)) throw ConfigError("weights.beta_init must be > 0");
  if (!(c.weights.temperature > 0.0)) throw ConfigError("weights.temperature must be > 0");
  if (c.workers < 1) throw ConfigError("train.workers must be >= 1");
}

struct OptimizerState {
  RealVector velocity;
  std::size_t step_count = 0;
};

/// Learning rate for 0-based (epoch, batch). Warmup ramps linearly from
/// lr_init/100 towards lr_init; the remaining steps follow half a cosine from
/// lr_init (first post-warmup step) down to 0 (last step).
inline double cosine_lr(std::size_t epoch, std::size_t batch, std::size_t batches_per_epoch, const TrainConfig& cfg) {
  const std::size_t step = epoch * batches_per_epoch + batch;
  const std::size_t warmup = std::min(cfg.warmup_epochs, cfg.epochs) * batches_per_epoch;
  const std::size_t total = cfg.epochs * batches_per_epoch;
  const double lo = cfg.lr_init / 100.0;
  if (step < warmup) return lo + (cfg.lr_init - lo) * static_cast<double>(step) / static_cast<double>(warmup);
  const std::size_t post = total - warmup;
  const double progress = post > 1 ? static_cast<double>(step - warmup) / static_cast<double>(post - 1) : 0.0;
  return cfg.lr_init * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

/// v <- momentum * v + grad;  prompt <- prompt - lr * v
inline void sgd_step(RealVector& prompt, std::span<const double> grad, OptimizerState& opt, double lr,
                     double momentum) {
  require_same_size(prompt, grad, "sgd_step");
  require_finite(grad, "sgd_step: gradient");
  if (opt.velocity.empty()) opt.velocity.assign(prompt.size(), 0.0);
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    opt.velocity[i] = momentum * opt.velocity[i] + grad[i];
    prompt[i] -= lr * opt.velocity[i];
  }
  ++opt.step_count;
}

/// Perturbation set an example contributes to the robust loss.
inline std::vector<RealVector> adversarial_set(const PromptedClassifier& m, std::span<const double> x,
                                               std::size_t y, const TrainConfig& cfg, const RandomStream& stream,
                                               const TraceSink* trace = nullptr) {
  if (cfg.mode == TrainMode::single_pgd_baseline) {
    RandomStream s = stream.split("pgd");
    return {pgd_attack(m, x, y, cfg.ball, cfg.attack, s)};
  }
  const Population pop = run_evolution(m, x, y, cfg.ball, cfg.evolution, stream.split("evolution"), trace);
  if (cfg.average_full_population) return pop.deltas;
  return final_selected(pop, m, x, y).deltas;
}

struct BatchResult {
  RealVector grad_prompt;  // mean over the batch
  double ce_sum = 0.0;
  double kl_sum = 0.0;
  std::size_t count = 0;
  double total_mean = 0.0;
};

/// Example i of the dataset uses stream.split(i).
inline BatchResult train_batch(const PromptedClassifier& m, const LabeledDataset& ds,
                               std::span<const std::size_t> batch, const LossWeights& w, const TrainConfig& cfg,
                               const RandomStream& stream, const TraceSink* trace = nullptr) {
  if (batch.empty()) throw ConfigError("train_batch: empty batch");
  const KlOrder order = cfg.kl_reversed ? KlOrder::adv_clean : KlOrder::clean_adv;
  std::vector<CombinedLoss> per(batch.size());
  // Tracing is only safe single-threaded.
  const std::size_t workers = trace && *trace ? 1 : cfg.workers;
  parallel_for(batch.size(), workers, [&](std::size_t k) {
    const std::size_t i = batch[k];
    const auto& x = ds.inputs[i];
    const RandomStream s = stream.split(i);
    const auto deltas = adversarial_set(m, x, ds.labels[i], cfg, s, trace);
    per[k] = combined_loss(m, x, ds.labels[i], deltas, w, order);
  });

  BatchResult r;
  r.count = batch.size();
  std::vector<RealVector> grads;
  std::vector<double> totals;
  for (auto& c : per) {
    r.ce_sum += c.ce;
    r.kl_sum += c.kl_mean;
    totals.push_back(c.total);
    grads.push_back(std::move(c.grad_prompt));
  }
  r.grad_prompt = mean_of(std::span<const RealVector>(grads));
  r.total_mean = mean_of(std::span<const double>(totals));
  return r;
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double natural_acc = 0.0;
  double robust_acc = 0.0;
  double mean_ce = 0.0;
  double mean_kl = 0.0;
  double alpha = 0.0;  // weights used during this epoch
  double beta = 0.0;
  double lr = 0.0;     // learning rate of the epoch's last step
};

struct WeightLogRow {
  std::size_t epoch = 0;  // epoch trained with these weights
  std::optional<double> w_acc;
  std::optional<double> w_rob;
  double alpha = 0.0;
  double beta = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<WeightLogRow> weight_log;
  std::uint64_t frozen_checksum = 0;
  double wall_seconds = 0.0;
};

inline std::string to_csv(const TrainReport& r) {
  std::string s = "epoch,natural_acc,robust_acc,mean_ce,mean_kl,alpha,beta,lr\n";
  for (const auto& e : r.epochs) {
    s += std::to_string(e.epoch) + "," + format_real(e.natural_acc) + "," + format_real(e.robust_acc) + "," +
         format_real(e.mean_ce) + "," + format_real(e.mean_kl) + "," + format_real(e.alpha) + "," +
         format_real(e.beta) + "," + format_real(e.lr) + "\n";
  }
  return s;
}

/// epoch,w_acc,w_rob,alpha,beta; speeds are blank for warmup epochs.
inline std::string weight_log_csv(const TrainReport& r) {
  std::string s = "epoch,w_acc,w_rob,alpha,beta\n";
  for (const auto& w : r.weight_log) {
    s += std::to_string(w.epoch) + "," + (w.w_acc ? format_real(*w.w_acc) : "") + "," +
         (w.w_rob ? format_real(*w.w_rob) : "") + "," + format_real(w.alpha) + "," + format_real(w.beta) + "\n";
  }
  return s;
}

using EventSink = std::function<void(const nlohmann::json&)>;

struct TrainHooks {
  TraceSink trace;
  EventSink events;
  /// Skip the per-epoch accuracy evaluation (the columns are left at 0).
  bool skip_epoch_eval = false;
  /// Called after every prompt update with the new prompt.
  std::function<void(const RealVector&)> on_step;
};

struct TrainResult {
  PromptedClassifier model;
  TrainReport report;
};

inline TrainResult run_training(const TrainConfig& cfg, PromptedClassifier model, const LabeledDataset& ds,
                                const TrainHooks& hooks = {}) {
  validate(cfg);
  validate(model);
  validate(ds);
  if (ds.empty()) throw ConfigError("run_training: empty dataset");
  if (ds.dim() != model.input_dim())
    throw DimensionError("run_training: dataset dim " + std::to_string(ds.dim()) + " != model input_dim " +
                         std::to_string(model.input_dim()));
  if (ds.num_classes > model.num_classes())
    throw DimensionError("run_training: dataset has more classes than the model");

  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t checksum = frozen_checksum(model);
  const RandomStream root(cfg.seed);
  const TraceSink* trace = hooks.trace ? &hooks.trace : nullptr;
  auto emit = [&](nlohmann::json j) {
    if (hooks.events) hooks.events(j);
  };

  OptimizerState opt;
  opt.velocity.assign(model.prompt_dim(), 0.0);
  LossWeightState weights = make_weight_state(cfg.weights.alpha_init, cfg.weights.beta_init, cfg.weights.temperature);
  const std::size_t bpe = (ds.size() + cfg.batch_size - 1) / cfg.batch_size;

  TrainReport report;
  std::vector<std::size_t> order(ds.size());
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) {
      RandomStream sh = root.split("shuffle").split(e);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[sh.uniform_index(i)]);
    }
    const LossWeights w = weights.weights();
    report.weight_log.push_back({e + 1, weights.last_w_acc, weights.last_w_rob, w.alpha, w.beta});
    emit({{"event", "epoch_start"}, {"epoch", e + 1}, {"alpha", w.alpha}, {"beta", w.beta}});

    double lr = 0.0;
    for (std::size_t b = 0; b < bpe; ++b) {
      const std::size_t lo = b * cfg.batch_size, hi = std::min(ds.size(), lo + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + lo, hi - lo);
      lr = cosine_lr(e, b, bpe, cfg);
      const RandomStream bs = root.split("train").split(e).split(b);
      const BatchResult br = train_batch(model, ds, batch, w, cfg, bs, trace);
      if (!std::isfinite(br.total_mean) || !all_finite(br.grad_prompt))
        throw NumericalError("run_training: non-finite loss or gradient at epoch " + std::to_string(e + 1) +
                             ", batch " + std::to_string(b + 1) + " (loss " + format_real(br.total_mean) + ")");
      sgd_step(model.prompt, br.grad_prompt, opt, lr, cfg.momentum);
      accumulate(weights, br.ce_sum, br.kl_sum, br.count);
      emit({{"event", "step"}, {"epoch", e + 1}, {"batch", b + 1}, {"lr", lr}, {"loss", br.total_mean}});
      if (hooks.on_step) hooks.on_step(model.prompt);
    }

    EpochRecord rec;
    rec.epoch = e + 1;
    rec.mean_ce = epoch_mean_ce(weights);
    rec.mean_kl = epoch_mean_kl(weights);
    rec.alpha = w.alpha;
    rec.beta = w.beta;
    rec.lr = lr;
    if (!hooks.skip_epoch_eval) {
      const RobustnessReport rr = evaluate_robustness(model, ds, cfg.ball, cfg.report_attack,
                                                      root.split("report").split(e), cfg.workers);
      rec.natural_acc = rr.natural_acc;
      rec.robust_acc = rr.robust_acc;
    }
    report.epochs.push_back(rec);
    emit({{"event", "epoch_end"},     {"epoch", e + 1},          {"mean_ce", rec.mean_ce},
          {"mean_kl", rec.mean_kl},   {"natural_acc", rec.natural_acc}, {"robust_acc", rec.robust_acc}});

    weights = epoch_weighting(std::move(weights));
    nlohmann::json upd = {{"event", "weight_update"}, {"epoch", weights.epoch_index},
                          {"alpha", weights.alpha},   {"beta", weights.beta}};
    if (weights.last_w_acc) upd["w_acc"] = *weights.last_w_acc;
    if (weights.last_w_rob) upd["w_rob"] = *weights.last_w_rob;
    emit(upd);
  }

  if (frozen_checksum(model) != checksum) throw NumericalError("run_training: frozen weights changed");
  report.frozen_checksum = checksum;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), std::move(report)};
}

}  // namespace erapt
