#pragma once

// Natural/robust accuracy and an empirical check of the region robustness
// bound  loss(delta) <= gamma + L * eta  over the L-infinity ball.

#include <nlohmann/json.hpp>

#include "erapt/dataio.hpp"
#include "erapt/evolution.hpp"
#include "erapt/parallel.hpp"

namespace erapt {

inline double accuracy(const PromptedClassifier& m, const LabeledDataset& ds) {
  if (ds.empty()) throw ConfigError("accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) correct += predict(m, ds.inputs[i]) == ds.labels[i];
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

struct RobustnessReport {
  double natural_acc = 0.0;
  double robust_acc = 0.0;
  std::size_t attack_steps = 0;
  double epsilon = 0.0;
  std::vector<double> per_class_acc;         // natural, by class
  std::vector<double> per_class_robust_acc;  // robust, by class
  std::size_t examples = 0;
};

/// An example counts as robust only if it is classified correctly both at
/// delta = 0 and at the PGD perturbation, so robust_acc <= natural_acc always.
/// Example i attacks with stream.split(i).
inline RobustnessReport evaluate_robustness(const PromptedClassifier& m, const LabeledDataset& ds,
                                            const PerturbationBall& ball, const AttackConfig& cfg,
                                            const RandomStream& stream, std::size_t workers = 1) {
  if (ds.empty()) throw ConfigError("evaluate_robustness: empty dataset");
  validate(ball);
  std::vector<char> nat(ds.size()), rob(ds.size());
  parallel_for(ds.size(), workers, [&](std::size_t i) {
    const auto& x = ds.inputs[i];
    const std::size_t y = ds.labels[i];
    nat[i] = predict(m, x) == y;
    if (!nat[i]) return;
    RandomStream s = stream.split(i);
    const RealVector delta = pgd_attack(m, x, y, ball, cfg, s);
    rob[i] = predict(m, add(x, delta)) == y;
  });

  RobustnessReport r;
  r.attack_steps = cfg.steps;
  r.epsilon = ball.epsilon;
  r.examples = ds.size();
  std::vector<std::size_t> count(ds.num_classes, 0), nat_c(ds.num_classes, 0), rob_c(ds.num_classes, 0);
  std::size_t nat_total = 0, rob_total = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ++count[ds.labels[i]];
    nat_c[ds.labels[i]] += nat[i];
    rob_c[ds.labels[i]] += rob[i];
    nat_total += nat[i];
    rob_total += rob[i];
  }
  const double n = static_cast<double>(ds.size());
  r.natural_acc = static_cast<double>(nat_total) / n;
  r.robust_acc = static_cast<double>(rob_total) / n;
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    const double k = static_cast<double>(std::max<std::size_t>(count[c], 1));
    r.per_class_acc.push_back(static_cast<double>(nat_c[c]) / k);
    r.per_class_robust_acc.push_back(static_cast<double>(rob_c[c]) / k);
  }
  return r;
}

inline double robust_accuracy(const PromptedClassifier& m, const LabeledDataset& ds, const PerturbationBall& ball,
                              const AttackConfig& cfg, const RandomStream& stream, std::size_t workers = 1) {
  return evaluate_robustness(m, ds, ball, cfg, stream, workers).robust_acc;
}

inline nlohmann::json to_json(const RobustnessReport& r) {
  return {{"natural_acc", r.natural_acc},       {"robust_acc", r.robust_acc},
          {"attack_steps", r.attack_steps},     {"epsilon", r.epsilon},
          {"examples", r.examples},             {"per_class_acc", r.per_class_acc},
          {"per_class_robust_acc", r.per_class_robust_acc}};
}

/// CSV summary: header line plus one row.
inline std::string to_csv_row(const RobustnessReport& r, const std::string& dataset) {
  return "dataset,examples,epsilon,attack_steps,natural_acc,robust_acc\n" + dataset + "," +
         std::to_string(r.examples) + "," + format_real(r.epsilon) + "," + std::to_string(r.attack_steps) + "," +
         format_real(r.natural_acc) + "," + format_real(r.robust_acc) + "\n";
}

// ---------------------------------------------------------------------------
// Region bound check
// ---------------------------------------------------------------------------

inline constexpr double kDistanceFloor = 1e-9;
inline constexpr double kBoundSlack = 1e-9;

struct TheoremCheckReport {
  double gamma = 0.0;
  double L_hat = 0.0;
  double eta_cover = 0.0;
  std::size_t samples = 0;
  std::size_t calibration_samples = 0;
  std::size_t heldout_samples = 0;
  std::size_t population_size = 0;
  double violation_rate = 0.0;
  double max_excess = 0.0;
  bool degenerate_population = false;
};

/// gamma is the population mean loss, eta the largest distance from any
/// sampled delta to its nearest member, and L is estimated on the first half
/// of the samples (sample-sample and sample-member pairs); the bound is then
/// checked on the second half. All distances are L-infinity.
inline TheoremCheckReport verify_theorem(const PromptedClassifier& m, std::span<const double> x, std::size_t y,
                                         const Population& population, const PerturbationBall& ball,
                                         std::size_t n_samples, RandomStream& stream) {
  if (n_samples < 100) throw ConfigError("verify_theorem: samples must be >= 100");
  if (population.size() == 0) throw ConfigError("verify_theorem: empty population");
  validate(ball);

  auto loss_at = [&](const RealVector& d) { return loss_ce(m, add(x, d), y); };

  TheoremCheckReport r;
  r.samples = n_samples;
  r.population_size = population.size();

  std::vector<double> member_loss;
  for (const auto& d : population.deltas) member_loss.push_back(loss_at(d));
  double sum = 0.0;
  for (double v : member_loss) sum += v;
  r.gamma = sum / static_cast<double>(member_loss.size());
  r.degenerate_population = std::all_of(population.deltas.begin(), population.deltas.end(),
                                        [&](const RealVector& d) { return d == population.deltas.front(); });

  std::vector<RealVector> samples;
  std::vector<double> sample_loss;
  for (std::size_t s = 0; s < n_samples; ++s) {
    samples.push_back(project(uniform_vector(stream, x.size(), -ball.epsilon, ball.epsilon), ball, x));
    sample_loss.push_back(loss_at(samples.back()));
  }

  for (const auto& d : samples) {
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& p : population.deltas) nearest = std::min(nearest, dist_inf(d, p));
    r.eta_cover = std::max(r.eta_cover, nearest);
  }

  const std::size_t calib = n_samples / 2;
  r.calibration_samples = calib;
  r.heldout_samples = n_samples - calib;
  auto slope = [](double la, double lb, double dist) { return std::abs(la - lb) / std::max(dist, kDistanceFloor); };
  for (std::size_t a = 0; a < calib; ++a) {
    for (std::size_t b = a + 1; b < calib; ++b)
      r.L_hat = std::max(r.L_hat, slope(sample_loss[a], sample_loss[b], dist_inf(samples[a], samples[b])));
    for (std::size_t j = 0; j < population.size(); ++j)
      r.L_hat = std::max(r.L_hat, slope(sample_loss[a], member_loss[j], dist_inf(samples[a], population.deltas[j])));
  }

  const double bound = r.gamma + r.L_hat * r.eta_cover;
  std::size_t violations = 0;
  r.max_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t s = calib; s < n_samples; ++s) {
    const double excess = sample_loss[s] - bound;
    r.max_excess = std::max(r.max_excess, excess);
    violations += excess > kBoundSlack;
  }
  r.violation_rate = static_cast<double>(violations) / static_cast<double>(r.heldout_samples);
  return r;
}

inline nlohmann::json to_json(const TheoremCheckReport& r) {
  return {{"gamma", r.gamma},
          {"L_hat", r.L_hat},
          {"eta_cover", r.eta_cover},
          {"samples", r.samples},
          {"calibration_samples", r.calibration_samples},
          {"heldout_samples", r.heldout_samples},
          {"population_size", r.population_size},
          {"violation_rate", r.violation_rate},
          {"max_excess", r.max_excess},
          {"degenerate_population", r.degenerate_population}};
}

}  // namespace erapt
