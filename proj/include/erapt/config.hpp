#pragma once

// Run configuration file: flat `key = value` lines, '#' comments, unknown keys
// rejected. Reals accept a fraction form such as `1/255`. Every key is listed
// in run_config_keys(); configs/default.conf documents them all.

#include <map>

#include "erapt/model_io.hpp"
#include "erapt/trainer.hpp"

namespace erapt {

struct DataConfig {
  std::string generator = "two_moons";  // two_moons | blobs
  std::size_t per_class = 200;
  std::size_t num_classes = 2;  // blobs only
  std::size_t dim = 2;          // blobs only
  double separation = 4.0;      // blobs only
  double noise_sd = 0.1;
  std::size_t k_shot = 0;  // 0 keeps every example
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  ModelInitSpec model;  // input_dim and num_classes are taken from the data
  TrainConfig train;
};

inline const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = {
      "seed",
      "data.generator", "data.per_class", "data.num_classes", "data.dim", "data.separation", "data.noise_sd",
      "data.k_shot",
      "model.backbone", "model.prompt_dim", "model.feature_dim", "model.tau_logit", "model.init_scale",
      "train.epochs", "train.batch_size", "train.lr_init", "train.momentum", "train.warmup_epochs", "train.mode",
      "train.average_full_population", "train.kl_reversed", "train.shuffle", "train.workers",
      "attack.steps", "attack.step_size", "attack.random_start",
      "evolution.N", "evolution.phi", "evolution.iterations", "evolution.step_size", "evolution.zero_init",
      "ball.epsilon", "ball.input_lo", "ball.input_hi",
      "weights.alpha_init", "weights.beta_init", "weights.temperature",
      "report.attack_steps", "report.step_size",
  };
  return keys;
}

namespace detail {

/// Real or `a/b` fraction.
inline double config_real(const std::string& key, const std::string& value) {
  double v = 0.0;
  if (parse_real(value, v)) return v;
  if (auto slash = value.find('/'); slash != std::string::npos) {
    double num = 0.0, den = 0.0;
    if (parse_real(value.substr(0, slash), num) && parse_real(value.substr(slash + 1), den) && den != 0.0)
      return num / den;
  }
  throw ConfigError(key + ": expected a real number, got '" + value + "'");
}

inline std::size_t config_count(const std::string& key, const std::string& value) {
  std::size_t v = 0;
  if (!parse_index(value, v)) throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  return v;
}

inline bool config_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

/// Rewrites "<what>: message" style errors so that they lead with the config key.
template <class F>
void with_key(const std::string& key, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    throw ConfigError(msg.rfind(key, 0) == 0 ? msg : key + ": " + msg);
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  try {
    kv = detail::parse_key_values(text, "config");
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  const auto& keys = run_config_keys();
  for (const auto& [k, v] : kv)
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw ConfigError(k + ": unknown config key");

  RunConfig c;
  auto has = [&](const char* k) { return kv.count(k) > 0; };
  auto real = [&](const char* k, double& dst) {
    if (has(k)) dst = detail::config_real(k, kv[k]);
  };
  auto count = [&](const char* k, std::size_t& dst) {
    if (has(k)) dst = detail::config_count(k, kv[k]);
  };
  auto flag = [&](const char* k, bool& dst) {
    if (has(k)) dst = detail::config_bool(k, kv[k]);
  };

  if (has("seed")) c.seed = detail::config_count("seed", kv["seed"]);
  if (has("data.generator")) c.data.generator = kv["data.generator"];
  if (c.data.generator != "two_moons" && c.data.generator != "blobs")
    throw ConfigError("data.generator: expected two_moons or blobs, got '" + c.data.generator + "'");
  count("data.per_class", c.data.per_class);
  count("data.num_classes", c.data.num_classes);
  count("data.dim", c.data.dim);
  real("data.separation", c.data.separation);
  real("data.noise_sd", c.data.noise_sd);
  count("data.k_shot", c.data.k_shot);
  if (c.data.per_class < 1) throw ConfigError("data.per_class: must be >= 1");
  if (c.data.generator == "blobs") {
    if (c.data.num_classes < 1) throw ConfigError("data.num_classes: must be >= 1");
    if (c.data.dim < 1) throw ConfigError("data.dim: must be >= 1");
    if (!(c.data.separation > 0.0)) throw ConfigError("data.separation: must be > 0");
    if (c.data.dim + 1 < c.data.num_classes)
      throw ConfigError("data.dim: needs at least num_classes - 1 dimensions");
  }
  if (!(c.data.noise_sd >= 0.0)) throw ConfigError("data.noise_sd: must be >= 0");
  if (c.data.k_shot > c.data.per_class) throw ConfigError("data.k_shot: exceeds data.per_class");

  if (has("model.backbone")) detail::with_key("model.backbone", [&] { c.model.backbone_kind = parse_backbone_kind(kv["model.backbone"]); });
  count("model.prompt_dim", c.model.prompt_dim);
  count("model.feature_dim", c.model.feature_dim);
  real("model.tau_logit", c.model.tau_logit);
  real("model.init_scale", c.model.init_scale);
  if (c.model.prompt_dim < 1) throw ConfigError("model.prompt_dim: must be >= 1");
  if (c.model.feature_dim < 1) throw ConfigError("model.feature_dim: must be >= 1");
  if (!(c.model.tau_logit > 0.0)) throw ConfigError("model.tau_logit: must be > 0");
  if (!(c.model.init_scale > 0.0)) throw ConfigError("model.init_scale: must be > 0");

  TrainConfig& t = c.train;
  count("train.epochs", t.epochs);
  count("train.batch_size", t.batch_size);
  real("train.lr_init", t.lr_init);
  real("train.momentum", t.momentum);
  count("train.warmup_epochs", t.warmup_epochs);
  if (has("train.mode")) detail::with_key("train.mode", [&] { t.mode = parse_train_mode(kv["train.mode"]); });
  flag("train.average_full_population", t.average_full_population);
  flag("train.kl_reversed", t.kl_reversed);
  flag("train.shuffle", t.shuffle);
  count("train.workers", t.workers);

  count("attack.steps", t.attack.steps);
  real("attack.step_size", t.attack.step_size);
  flag("attack.random_start", t.attack.random_start);

  real("ball.epsilon", t.ball.epsilon);
  if (has("ball.input_lo") || has("ball.input_hi")) {
    double lo = 0.0, hi = 0.0;
    if (!has("ball.input_lo") || !has("ball.input_hi"))
      throw ConfigError(std::string(has("ball.input_lo") ? "ball.input_hi" : "ball.input_lo") +
                        ": input_lo and input_hi must be given together");
    real("ball.input_lo", lo);
    real("ball.input_hi", hi);
    t.ball.input_lo = lo;
    t.ball.input_hi = hi;
  }

  // Evolution follows the attack budget unless overridden.
  t.evolution.iterations = t.attack.steps;
  t.evolution.step_size = t.attack.step_size;
  count("evolution.N", t.evolution.population);
  real("evolution.phi", t.evolution.phi);
  count("evolution.iterations", t.evolution.iterations);
  real("evolution.step_size", t.evolution.step_size);
  flag("evolution.zero_init", t.evolution.zero_init);

  real("weights.alpha_init", t.weights.alpha_init);
  real("weights.beta_init", t.weights.beta_init);
  real("weights.temperature", t.weights.temperature);

  t.report_attack.step_size = t.ball.epsilon / 4.0;
  count("report.attack_steps", t.report_attack.steps);
  real("report.step_size", t.report_attack.step_size);

  t.seed = RandomStream(c.seed).split("train").seed();
  c.model.init_seed = RandomStream(c.seed).split("model").seed();

  if (t.ball.input_lo && !(*t.ball.input_lo < *t.ball.input_hi))
    throw ConfigError("ball.input_lo: must be < ball.input_hi");
  validate(t);
  return c;
}

inline RunConfig load_run_config(const std::string& path) { return parse_run_config(read_text_file(path)); }

/// Replaces the global seed and re-derives the per-module seeds from it.
inline void reseed(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.train.seed = RandomStream(seed).split("train").seed();
  c.model.init_seed = RandomStream(seed).split("model").seed();
}

inline LabeledDataset generate_dataset(const RunConfig& c) {
  RandomStream s = RandomStream(c.seed).split("data");
  LabeledDataset ds = c.data.generator == "blobs"
                          ? gen_blobs(c.data.num_classes, c.data.per_class, c.data.dim, c.data.separation,
                                      c.data.noise_sd, s)
                          : gen_two_moons(c.data.per_class, c.data.noise_sd, s);
  return ds;
}

/// Model sized for the dataset, initialised from the config's model seed.
inline PromptedClassifier make_model(const RunConfig& c, const LabeledDataset& ds) {
  ModelInitSpec spec = c.model;
  spec.input_dim = ds.dim();
  spec.num_classes = ds.num_classes;
  return init_model(spec);
}

/// Training subset: the k-shot sample when data.k_shot > 0, else everything.
inline LabeledDataset training_subset(const RunConfig& c, const LabeledDataset& ds) {
  if (c.data.k_shot == 0) return ds;
  RandomStream s = RandomStream(c.seed).split("k-shot");
  return k_shot_sample(ds, c.data.k_shot, s);
}

}  // namespace erapt
