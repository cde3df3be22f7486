#pragma once

// Command-line workflows: gen-data, train, eval, compare, verify-theorem.
//
// Exit codes: 0 success, 1 validation, 2 runtime/numerical, 3 I/O.

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "erapt/config.hpp"

namespace erapt::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2, kIo = 3 };

// ---------------------------------------------------------------------------
// Arm comparison
// ---------------------------------------------------------------------------

struct ArmRun {
  TrainMode mode = TrainMode::er_apt;
  std::uint64_t seed = 0;
  double natural_acc = 0.0;
  double robust_acc = 0.0;
};

struct ArmSummary {
  TrainMode mode = TrainMode::er_apt;
  std::size_t seeds = 0;
  double natural_mean = 0.0, natural_sd = 0.0;
  double robust_mean = 0.0, robust_sd = 0.0;
};

struct Comparison {
  std::vector<ArmRun> runs;  // seed-major, arm order as given
  std::vector<ArmSummary> arms;
};

/// Mean and sample standard deviation (0 for a single value).
inline std::pair<double, double> mean_sd(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

/// Trains each arm once per seed from the same seed-derived model and streams
/// and scores it with the report attack on `test`.
inline Comparison run_comparison(RunConfig cfg, const LabeledDataset& train, const LabeledDataset& test,
                                 const std::vector<std::uint64_t>& seeds, const std::vector<TrainMode>& arms) {
  if (seeds.empty()) throw ConfigError("compare: --seeds must list at least one seed");
  Comparison out;
  for (std::uint64_t seed : seeds) {
    reseed(cfg, seed);
    const LabeledDataset subset = training_subset(cfg, train);
    const PromptedClassifier init = make_model(cfg, subset);
    for (TrainMode mode : arms) {
      TrainConfig tc = cfg.train;
      tc.mode = mode;
      TrainHooks hooks;
      hooks.skip_epoch_eval = true;
      const TrainResult res = run_training(tc, init, subset, hooks);
      const RobustnessReport rr = evaluate_robustness(res.model, test, tc.ball, tc.report_attack,
                                                      RandomStream(tc.seed).split("compare-eval"), tc.workers);
      out.runs.push_back({mode, seed, rr.natural_acc, rr.robust_acc});
    }
  }
  for (std::size_t a = 0; a < arms.size(); ++a) {
    std::vector<double> nat, rob;
    for (std::size_t i = a; i < out.runs.size(); i += arms.size()) {
      nat.push_back(out.runs[i].natural_acc);
      rob.push_back(out.runs[i].robust_acc);
    }
    ArmSummary s;
    s.mode = arms[a];
    s.seeds = nat.size();
    std::tie(s.natural_mean, s.natural_sd) = mean_sd(nat);
    std::tie(s.robust_mean, s.robust_sd) = mean_sd(rob);
    out.arms.push_back(s);
  }
  return out;
}

inline std::string summary_csv(const Comparison& c) {
  std::string s = "arm,seeds,natural_mean,natural_sd,robust_mean,robust_sd\n";
  for (const auto& a : c.arms)
    s += std::string(to_string(a.mode)) + "," + std::to_string(a.seeds) + "," + format_real(a.natural_mean) + "," +
         format_real(a.natural_sd) + "," + format_real(a.robust_mean) + "," + format_real(a.robust_sd) + "\n";
  return s;
}

inline std::string runs_csv(const Comparison& c) {
  std::string s = "arm,seed,natural_acc,robust_acc\n";
  for (const auto& r : c.runs)
    s += std::string(to_string(r.mode)) + "," + std::to_string(r.seed) + "," + format_real(r.natural_acc) + "," +
         format_real(r.robust_acc) + "\n";
  return s;
}

inline std::string summary_text(const Comparison& c) {
  std::ostringstream os;
  os << std::left << std::setw(22) << "arm" << std::setw(7) << "seeds" << std::setw(22) << "natural acc (%)"
     << "robust acc (%)\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& a : c.arms) {
    std::ostringstream nat, rob;
    nat << std::fixed << std::setprecision(2) << 100 * a.natural_mean << " +- " << 100 * a.natural_sd;
    rob << std::fixed << std::setprecision(2) << 100 * a.robust_mean << " +- " << 100 * a.robust_sd;
    os << std::setw(22) << to_string(a.mode) << std::setw(7) << a.seeds << std::setw(22) << nat.str() << rob.str()
       << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

inline std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  for (const auto& tok : detail::split_fields(s)) {
    std::size_t v = 0;
    if (!detail::parse_index(tok, v)) throw ConfigError("--seeds: invalid seed '" + tok + "'");
    seeds.push_back(v);
  }
  return seeds;
}

inline double parse_real_flag(const std::string& flag, const std::string& value) {
  return detail::config_real(flag, value);
}

inline int cmd_gen_data(const std::string& config_path, const std::string& out_path,
                        std::optional<std::uint64_t> seed, Streams io) {
  RunConfig cfg = load_run_config(config_path);
  if (seed) reseed(cfg, *seed);
  const LabeledDataset ds = generate_dataset(cfg);
  save_csv(ds, out_path);
  io.out << nlohmann::json{{"path", out_path},
                           {"examples", ds.size()},
                           {"classes", ds.num_classes},
                           {"dim", ds.dim()},
                           {"generator", cfg.data.generator}}
                .dump()
         << "\n";
  return kOk;
}

inline int cmd_train(const std::string& config_path, const std::string& data_path, const std::string& out_dir,
                     std::optional<std::uint64_t> seed, std::optional<std::size_t> workers, bool trace, Streams io) {
  RunConfig cfg = load_run_config(config_path);
  if (seed) reseed(cfg, *seed);
  if (workers) {
    if (*workers < 1) throw ConfigError("--workers must be >= 1");
    cfg.train.workers = *workers;
  }
  const LabeledDataset full = load_csv(data_path);
  const LabeledDataset ds = training_subset(cfg, full);
  const PromptedClassifier model = make_model(cfg, ds);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());
  const std::filesystem::path dir(out_dir);

  std::string events, trace_lines;
  TrainHooks hooks;
  hooks.events = [&](const nlohmann::json& j) { events += j.dump() + "\n"; };
  if (trace) {
    hooks.trace = [&](const TraceRecord& r) {
      std::vector<std::string> blocks;
      for (Block b : r.next_blocks) blocks.emplace_back(to_string(b));
      trace_lines += nlohmann::json{{"iteration", r.iteration},
                                    {"fitness", r.fitness},
                                    {"selected", r.selected},
                                    {"next_blocks", blocks}}
                         .dump() +
                     "\n";
    };
  }
  const TrainResult res = run_training(cfg.train, model, ds, hooks);
  events += nlohmann::json{{"event", "done"}, {"wall_seconds", res.report.wall_seconds}}.dump() + "\n";

  save_model(res.model, (dir / "model.txt").string());
  write_text_file((dir / "report.csv").string(), to_csv(res.report));
  write_text_file((dir / "weights.csv").string(), weight_log_csv(res.report));
  write_text_file((dir / "events.jsonl").string(), events);
  if (trace) write_text_file((dir / "trace.jsonl").string(), trace_lines);

  nlohmann::json summary = {{"mode", to_string(cfg.train.mode)},
                            {"epochs", res.report.epochs.size()},
                            {"examples", ds.size()},
                            {"frozen_checksum", res.report.frozen_checksum},
                            {"out_dir", out_dir}};
  if (!res.report.epochs.empty()) {
    summary["natural_acc"] = res.report.epochs.back().natural_acc;
    summary["robust_acc"] = res.report.epochs.back().robust_acc;
  }
  io.out << summary.dump() << "\n";
  return kOk;
}

struct EvalFlags {
  double epsilon = 1.0 / 255.0;
  std::size_t steps = 100;
  std::optional<double> step_size;  // default epsilon / 4
  bool random_start = false;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

inline int cmd_eval(const std::string& model_path, const std::string& data_path, const EvalFlags& f, Streams io) {
  const PromptedClassifier m = load_model(model_path);
  const LabeledDataset ds = load_csv(data_path);
  if (ds.dim() != m.input_dim()) throw DimensionError("eval: dataset dim does not match the model");
  if (ds.num_classes > m.num_classes()) throw DimensionError("eval: dataset has more classes than the model");
  PerturbationBall ball;
  ball.epsilon = f.epsilon;
  const AttackConfig atk{f.steps, f.step_size.value_or(f.epsilon / 4.0), f.random_start};
  if (f.workers < 1) throw ConfigError("--workers must be >= 1");
  const RobustnessReport r = evaluate_robustness(m, ds, ball, atk, RandomStream(f.seed).split("eval"), f.workers);
  io.out << to_json(r).dump() << "\n";
  return kOk;
}

inline int cmd_compare(const std::string& config_path, const std::string& data_path,
                       const std::optional<std::string>& test_path, const std::string& seeds,
                       std::optional<std::string> force_mode, const std::optional<std::string>& out_csv,
                       const std::optional<std::string>& runs_out, std::optional<std::size_t> workers, Streams io) {
  RunConfig cfg = load_run_config(config_path);
  if (workers) cfg.train.workers = std::max<std::size_t>(1, *workers);
  const LabeledDataset train = load_csv(data_path);
  const LabeledDataset test = test_path ? load_csv(*test_path) : train;
  std::vector<TrainMode> arms = {TrainMode::er_apt, TrainMode::single_pgd_baseline};
  if (force_mode) {
    const TrainMode m = parse_train_mode(*force_mode);
    arms = {m, m};
  }
  const Comparison c = run_comparison(cfg, train, test, parse_seed_list(seeds), arms);
  if (out_csv) write_text_file(*out_csv, summary_csv(c));
  if (runs_out) write_text_file(*runs_out, runs_csv(c));
  io.out << summary_csv(c) << "\n" << summary_text(c);
  return kOk;
}

struct VerifyFlags {
  std::size_t samples = 1000;
  std::size_t examples = 1;
  double max_violation = 0.01;
  std::uint64_t seed = 0;
  double epsilon = 1.0 / 255.0;
  std::size_t population = 9;
  double phi = 0.1;
  std::size_t iterations = 2;
  std::optional<double> step_size;  // default epsilon
};

inline int cmd_verify_theorem(const std::string& model_path, const std::string& data_path, const VerifyFlags& f,
                              Streams io) {
  if (f.samples < 100) throw ConfigError("--samples must be >= 100");
  if (!(f.max_violation >= 0.0 && f.max_violation <= 1.0)) throw ConfigError("--max-violation must lie in [0, 1]");
  const PromptedClassifier m = load_model(model_path);
  const LabeledDataset ds = load_csv(data_path);
  if (ds.dim() != m.input_dim()) throw DimensionError("verify-theorem: dataset dim does not match the model");
  if (f.examples < 1 || f.examples > ds.size()) throw ConfigError("--examples must lie in [1, dataset size]");

  PerturbationBall ball;
  ball.epsilon = f.epsilon;
  validate(ball);
  if (!(f.epsilon > 0.0)) throw ConfigError("--epsilon must be > 0");
  EvolutionConfig evo;
  evo.population = f.population;
  evo.phi = f.phi;
  evo.iterations = f.iterations;
  evo.step_size = f.step_size.value_or(f.epsilon);
  validate(evo);

  const RandomStream root = RandomStream(f.seed).split("verify-theorem");
  RandomStream pick = root.split("pick");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < f.examples; ++i) std::swap(idx[i], idx[i + pick.uniform_index(ds.size() - i)]);
  idx.resize(f.examples);

  nlohmann::json reports = nlohmann::json::array();
  std::size_t violations = 0, heldout = 0;
  for (std::size_t i : idx) {
    const auto& x = ds.inputs[i];
    const Population pop = run_evolution(m, x, ds.labels[i], ball, evo, root.split("evolution").split(i));
    RandomStream s = root.split("samples").split(i);
    const TheoremCheckReport r = verify_theorem(m, x, ds.labels[i], pop, ball, f.samples, s);
    nlohmann::json j = to_json(r);
    j["example"] = i;
    reports.push_back(j);
    violations += static_cast<std::size_t>(std::llround(r.violation_rate * static_cast<double>(r.heldout_samples)));
    heldout += r.heldout_samples;
  }
  const double rate = static_cast<double>(violations) / static_cast<double>(heldout);
  const bool passed = rate <= f.max_violation;
  io.out << nlohmann::json{{"violation_rate", rate},
                           {"max_violation", f.max_violation},
                           {"passed", passed},
                           {"reports", reports}}
                .dump()
         << "\n";
  return passed ? kOk : kRuntime;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Maps library exceptions to exit codes and reports them on `err`.
template <class F>
int guarded(F&& f, Streams io) {
  try {
    return f();
  } catch (const ConfigError& e) {
    io.err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const IoError& e) {
    io.err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Streams io{out, err};
  CLI::App app{"Evolution-based region adversarial prompt tuning", "erapt"};
  app.require_subcommand(1);

  std::string config, data, out_path, out_dir, model_path, seeds = "0";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  bool trace = false;

  auto* gen = app.add_subcommand("gen-data", "Generate the configured synthetic dataset as CSV");
  gen->add_option("--config", config, "Run config file")->required();
  gen->add_option("--out", out_path, "Output CSV path")->required();
  gen->add_option("--seed", seed, "Override the config seed");

  auto* train = app.add_subcommand("train", "Train the prompt on a CSV dataset");
  train->add_option("--config", config, "Run config file")->required();
  train->add_option("--data", data, "Training CSV")->required();
  train->add_option("--out-dir", out_dir, "Directory for model.txt, report.csv, weights.csv, events.jsonl")
      ->required();
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--workers", workers, "Worker threads (results do not depend on it)");
  train->add_flag("--trace", trace, "Also write the population trace (trace.jsonl)");

  EvalFlags ef;
  std::string eval_eps = "1/255";
  std::optional<std::string> eval_step;
  auto* eval = app.add_subcommand("eval", "Natural and PGD robust accuracy of a saved model");
  eval->add_option("--model", model_path, "Model file")->required();
  eval->add_option("--data", data, "Evaluation CSV")->required();
  eval->add_option("--epsilon", eval_eps, "L-inf radius (real or a/b)")->capture_default_str();
  eval->add_option("--steps", ef.steps, "PGD steps")->capture_default_str();
  eval->add_option("--step-size", eval_step, "PGD step size (default epsilon/4)");
  eval->add_flag("--random-start", ef.random_start, "Start PGD from a uniform point in the ball");
  eval->add_option("--seed", ef.seed, "Attack seed")->capture_default_str();
  eval->add_option("--workers", ef.workers, "Worker threads")->capture_default_str();

  std::optional<std::string> test_data, force_mode, out_csv, runs_out;
  auto* compare = app.add_subcommand("compare", "Train both arms over several seeds and tabulate accuracy");
  compare->add_option("--config", config, "Run config file")->required();
  compare->add_option("--data", data, "Training CSV")->required();
  compare->add_option("--test-data", test_data, "Evaluation CSV (default: the training CSV)");
  compare->add_option("--seeds", seeds, "Comma-separated seeds")->capture_default_str();
  compare->add_option("--force-mode", force_mode, "Run both arms in this mode");
  compare->add_option("--out", out_csv, "Write the summary CSV here");
  compare->add_option("--runs-out", runs_out, "Write per-seed results CSV here");
  compare->add_option("--workers", workers, "Worker threads");

  VerifyFlags vf;
  std::string ver_eps = "1/255";
  std::optional<std::string> ver_step;
  auto* verify = app.add_subcommand("verify-theorem", "Empirical check of the population region bound");
  verify->add_option("--model", model_path, "Model file")->required();
  verify->add_option("--data", data, "CSV to draw examples from")->required();
  verify->add_option("--samples", vf.samples, "Uniform samples per example (>= 100)")->capture_default_str();
  verify->add_option("--examples", vf.examples, "Number of random examples")->capture_default_str();
  verify->add_option("--max-violation", vf.max_violation, "Fail if the violation rate exceeds this")->capture_default_str();
  verify->add_option("--seed", vf.seed, "Seed")->capture_default_str();
  verify->add_option("--epsilon", ver_eps, "L-inf radius (real or a/b)")->capture_default_str();
  verify->add_option("--population", vf.population, "Population size N")->capture_default_str();
  verify->add_option("--phi", vf.phi, "Mutation intensity")->capture_default_str();
  verify->add_option("--iterations", vf.iterations, "Evolution iterations")->capture_default_str();
  verify->add_option("--step-size", ver_step, "Gradient step size (default epsilon)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }

  return guarded(
      [&]() -> int {
        if (*gen) return cmd_gen_data(config, out_path, seed, io);
        if (*train) return cmd_train(config, data, out_dir, seed, workers, trace, io);
        if (*eval) {
          ef.epsilon = parse_real_flag("--epsilon", eval_eps);
          if (!(ef.epsilon >= 0.0)) throw ConfigError("--epsilon must be >= 0");
          if (eval_step) ef.step_size = parse_real_flag("--step-size", *eval_step);
          return cmd_eval(model_path, data, ef, io);
        }
        if (*compare) return cmd_compare(config, data, test_data, seeds, force_mode, out_csv, runs_out, workers, io);
        if (*verify) {
          vf.epsilon = parse_real_flag("--epsilon", ver_eps);
          if (ver_step) vf.step_size = parse_real_flag("--step-size", *ver_step);
          return cmd_verify_theorem(model_path, data, vf, io);
        }
        return kValidation;
      },
      io);
}

}  // namespace erapt::cli
