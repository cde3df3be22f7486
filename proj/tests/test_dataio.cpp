#include <gtest/gtest.h>

#include <map>
#include <set>

#include "support.hpp"

using namespace erapt;
using erapt::testing::Gen;
using erapt::testing::ScratchDir;

namespace {

double dist(const RealVector& a, const RealVector& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::string config_path(const char* name) { return std::string(ERAPT_SOURCE_DIR) + "/configs/" + name; }

double train_and_score(RunConfig c) {
  const auto ds = generate_dataset(c);
  TrainHooks h;
  h.skip_epoch_eval = true;
  return accuracy(run_training(c.train, make_model(c, ds), ds, h).model, ds);
}

}  // namespace

TEST(Blobs, NoiselessPointsSitOnSimplexCenters) {
  for (std::size_t k = 1; k <= 6; ++k) {
    RandomStream s(1);
    const auto ds = gen_blobs(k, 3, 5, 2.5, 0.0, s);
    std::vector<RealVector> centers(k);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (centers[ds.labels[i]].empty()) centers[ds.labels[i]] = ds.inputs[i];
      EXPECT_EQ(ds.inputs[i], centers[ds.labels[i]]);
    }
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = a + 1; b < k; ++b) EXPECT_NEAR(dist(centers[a], centers[b]), 2.5, 1e-12);
  }
}

TEST(Blobs, DimensionAndArgumentChecks) {
  RandomStream s(1);
  EXPECT_THROW(gen_blobs(4, 3, 2, 1.0, 0.1, s), ConfigError);
  EXPECT_NO_THROW(gen_blobs(3, 3, 2, 1.0, 0.1, s));
  EXPECT_THROW(gen_blobs(2, 3, 2, 0.0, 0.1, s), ConfigError);
  EXPECT_THROW(gen_blobs(2, 0, 2, 1.0, 0.1, s), ConfigError);
  EXPECT_THROW(gen_blobs(0, 3, 2, 1.0, 0.1, s), ConfigError);
  EXPECT_THROW(gen_blobs(2, 3, 2, 1.0, -0.1, s), ConfigError);
}

TEST(Blobs, NoiseHasRequestedSpread) {
  RandomStream s(7);
  const auto ds = gen_blobs(1, 20000, 2, 1.0, 0.3, s);
  double m = 0, v = 0;
  for (const auto& x : ds.inputs) m += x[0];
  m /= ds.size();
  for (const auto& x : ds.inputs) v += (x[0] - m) * (x[0] - m);
  // standard error of the mean ~0.002, of the sd ~0.0015
  EXPECT_NEAR(m, 0.0, 0.01);
  EXPECT_NEAR(std::sqrt(v / (ds.size() - 1)), 0.3, 0.006);
}

TEST(Generators, DeterministicPerSeed) {
  RandomStream a(11), b(11), c(12);
  EXPECT_EQ(gen_blobs(3, 5, 4, 2.0, 0.5, a), gen_blobs(3, 5, 4, 2.0, 0.5, b));
  EXPECT_NE(gen_blobs(3, 5, 4, 2.0, 0.5, a), gen_blobs(3, 5, 4, 2.0, 0.5, c));
  RandomStream d(11), e(11);
  EXPECT_EQ(gen_two_moons(9, 0.2, d), gen_two_moons(9, 0.2, e));
}

TEST(Generators, RandomParametersSatisfyDatasetInvariants) {
  Gen g(3);
  for (int t = 0; t < 300; ++t) {
    RandomStream s(g.rng());
    const std::size_t per = g.range(1, 12);
    LabeledDataset ds;
    if (t % 2) {
      const std::size_t k = g.range(1, 5);
      ds = gen_blobs(k, per, g.range(k > 1 ? k - 1 : 1, 6), g.real(0.1, 5), g.real(0, 2), s);
    } else {
      ds = gen_two_moons(per, g.real(0, 1), s);
    }
    ASSERT_NO_THROW(validate(ds));
    ASSERT_EQ(ds.size(), per * ds.num_classes);
    std::vector<std::size_t> count(ds.num_classes, 0);
    for (auto y : ds.labels) ++count[y];
    for (auto c : count) ASSERT_EQ(c, per);
  }
}

TEST(TwoMoons, NoiselessPointsLieOnHalfCircles) {
  RandomStream s(1);
  const auto ds = gen_two_moons(25, 0.0, s);
  ASSERT_EQ(ds.size(), 50u);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& x = ds.inputs[i];
    if (ds.labels[i] == 0) {
      EXPECT_NEAR(std::hypot(x[0], x[1]), 1.0, 1e-12);
      EXPECT_GE(x[1], -1e-15);
    } else {
      EXPECT_NEAR(std::hypot(x[0] - 1.0, x[1] - 0.5), 1.0, 1e-12);
      EXPECT_LE(x[1], 0.5 + 1e-15);
    }
  }
  EXPECT_EQ(ds.inputs.front(), (RealVector{1.0, 0.0}));
  EXPECT_EQ(ds.inputs[25], (RealVector{0.0, 0.5}));
  RandomStream t(1);
  EXPECT_EQ(gen_two_moons(1, 0.0, t).size(), 2u);
  EXPECT_THROW(gen_two_moons(0, 0.0, t), ConfigError);
}

TEST(KShot, StratifiedOrderedAndDeterministic) {
  Gen g(5);
  for (int t = 0; t < 200; ++t) {
    RandomStream s(g.rng());
    const std::size_t per = g.range(1, 15);
    const auto ds = gen_blobs(3, per, 2, 3.0, 1.0, s);
    const std::size_t k = g.range(1, per);
    const std::uint64_t seed = g.rng();
    RandomStream a(seed), b(seed);
    const auto sub = k_shot_sample(ds, k, a);
    ASSERT_EQ(sub, k_shot_sample(ds, k, b));
    ASSERT_EQ(sub.size(), 3 * k);
    ASSERT_EQ(sub.num_classes, 3u);
    // order preserved: each chosen row appears in the source after the previous one
    std::size_t pos = 0;
    std::vector<std::size_t> count(3, 0);
    for (std::size_t i = 0; i < sub.size(); ++i) {
      while (pos < ds.size() && ds.inputs[pos] != sub.inputs[i]) ++pos;
      ASSERT_LT(pos, ds.size());
      ASSERT_EQ(ds.labels[pos], sub.labels[i]);
      ++count[sub.labels[i]];
      ++pos;
    }
    for (auto c : count) ASSERT_EQ(c, k);
    if (k == per) {
      ASSERT_EQ(sub.inputs, ds.inputs);
    }
  }
}

TEST(KShot, UniformWithoutReplacementAndErrors) {
  RandomStream s(2);
  const auto ds = gen_blobs(1, 4, 1, 1.0, 1.0, s);
  std::map<double, int> hits;
  RandomStream draw(3);
  for (int t = 0; t < 8000; ++t) ++hits[k_shot_sample(ds, 1, draw).inputs[0][0]];
  ASSERT_EQ(hits.size(), 4u);
  for (const auto& [x, n] : hits) EXPECT_NEAR(n, 2000, 150) << x;  // sd ~39

  RandomStream sixteen(4);
  const auto big = gen_blobs(4, 40, 3, 2.0, 0.3, sixteen);
  EXPECT_EQ(k_shot_sample(big, 16, sixteen).size(), 64u);
  EXPECT_THROW(k_shot_sample(big, 41, sixteen), ConfigError);
}

TEST(Csv, RoundTripIsExact) {
  Gen g(6);
  for (int t = 0; t < 50; ++t) {
    RandomStream s(g.rng());
    auto ds = gen_blobs(g.range(1, 4), g.range(1, 6), 3, g.real(0.1, 1e3), g.real(0, 1e-3), s);
    ds.inputs[0][0] = g.real(-1e-300, 1e-300);
    const auto back = parse_csv(to_csv(ds), ds.name);
    ASSERT_EQ(back.inputs, ds.inputs);
    ASSERT_EQ(back.labels, ds.labels);
  }
  ScratchDir dir("csv");
  RandomStream s(1);
  const auto ds = gen_two_moons(10, 0.3, s);
  save_csv(ds, dir.file("m.csv"));
  const auto back = load_csv(dir.file("m.csv"));
  EXPECT_EQ(back.inputs, ds.inputs);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.num_classes, 2u);
  EXPECT_EQ(read_text_file(dir.file("m.csv")).substr(0, 12), "f0,f1,label\n");
}

TEST(Csv, MalformedInputNamesTheLine) {
  auto message = [](const std::string& text) {
    try {
      parse_csv(text);
    } catch (const FormatError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_EQ(message("f0,f1,label\n"), "dataset file contains no examples");
  EXPECT_EQ(message(""), "dataset file has no header");
  EXPECT_EQ(message("f0,f1,label\n1,2,0\n3,4\n"), "line 3: expected 3 fields, got 2");
  EXPECT_EQ(message("f0,f1,label\n1,2,0\n3,4,\n"), "line 3: missing or invalid label");
  EXPECT_EQ(message("f0,f1,label\n1,x,0\n"), "line 2: non-numeric value in column 1");
  EXPECT_EQ(message("f0,f1,label\n1,2,-1\n"), "line 2: missing or invalid label");
  EXPECT_EQ(message("f0,f1\n1,2\n"), "line 1: header must be f0,...,f{d-1},label");
  EXPECT_EQ(message("f0,label\r\n\r\n0.5,1\r\n").substr(0, 8), "no error");
  EXPECT_THROW(load_csv("/nonexistent/erapt.csv"), IoError);
}

TEST(ModelIo, RoundTripIsBitExact) {
  Gen g(8);
  for (int t = 0; t < 100; ++t) {
    const auto m = erapt::testing::random_model(g, t % 2 ? BackboneKind::linear : BackboneKind::one_hidden_tanh);
    const auto back = model_from_text(to_text(m));
    ASSERT_EQ(back.w_in.data()[0], m.w_in.data()[0]);
    ASSERT_EQ(to_text(back), to_text(m));
    ASSERT_EQ(frozen_checksum(back), frozen_checksum(m));
    ASSERT_EQ(back.prompt, m.prompt);
    ASSERT_EQ(back.tau_logit, m.tau_logit);
    ASSERT_EQ(back.backbone_kind, m.backbone_kind);
  }
  ScratchDir dir("model");
  const auto m = erapt::testing::random_model(g, BackboneKind::one_hidden_tanh);
  save_model(m, dir.file("m.txt"));
  EXPECT_EQ(to_text(load_model(dir.file("m.txt"))), to_text(m));
  EXPECT_THROW(load_model(dir.file("missing.txt")), IoError);
}

TEST(ModelIo, RejectsMalformedFiles) {
  Gen g(9);
  const std::string good = to_text(erapt::testing::random_model(g, BackboneKind::linear, 2, 2));
  auto replace_line = [&](const std::string& key, const std::string& line) {
    std::istringstream in(good);
    std::string out, l;
    while (std::getline(in, l)) out += (l.rfind(key + " =", 0) == 0 ? line : l) + "\n";
    return out;
  };
  EXPECT_THROW(model_from_text(replace_line("format", "format = erapt-model/2")), FormatError);
  EXPECT_THROW(model_from_text(replace_line("prompt", "")), FormatError);
  EXPECT_THROW(model_from_text(replace_line("prompt", "prompt = 1 2 3 4 5 6 7 8 9")), FormatError);
  EXPECT_THROW(model_from_text(replace_line("prompt", "prompt = a b")), FormatError);
  EXPECT_THROW(model_from_text(replace_line("dims", "dims = 2 0 3 2")), FormatError);
  EXPECT_THROW(model_from_text(replace_line("tau_logit", "tau_logit = -1")), FormatError);
  EXPECT_THROW(model_from_text(good + "bias = 1\n"), FormatError);
  EXPECT_THROW(model_from_text(good + "prompt = 0\n"), FormatError);
  EXPECT_THROW(model_from_text(good + "w_hidden = 1\n"), FormatError);
  EXPECT_THROW(model_from_text(replace_line("backbone_kind", "backbone_kind = relu")), FormatError);

  // zero prototype rows are not a valid model
  ModelInitSpec spec;
  spec.input_dim = 1;
  spec.num_classes = 1;
  spec.feature_dim = 2;
  auto m = init_model(spec);
  std::string text = to_text(m);
  text.replace(text.find("prototypes = "), text.find('\n', text.find("prototypes = ")) - text.find("prototypes = "),
               "prototypes = 0 0");
  EXPECT_THROW(model_from_text(text), FormatError);
}

TEST(RunConfigFile, DefaultsAndOverrides) {
  const auto d = parse_run_config("");
  EXPECT_EQ(d.train.epochs, 10u);
  EXPECT_EQ(d.train.ball.epsilon, 1.0 / 255);
  EXPECT_EQ(d.train.lr_init, 0.0035);
  EXPECT_EQ(d.model.tau_logit, 0.07);
  EXPECT_EQ(d.train.evolution.population, 9u);
  EXPECT_EQ(d.train.evolution.phi, 0.1);
  EXPECT_EQ(d.train.evolution.iterations, d.train.attack.steps);
  EXPECT_EQ(d.train.report_attack.step_size, d.train.ball.epsilon / 4);

  const auto c = parse_run_config(
      "# comment\nseed = 3\nball.epsilon = 8/255\nattack.steps = 4  # inline\nattack.step_size = 2/255\n"
      "evolution.N = 12\ntrain.mode = single_pgd_baseline\nmodel.backbone = one-hidden-tanh\nball.input_lo = 0\nball.input_hi = 1\n");
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.train.ball.epsilon, 8.0 / 255);
  EXPECT_EQ(c.train.evolution.iterations, 4u);
  EXPECT_EQ(c.train.evolution.step_size, 2.0 / 255);
  EXPECT_EQ(c.train.evolution.population, 12u);
  EXPECT_EQ(c.train.mode, TrainMode::single_pgd_baseline);
  EXPECT_EQ(c.model.backbone_kind, BackboneKind::one_hidden_tanh);
  EXPECT_EQ(*c.train.ball.input_hi, 1.0);

  auto r = c;
  reseed(r, 3);
  EXPECT_EQ(r.train.seed, c.train.seed);
  EXPECT_EQ(r.model.init_seed, c.model.init_seed);
  reseed(r, 4);
  EXPECT_NE(r.train.seed, c.train.seed);
}

TEST(RunConfigFile, ErrorsLeadWithTheKey) {
  auto message = [](const std::string& text) {
    try {
      parse_run_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_EQ(message("train.speed = 1\n"), "train.speed: unknown config key");
  EXPECT_EQ(message("ball.epsilon = 1/0\n").rfind("ball.epsilon:", 0), 0u);
  EXPECT_EQ(message("train.epochs = -1\n").rfind("train.epochs:", 0), 0u);
  EXPECT_EQ(message("train.shuffle = maybe\n").rfind("train.shuffle:", 0), 0u);
  EXPECT_EQ(message("train.mode = fast\n").rfind("train.mode:", 0), 0u);
  EXPECT_EQ(message("ball.input_lo = 0\n").rfind("ball.input_hi:", 0), 0u);
  EXPECT_EQ(message("data.generator = mnist\n").rfind("data.generator:", 0), 0u);
  EXPECT_EQ(message("data.generator = blobs\ndata.num_classes = 5\ndata.dim = 2\n").rfind("data.dim:", 0), 0u);
  EXPECT_EQ(message("seed = 1\nseed = 2\n").find("duplicate key 'seed'") != std::string::npos, true);
  EXPECT_EQ(message("seed 1\n"), "config line 1: expected 'key = value'");
  EXPECT_THROW(load_run_config("/nonexistent/run.conf"), IoError);
}

TEST(RunConfigFile, ShippedConfigsParseAndCoverEveryKey) {
  for (const char* name : {"default.conf", "two_moons_tanh.conf"}) EXPECT_NO_THROW(load_run_config(config_path(name)));
  const std::string text = read_text_file(config_path("default.conf"));
  for (const auto& key : run_config_keys()) EXPECT_NE(text.find(key + " ="), std::string::npos) << key;
  // the annotated defaults file spells out exactly the built-in defaults
  EXPECT_EQ(load_run_config(config_path("default.conf")).train.seed, parse_run_config("").train.seed);
}

TEST(Harness, WellSeparatedBlobsAreLearnedByTheLinearModel) {
  RunConfig c;
  c.data.generator = "blobs";
  c.data.separation = 10;
  c.data.noise_sd = 0.1;
  c.data.per_class = 50;
  c.model.backbone_kind = BackboneKind::linear;
  reseed(c, 0);
  EXPECT_EQ(train_and_score(c), 1.0);
}

TEST(Harness, LinearBackboneTrailsTanhOnTwoMoons) {
  double lin = 0, tanh_ = 0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    RunConfig c;
    reseed(c, seed);
    c.model.backbone_kind = BackboneKind::linear;
    lin += train_and_score(c) / 6;
    c.model.backbone_kind = BackboneKind::one_hidden_tanh;
    tanh_ += train_and_score(c) / 6;
  }
  EXPECT_LT(lin, tanh_);
}
