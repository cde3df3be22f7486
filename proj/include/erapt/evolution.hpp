#pragma once

// Per-example population of adversarial perturbations: gradient refinement,
// fitness ranking, top-third selection, uniform mutation and convex crossover.

#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "erapt/attack.hpp"

namespace erapt {

/// Which operator produced a population member.
enum class Block { initial, selected, mutated, crossover };

inline std::string_view to_string(Block b) {
  switch (b) {
    case Block::initial: return "initial";
    case Block::selected: return "selected";
    case Block::mutated: return "mutated";
    case Block::crossover: return "crossover";
  }
  return "?";
}

struct Population {
  std::vector<RealVector> deltas;
  std::vector<double> fitness;  // valid only while fitness_fresh
  bool fitness_fresh = false;
  std::vector<Block> blocks;
  PerturbationBall ball;

  std::size_t size() const { return deltas.size(); }
};

struct EvolutionConfig {
  std::size_t population = 9;
  double phi = 0.1;
  std::size_t iterations = 2;
  double step_size = 1.0 / 255.0;
  /// Start every member at delta = 0 instead of U(-eps, eps).
  bool zero_init = false;
};

inline void validate(const EvolutionConfig& cfg) {
  if (cfg.population % 3 != 0 || cfg.population / 3 < 2)
    throw ConfigError("evolution.N must be a multiple of 3 and at least 6 (got " +
                      std::to_string(cfg.population) + ")");
  if (!(cfg.phi >= 0.0 && cfg.phi <= 1.0)) throw ConfigError("evolution.phi must lie in [0, 1]");
  if (cfg.iterations < 1) throw ConfigError("evolution.iterations must be >= 1");
  if (!(cfg.step_size >= 0.0) || !std::isfinite(cfg.step_size))
    throw ConfigError("evolution.step_size must be a finite value >= 0");
}

/// One line of the optional population trace.
struct TraceRecord {
  std::size_t iteration = 0;
  std::vector<double> fitness;            // post-gradient-step population fitness
  std::vector<std::size_t> selected;      // indices into `fitness`, best first
  std::vector<Block> next_blocks;         // provenance of the next population
};

using TraceSink = std::function<void(const TraceRecord&)>;

inline Population init_population(const EvolutionConfig& cfg, const PerturbationBall& ball,
                                  std::size_t dim, RandomStream& stream) {
  validate(cfg);
  validate(ball);
  Population pop;
  pop.ball = ball;
  pop.deltas.reserve(cfg.population);
  for (std::size_t i = 0; i < cfg.population; ++i) {
    pop.deltas.push_back(cfg.zero_init ? RealVector(dim, 0.0)
                                       : project(uniform_vector(stream, dim, -ball.epsilon, ball.epsilon), ball));
  }
  pop.blocks.assign(cfg.population, Block::initial);
  return pop;
}

inline Population evaluate_fitness(Population pop, const PromptedClassifier& m, std::span<const double> x,
                                   std::size_t y) {
  pop.fitness.resize(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) pop.fitness[i] = loss_ce(m, add(x, pop.deltas[i]), y);
  pop.fitness_fresh = true;
  return pop;
}

/// Indices of the size/3 largest entries, descending; equal values keep index order.
inline std::vector<std::size_t> top_third_indices(std::span<const double> fitness) {
  std::vector<std::size_t> idx(fitness.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t keep = fitness.size() / 3;
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return fitness[a] > fitness[b] || (fitness[a] == fitness[b] && a < b);
                    });
  idx.resize(keep);
  return idx;
}

inline Population select_top_third(const Population& pop) {
  if (!pop.fitness_fresh) throw ConfigError("select_top_third: fitness is stale");
  Population out;
  out.ball = pop.ball;
  out.fitness_fresh = true;
  for (std::size_t i : top_third_indices(pop.fitness)) {
    out.deltas.push_back(pop.deltas[i]);
    out.fitness.push_back(pop.fitness[i]);
    out.blocks.push_back(Block::selected);
  }
  return out;
}

inline Population mutate(const Population& selected, double phi, RandomStream& stream) {
  const double amp = phi * selected.ball.epsilon;
  Population out;
  out.ball = selected.ball;
  for (const RealVector& d : selected.deltas) {
    const RealVector xi = uniform_vector(stream, d.size(), -amp, amp);
    out.deltas.push_back(project(add(d, xi), selected.ball));
    out.blocks.push_back(Block::mutated);
  }
  return out;
}

inline Population crossover(const Population& selected, RandomStream& stream) {
  const std::size_t n = selected.size();
  if (n < 2) throw ConfigError("crossover: needs at least two parents");
  Population out;
  out.ball = selected.ball;
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t p1 = stream.uniform_index(n);
    std::size_t p2 = stream.uniform_index(n - 1);
    if (p2 >= p1) ++p2;
    const double lambda = stream.uniform01();
    const RealVector& a = selected.deltas[p1];
    const RealVector& b = selected.deltas[p2];
    // b + lambda (a - b): equal parents reproduce exactly.
    RealVector child(b);
    for (std::size_t i = 0; i < child.size(); ++i) child[i] += lambda * (a[i] - b[i]);
    out.deltas.push_back(project(child, selected.ball));
    out.blocks.push_back(Block::crossover);
  }
  return out;
}

inline Population evolve_iteration(Population pop, const PromptedClassifier& m, std::span<const double> x,
                                   std::size_t y, const PerturbationBall& ball, const EvolutionConfig& cfg,
                                   RandomStream& stream, const TraceSink* trace = nullptr,
                                   std::size_t iteration = 0) {
  for (RealVector& d : pop.deltas) d = pgd_step(m, x, y, d, ball, cfg.step_size);
  pop = evaluate_fitness(std::move(pop), m, x, y);
  const Population selected = select_top_third(pop);
  const Population mutated = mutate(selected, cfg.phi, stream);
  const Population crossed = crossover(selected, stream);

  Population next;
  next.ball = ball;
  for (const Population* part : {&selected, &mutated, &crossed}) {
    next.deltas.insert(next.deltas.end(), part->deltas.begin(), part->deltas.end());
    next.blocks.insert(next.blocks.end(), part->blocks.begin(), part->blocks.end());
  }
  // Mutation and crossover only know the eps-ball; honour the data box too.
  if (ball.input_lo)
    for (RealVector& d : next.deltas) d = project(d, ball, x);
  if (trace && *trace) {
    TraceRecord rec;
    rec.iteration = iteration;
    rec.fitness = pop.fitness;
    rec.selected = top_third_indices(pop.fitness);
    rec.next_blocks = next.blocks;
    (*trace)(rec);
  }
  return next;
}

inline Population final_selected(const Population& pop, const PromptedClassifier& m,
                                 std::span<const double> x, std::size_t y) {
  return select_top_third(evaluate_fitness(pop, m, x, y));
}

/// Initial population followed by cfg.iterations rounds; iteration t draws its
/// mutation and crossover randomness from stream.split(t).
inline Population run_evolution(const PromptedClassifier& m, std::span<const double> x, std::size_t y,
                                const PerturbationBall& ball, const EvolutionConfig& cfg,
                                const RandomStream& stream, const TraceSink* trace = nullptr) {
  RandomStream init = stream.split("population-init");
  Population pop = init_population(cfg, ball, x.size(), init);
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    RandomStream it = stream.split(t);
    pop = evolve_iteration(std::move(pop), m, x, y, ball, cfg, it, trace, t);
  }
  return pop;
}

}  // namespace erapt
