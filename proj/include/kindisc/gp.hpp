// SPDX-License-Identifier: Apache-2.0
//
// Genetic-programming structure search. Candidates are expression trees over
// the configured operator and variable sets with ephemeral numeric constants;
// fitness is SSE plus the weighted constraint penalty, with constants given a
// cheap greedy tune per evaluation. The search keeps one champion per
// complexity level (node count) so simple models never compete directly with
// richer ones; cross-level comparison happens later via AIC after full
// refinement.
//
// Determinism: a single master stream drives selection and variation, and
// each candidate's tuner is seeded from (seed, generation, slot), so results
// are identical for any thread count.

#ifndef KINDISC_GP_HPP
#define KINDISC_GP_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "kindisc/common.hpp"
#include "kindisc/constraints.hpp"
#include "kindisc/dataset.hpp"
#include "kindisc/expression.hpp"
#include "kindisc/rng.hpp"

namespace kindisc {

struct GPConfig {
  int population = 500;
  int generations = 40;
  int max_complexity = 15;  // kappa_max: champion levels and tree-size cap
  int max_depth = 8;
  int tournament = 5;
  double p_crossover = 0.7;
  double p_subtree_mutation = 0.2;
  double p_point_mutation = 0.1;
  std::vector<std::string> operators = {"+", "-", "*", "/"};
  double constant_min = 0.1;  // ephemeral constants drawn log-uniformly
  double constant_max = 10.0;
  std::uint64_t seed = 0;
  int tune_budget = 25;  // objective evaluations spent tuning constants
  int threads = 1;

  void validate() const {
    if (population < 2 * tournament)
      throw ConfigError("gp.population", "population must be >= 2 * tournament size");
    if (generations < 1) throw ConfigError("gp.generations", "must be >= 1");
    if (max_complexity < 3) throw ConfigError("gp.max_complexity", "must be >= 3");
    if (max_depth < 2) throw ConfigError("gp.max_depth", "must be >= 2");
    if (tournament < 1) throw ConfigError("gp.tournament", "must be >= 1");
    for (double p : {p_crossover, p_subtree_mutation, p_point_mutation})
      if (p < 0.0 || p > 1.0)
        throw ConfigError("gp.probabilities", "probabilities must lie in [0, 1]");
    if (p_crossover + p_subtree_mutation + p_point_mutation > 1.0)
      throw ConfigError("gp.probabilities", "variation probabilities must sum to <= 1");
    if (!(constant_min > 0.0) || !(constant_max >= constant_min))
      throw ConfigError("gp.constant_range", "need 0 < min <= max");
    if (operators.empty()) throw ConfigError("gp.operators", "operator set must not be empty");
    for (const auto& op : operators)
      if (op != "+" && op != "-" && op != "*" && op != "/" && op != "exp")
        throw ConfigError("gp.operators", "unknown operator '" + op + "'");
  }
};

struct Champion {
  ExpressionTree model;            // literal-promoted, contiguous slots
  std::vector<double> parameters;  // cheap-tuned constant values
  double fitness = kInf;           // SSE + weighted penalty
  double sse = kInf;
  PenaltyReport penalties;
};

/// Best candidate per complexity level kappa <= kappa_max.
struct ChampionTable {
  std::map<int, Champion> by_complexity;
  std::string diagnostic;  // set when the table is empty (degenerate data/grammar)

  bool empty() const { return by_complexity.empty(); }
};

struct GenerationTrace {
  int generation = 0;
  double best_fitness = kInf;
  int best_complexity = 0;
};

struct SearchResult {
  ChampionTable champions;
  std::vector<GenerationTrace> trace;
};

namespace gp_detail {

struct OperatorSet {
  std::vector<NodeKind> binary;
  bool has_exp = false;

  static OperatorSet from(const std::vector<std::string>& names) {
    OperatorSet set;
    for (const auto& n : names) {
      if (n == "+") set.binary.push_back(NodeKind::Add);
      else if (n == "-") set.binary.push_back(NodeKind::Sub);
      else if (n == "*") set.binary.push_back(NodeKind::Mul);
      else if (n == "/") set.binary.push_back(NodeKind::Div);
      else if (n == "exp") set.has_exp = true;
    }
    return set;
  }
};

inline ExpressionTree random_terminal(const GPConfig& cfg, std::size_t n_vars, Rng& rng) {
  if (n_vars > 0 && !rng.bernoulli(0.35))
    return ExpressionTree::variable(static_cast<int>(rng.index(n_vars)));
  return ExpressionTree::literal(rng.log_uniform(cfg.constant_min, cfg.constant_max));
}

inline ExpressionTree random_tree(const GPConfig& cfg, const OperatorSet& ops, std::size_t n_vars,
                                  int depth_budget, bool full, Rng& rng) {
  if (depth_budget <= 1) return random_terminal(cfg, n_vars, rng);
  const bool make_op = full || rng.bernoulli(0.6);
  if (!make_op) return random_terminal(cfg, n_vars, rng);
  const std::size_t n_choices = ops.binary.size() + (ops.has_exp ? 1 : 0);
  const std::size_t pick = rng.index(n_choices);
  if (pick < ops.binary.size()) {
    auto a = random_tree(cfg, ops, n_vars, depth_budget - 1, full, rng);
    auto b = random_tree(cfg, ops, n_vars, depth_budget - 1, full, rng);
    return ExpressionTree::binary(ops.binary[pick], a, b);
  }
  return ExpressionTree::unary(NodeKind::Exp,
                               random_tree(cfg, ops, n_vars, depth_budget - 1, full, rng));
}

inline bool within_caps(const ExpressionTree& t, const GPConfig& cfg) {
  return complexity(t) <= cfg.max_complexity && depth(t) <= cfg.max_depth;
}

}  // namespace gp_detail

/// Point-op swap, subtree replacement or constant perturbation; the output is
/// grammar-valid and within the depth/complexity caps (bounded retries, then
/// the parent is returned unchanged).
inline ExpressionTree mutate(const ExpressionTree& tree, const GPConfig& cfg, Rng& rng,
                             std::size_t n_vars) {
  using gp_detail::OperatorSet;
  const OperatorSet ops = OperatorSet::from(cfg.operators);
  for (int attempt = 0; attempt < 8; ++attempt) {
    const auto sizes = subtree_sizes(tree);
    const std::size_t at = rng.index(tree.size());
    const Node& nd = tree.node(at);
    ExpressionTree child;
    const double kind = rng.uniform01();
    if (kind < 0.4) {
      // subtree replacement
      child = replace_subtree(tree, at, sizes,
                              gp_detail::random_tree(cfg, ops, n_vars, 3, false, rng));
    } else if (kind < 0.75) {
      // point swap
      std::vector<Node> nodes = tree.nodes();
      Node& target = nodes[at];
      if (is_binary(target.kind) && ops.binary.size() > 1) {
        NodeKind repl = target.kind;
        while (repl == target.kind)
          repl = ops.binary[rng.index(ops.binary.size())];
        target.kind = repl;
      } else if (target.kind == NodeKind::Variable && n_vars > 0) {
        target.index = static_cast<int>(rng.index(n_vars));
      } else if (target.kind == NodeKind::Literal) {
        target.value = rng.log_uniform(cfg.constant_min, cfg.constant_max);
      } else {
        continue;
      }
      child = ExpressionTree(std::move(nodes));
    } else {
      // constant perturbation (multiplicative, keeps sign and finiteness)
      std::vector<std::size_t> literals;
      for (std::size_t i = 0; i < tree.size(); ++i)
        if (tree.node(i).kind == NodeKind::Literal) literals.push_back(i);
      if (literals.empty()) continue;
      std::vector<Node> nodes = tree.nodes();
      Node& target = nodes[literals[rng.index(literals.size())]];
      target.value *= std::exp(rng.normal(0.0, 0.4));
      child = ExpressionTree(std::move(nodes));
    }
    if (!child.empty() && gp_detail::within_caps(child, cfg)) return child;
  }
  return tree;
}

/// Random subtree exchange; children violating the caps fall back to their
/// parents after bounded retries.
inline std::pair<ExpressionTree, ExpressionTree> crossover(const ExpressionTree& a,
                                                           const ExpressionTree& b,
                                                           const GPConfig& cfg, Rng& rng) {
  for (int attempt = 0; attempt < 8; ++attempt) {
    const auto sa = subtree_sizes(a);
    const auto sb = subtree_sizes(b);
    const std::size_t ia = rng.index(a.size());
    const std::size_t ib = rng.index(b.size());
    ExpressionTree ga = subtree(a, ia, sa);
    ExpressionTree gb = subtree(b, ib, sb);
    ExpressionTree child_a = replace_subtree(a, ia, sa, gb);
    ExpressionTree child_b = replace_subtree(b, ib, sb, ga);
    if (gp_detail::within_caps(child_a, cfg) && gp_detail::within_caps(child_b, cfg))
      return {child_a, child_b};
  }
  return {a, b};
}

namespace gp_detail {

struct Score {
  double fitness = kInf;  // SSE + weighted penalty
  double sse = kInf;
  double raw_violation = kInf;  // sum of unweighted P_j
};

/// SSE + weighted penalty for a literals-only candidate.
template <class Buffers>
Score candidate_fitness(const ExpressionTree& tree, const FitData& data,
                        const ConstraintSpec& spec, Buffers& scratch) {
  Score score;
  double sse = 0.0;
  static const std::vector<double> kNoTheta;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const double pred = evaluate(tree, kNoTheta, data.inputs[i], scratch);
    if (!std::isfinite(pred)) return score;
    const double r = pred - data.targets[i];
    sse += r * r;
  }
  auto model = [&](std::span<const double> inputs) {
    return evaluate(tree, kNoTheta, inputs, scratch);
  };
  const PenaltyReport report = total_penalty(model, spec);
  if (!std::isfinite(report.total)) return score;
  score.sse = sse;
  score.fitness = sse + report.total;
  score.raw_violation = 0.0;
  for (double p : report.raw) score.raw_violation += p;
  return score;
}

/// Greedy hill-climb on the candidate's ephemeral constants within a small
/// evaluation budget; tuned values are written back (Lamarckian).
inline Score cheap_tune(ExpressionTree& tree, const FitData& data, const ConstraintSpec& spec,
                        const GPConfig& cfg, Rng& rng) {
  std::vector<double> scratch;
  Score best = candidate_fitness(tree, data, spec, scratch);
  std::vector<std::size_t> literals;
  for (std::size_t i = 0; i < tree.size(); ++i)
    if (tree.node(i).kind == NodeKind::Literal) literals.push_back(i);
  if (literals.empty() || cfg.tune_budget <= 0) return best;

  std::vector<Node> nodes = tree.nodes();
  for (int k = 0; k < cfg.tune_budget; ++k) {
    const std::size_t pos = literals[static_cast<std::size_t>(k) % literals.size()];
    const double saved = nodes[pos].value;
    if (k % 5 == 4)
      nodes[pos].value = rng.log_uniform(cfg.constant_min, cfg.constant_max);
    else
      nodes[pos].value = saved * std::exp(rng.normal(0.0, 0.5));
    ExpressionTree trial(nodes);
    const Score s = candidate_fitness(trial, data, spec, scratch);
    if (s.fitness < best.fitness) {
      best = s;
    } else {
      nodes[pos].value = saved;
    }
  }
  tree = ExpressionTree(std::move(nodes));
  return best;
}

}  // namespace gp_detail

/// Runs the GP search and returns the best candidate per complexity level,
/// each stored with literal constants promoted to parameter slots. The
/// champion slot at a level changes only for strictly better fitness, or for
/// equal fitness with a strictly smaller raw penalty.
inline SearchResult search(const FitData& data, const ConstraintSpec& spec, const GPConfig& cfg) {
  cfg.validate();
  spec.validate();
  data.validate();
  if (data.rows() == 0) throw std::invalid_argument("gp::search: empty dataset");

  using gp_detail::OperatorSet;
  const OperatorSet ops = OperatorSet::from(cfg.operators);
  const std::size_t n_vars = data.variable_names.size();
  const std::size_t pop_size = static_cast<std::size_t>(cfg.population);

  struct Internal {
    ExpressionTree tree;
    gp_detail::Score score;
  };
  std::map<int, Internal> table;  // kappa -> best literal-form candidate

  Rng master(mix_seed(cfg.seed, 0x60ull));
  std::vector<ExpressionTree> population;
  population.reserve(pop_size);
  const int ramp_hi = std::min(cfg.max_depth, 6);
  for (std::size_t i = 0; i < pop_size; ++i) {
    const int d = 2 + static_cast<int>(i % static_cast<std::size_t>(std::max(1, ramp_hi - 1)));
    ExpressionTree t;
    for (int attempt = 0; attempt < 8; ++attempt) {
      t = gp_detail::random_tree(cfg, ops, n_vars, d, i % 2 == 0, master);
      if (gp_detail::within_caps(t, cfg)) break;
      t = ExpressionTree();
    }
    if (t.empty()) t = gp_detail::random_terminal(cfg, n_vars, master);
    population.push_back(std::move(t));
  }

  SearchResult result;
  std::vector<gp_detail::Score> scores(pop_size);

  for (int gen = 0; gen < cfg.generations; ++gen) {
    parallel_for(pop_size, cfg.threads, [&](std::size_t i) {
      Rng tuner(mix_seed(cfg.seed, static_cast<std::uint64_t>(gen), static_cast<std::uint64_t>(i)));
      scores[i] = gp_detail::cheap_tune(population[i], data, spec, cfg, tuner);
    });

    // Champion bookkeeping, sequentially and in slot order. A slot changes
    // hands only for strictly better fitness, or for equal fitness and SSE
    // with a strictly smaller raw violation.
    for (std::size_t i = 0; i < pop_size; ++i) {
      if (!std::isfinite(scores[i].fitness)) continue;
      const int kappa = complexity(population[i]);
      auto it = table.find(kappa);
      if (it == table.end()) {
        table.emplace(kappa, Internal{population[i], scores[i]});
      } else if (scores[i].fitness < it->second.score.fitness ||
                 (scores[i].fitness == it->second.score.fitness &&
                  scores[i].sse == it->second.score.sse &&
                  scores[i].raw_violation < it->second.score.raw_violation)) {
        it->second = Internal{population[i], scores[i]};
      }
    }

    GenerationTrace row;
    row.generation = gen;
    for (const auto& [kappa, champ] : table)
      if (champ.score.fitness < row.best_fitness) {
        row.best_fitness = champ.score.fitness;
        row.best_complexity = kappa;
      }
    result.trace.push_back(row);

    if (gen + 1 == cfg.generations) break;

    // Next generation: per-level champions survive, offspring fill the rest.
    std::vector<ExpressionTree> next;
    next.reserve(pop_size);
    for (const auto& [kappa, champ] : table) {
      if (next.size() >= pop_size / 5) break;
      next.push_back(champ.tree);
    }

    auto tournament_pick = [&]() -> const ExpressionTree& {
      std::size_t best_idx = master.index(pop_size);
      for (int t = 1; t < cfg.tournament; ++t) {
        const std::size_t idx = master.index(pop_size);
        if (scores[idx].fitness < scores[best_idx].fitness) best_idx = idx;
      }
      return population[best_idx];
    };

    while (next.size() < pop_size) {
      const double u = master.uniform01();
      if (u < cfg.p_crossover) {
        auto [a, b] = crossover(tournament_pick(), tournament_pick(), cfg, master);
        next.push_back(std::move(a));
        if (next.size() < pop_size) next.push_back(std::move(b));
      } else if (u < cfg.p_crossover + cfg.p_subtree_mutation + cfg.p_point_mutation) {
        next.push_back(mutate(tournament_pick(), cfg, master, n_vars));
      } else {
        next.push_back(tournament_pick());
      }
    }
    population = std::move(next);
  }

  for (auto& [kappa, internal] : table) {
    if (kappa > cfg.max_complexity) continue;
    Champion champ;
    auto [promoted, theta] = promote_literals(internal.tree);
    champ.model = std::move(promoted);
    champ.parameters = std::move(theta);
    champ.fitness = internal.score.fitness;
    champ.sse = internal.score.sse;
    champ.penalties = total_penalty(champ.model, champ.parameters, spec);
    result.champions.by_complexity.emplace(kappa, std::move(champ));
  }
  if (result.champions.by_complexity.empty())
    result.champions.diagnostic =
        "no finite-fitness candidate was found; the dataset or grammar is degenerate";
  return result;
}

}  // namespace kindisc

#endif  // KINDISC_GP_HPP
