// SPDX-License-Identifier: Apache-2.0
//
// Physical-constraint penalties. Four violation measures (initial condition,
// equilibrium, sign, monotonicity) are quantified as non-negative squared
// violations and combined into the weighted penalty term added to SSE
// fitness. Violations are squared rather than absolute so the objective
// stays smooth for the local optimizer.
//
// Penalty magnitudes are not normalized by grid size; the per-entry weights
// absorb scale.

#ifndef KINDISC_CONSTRAINTS_HPP
#define KINDISC_CONSTRAINTS_HPP

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "kindisc/common.hpp"
#include "kindisc/expression.hpp"

namespace kindisc {

enum class ConstraintKind { InitialCondition, Equilibrium, Sign, Monotonicity };

inline std::string to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::InitialCondition: return "initial_condition";
    case ConstraintKind::Equilibrium:      return "equilibrium";
    case ConstraintKind::Sign:             return "sign";
    default:                               return "monotonicity";
  }
}

/// One active constraint. The evaluation grid is a sequence of input
/// assignments for the model under test: single times for concentration
/// surrogates, concentration vectors along a fitted surrogate trajectory for
/// rate models.
struct ConstraintEntry {
  ConstraintKind kind = ConstraintKind::Sign;
  double weight = 1.0;
  bool enabled = true;
  std::string label;  // e.g. "sign/CNO" or "monotonicity/exp3"; for reports

  double target = 0.0;      // initial-condition value x0
  double sign = +1.0;       // required sign (+1 or -1)
  double direction = +1.0;  // +1 increasing, -1 decreasing
  std::vector<std::vector<double>> grid;
};

struct ConstraintSpec {
  std::vector<ConstraintEntry> entries;

  /// Grids must be nonempty (>= 2 points and strictly increasing in the
  /// first input for monotonicity); degenerate specs are config errors.
  void validate() const {
    for (std::size_t j = 0; j < entries.size(); ++j) {
      const auto& e = entries[j];
      const std::string where = "constraint entry " + std::to_string(j) +
                                (e.label.empty() ? "" : " (" + e.label + ")");
      if (e.weight < 0.0) throw ConfigError(where, "weight must be >= 0");
      if (e.kind == ConstraintKind::Sign && e.grid.empty())
        throw ConfigError(where, "sign constraint requires a nonempty grid");
      if (e.kind == ConstraintKind::Monotonicity) {
        if (e.grid.size() < 2)
          throw ConfigError(where, "monotonicity constraint requires >= 2 grid points");
      }
      if (e.kind == ConstraintKind::InitialCondition && e.grid.size() != 1)
        throw ConfigError(where, "initial-condition constraint requires exactly 1 grid point");
      if (e.kind == ConstraintKind::Equilibrium) {
        if (e.grid.size() != 2)
          throw ConfigError(where, "equilibrium constraint requires exactly 2 grid points");
        if (!e.grid[0].empty() && !e.grid[1].empty() && !(e.grid[1][0] > e.grid[0][0]))
          throw ConfigError(where, "equilibrium horizon must satisfy t_b > t_a");
      }
    }
  }

  /// Ablation switch: zero weights reproduce the unconstrained baseline.
  ConstraintSpec with_zero_weights() const {
    ConstraintSpec off = *this;
    for (auto& e : off.entries) e.weight = 0.0;
    return off;
  }
};

struct PenaltyReport {
  std::vector<double> raw;       // P_j per entry (disabled entries report 0)
  std::vector<double> weighted;  // lambda_j * P_j
  double total = 0.0;

  bool violated(double tolerance = 1e-8) const {
    for (double p : raw)
      if (!(p <= tolerance)) return true;
    return false;
  }
};

// Model is any callable double(std::span<const double> inputs).

/// P = (m(t0) - x0)^2; zero iff the surrogate passes through the measured
/// initial point.
template <class Model>
double penalty_initial_condition(Model&& model, std::span<const double> point, double x0) {
  const double v = model(point);
  if (!std::isfinite(v)) return kInf;
  const double gap = v - x0;
  return gap * gap;
}

/// P = (m(t_a) - m(t_b))^2 over a post-horizon pair; zero iff the surrogate
/// has flattened out.
template <class Model>
double penalty_equilibrium(Model&& model, std::span<const double> point_a,
                           std::span<const double> point_b) {
  const double va = model(point_a);
  const double vb = model(point_b);
  if (!std::isfinite(va) || !std::isfinite(vb)) return kInf;
  const double gap = va - vb;
  return gap * gap;
}

/// Hinge sum P = sum_i max(0, -s*m(g_i))^2; zero iff the required sign holds
/// on the whole grid.
template <class Model>
double penalty_sign(Model&& model, const std::vector<std::vector<double>>& grid, double sign) {
  double total = 0.0;
  for (const auto& point : grid) {
    const double v = model(std::span<const double>(point));
    if (!std::isfinite(v)) return kInf;
    const double h = std::max(0.0, -sign * v);
    total += h * h;
  }
  return total;
}

/// P = sum_i max(0, -d*(m(g_{i+1}) - m(g_i)))^2 with d=+1 increasing,
/// -1 decreasing.
template <class Model>
double penalty_monotonic(Model&& model, const std::vector<std::vector<double>>& grid,
                         double direction) {
  double total = 0.0;
  double prev = model(std::span<const double>(grid.front()));
  if (!std::isfinite(prev)) return kInf;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double cur = model(std::span<const double>(grid[i]));
    if (!std::isfinite(cur)) return kInf;
    const double h = std::max(0.0, -direction * (cur - prev));
    total += h * h;
    prev = cur;
  }
  return total;
}

template <class Model>
double penalty_entry(Model&& model, const ConstraintEntry& e) {
  switch (e.kind) {
    case ConstraintKind::InitialCondition:
      return penalty_initial_condition(model, std::span<const double>(e.grid.front()), e.target);
    case ConstraintKind::Equilibrium:
      return penalty_equilibrium(model, std::span<const double>(e.grid[0]),
                                 std::span<const double>(e.grid[1]));
    case ConstraintKind::Sign:
      return penalty_sign(model, e.grid, e.sign);
    default:
      return penalty_monotonic(model, e.grid, e.direction);
  }
}

/// Weighted sum over enabled entries; the report exposes each raw P_j.
/// Infeasible candidates are penalized, never deleted.
template <class Model>
PenaltyReport total_penalty(Model&& model, const ConstraintSpec& spec) {
  PenaltyReport report;
  report.raw.reserve(spec.entries.size());
  report.weighted.reserve(spec.entries.size());
  for (const auto& e : spec.entries) {
    if (!e.enabled) {
      report.raw.push_back(0.0);
      report.weighted.push_back(0.0);
      continue;
    }
    const double p = penalty_entry(model, e);
    report.raw.push_back(p);
    report.weighted.push_back(e.weight * p);
    report.total += e.weight * p;
  }
  return report;
}

/// Convenience overload for expression models with a parameter vector.
inline PenaltyReport total_penalty(const ExpressionTree& tree, std::span<const double> theta,
                                   const ConstraintSpec& spec) {
  std::vector<double> scratch;
  auto model = [&](std::span<const double> inputs) {
    return evaluate(tree, theta, inputs, scratch);
  };
  return total_penalty(model, spec);
}

}  // namespace kindisc

#endif  // KINDISC_CONSTRAINTS_HPP
