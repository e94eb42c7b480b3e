// SPDX-License-Identifier: Apache-2.0
//
// Model-based design of experiments: choose the next experiment's initial
// conditions to maximize the integrated squared discrepancy between the
// trajectories of the two best candidate rate models.
//
// The classical discrimination objective is the pure integral
//   J(x0) = integral over [t0, tf] of sum_s (x_eta,s - x_mu,s)^2 dtau;
// an additive sum(x0) term can be switched on for fidelity experiments with
// the literal criterion form, but it is dimensionally inconsistent with the
// integral and is off by default.

#ifndef KINDISC_MBDOE_HPP
#define KINDISC_MBDOE_HPP

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "kindisc/common.hpp"
#include "kindisc/estimate.hpp"
#include "kindisc/ode.hpp"
#include "kindisc/optimize.hpp"
#include "kindisc/simulate.hpp"

namespace kindisc {

struct DesignProblem {
  FitResult model_a;  // best (eta)
  FitResult model_b;  // runner-up (mu)
  std::vector<double> stoichiometry;
  std::vector<double> x0_lower, x0_upper;
  double t_start = 0.0;
  double t_final = 10.0;
  int quadrature_points = 201;  // trapezoid grid
  bool include_x0_term = false;
  double ode_abs_tol = 1e-8;
  double ode_rel_tol = 1e-8;

  // design() controls
  int lattice_per_dimension = 11;
  int refine_starts = 4;
  std::uint64_t seed = 0;

  void validate() const {
    const std::size_t d = stoichiometry.size();
    if (x0_lower.size() != d || x0_upper.size() != d)
      throw ConfigError("mbdoe.bounds", "bound dimensions must match the species count");
    for (std::size_t i = 0; i < d; ++i)
      if (x0_lower[i] > x0_upper[i])
        throw ConfigError("mbdoe.bounds", "lower bound exceeds upper bound");
    if (quadrature_points < 16)
      throw ConfigError("mbdoe.quadrature_points", "need at least 16 quadrature points");
    if (lattice_per_dimension < 2)
      throw ConfigError("mbdoe.lattice_per_dimension", "need at least 2 lattice points per axis");
  }
};

struct DesignOutcome {
  std::vector<double> x0;
  double objective = -kInf;
  // Lattice scan for plotting: one row per scanned point, x0 then objective.
  std::vector<std::vector<double>> landscape;
};

/// Trapezoid approximation of the trajectory-discrepancy integral from x0;
/// -inf when either model fails to integrate (the design must be integrable).
inline double mbdoe_objective(const DesignProblem& problem, const std::vector<double>& x0) {
  const auto grid = uniform_grid(problem.t_start, problem.t_final, problem.quadrature_points);
  KineticRhs rhs_a(problem.model_a.model, problem.model_a.parameters, problem.stoichiometry);
  KineticRhs rhs_b(problem.model_b.model, problem.model_b.parameters, problem.stoichiometry);
  const OdeResult sol_a =
      integrate_at_times(rhs_a, x0, grid, problem.ode_abs_tol, problem.ode_rel_tol);
  if (!sol_a.ok) return -kInf;
  const OdeResult sol_b =
      integrate_at_times(rhs_b, x0, grid, problem.ode_abs_tol, problem.ode_rel_tol);
  if (!sol_b.ok) return -kInf;

  std::vector<double> integrand(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double acc = 0.0;
    for (std::size_t s = 0; s < x0.size(); ++s) {
      const double gap = sol_a.states[i][s] - sol_b.states[i][s];
      acc += gap * gap;
    }
    integrand[i] = acc;
  }
  double value = 0.0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i)
    value += 0.5 * (integrand[i] + integrand[i + 1]) * (grid[i + 1] - grid[i]);

  if (problem.include_x0_term)
    for (double v : x0) value += v;
  return value;
}

/// Multistart bounded maximization seeded by a coarse lattice scan; returns
/// the best initial condition found, clipped to the bounds. Deterministic
/// given the problem (the lattice and refinement are derandomized).
inline DesignOutcome design(const DesignProblem& problem) {
  problem.validate();
  const std::size_t d = problem.stoichiometry.size();
  DesignOutcome outcome;

  // Degenerate box: nothing to search.
  bool degenerate = true;
  for (std::size_t i = 0; i < d; ++i) degenerate = degenerate && problem.x0_lower[i] == problem.x0_upper[i];

  // Coarse lattice scan (odometer over axes).
  const int m = problem.lattice_per_dimension;
  std::vector<int> counter(d, 0);
  std::vector<double> point(d);
  std::vector<std::pair<double, std::vector<double>>> ranked;
  while (true) {
    for (std::size_t i = 0; i < d; ++i) {
      const double frac =
          m == 1 ? 0.0 : static_cast<double>(counter[i]) / static_cast<double>(m - 1);
      point[i] = problem.x0_lower[i] + frac * (problem.x0_upper[i] - problem.x0_lower[i]);
    }
    const double v = mbdoe_objective(problem, point);
    std::vector<double> row = point;
    row.push_back(v);
    outcome.landscape.push_back(std::move(row));
    if (std::isfinite(v)) ranked.push_back({v, point});

    std::size_t axis = 0;
    while (axis < d && ++counter[axis] == m) {
      counter[axis] = 0;
      ++axis;
    }
    if (axis == d) break;
    if (degenerate) break;
  }
  if (ranked.empty()) throw PipelineError("mbdoe::design: objective is -inf everywhere");

  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;  // deterministic order for ties
  });

  outcome.x0 = ranked.front().second;
  outcome.objective = ranked.front().first;
  if (degenerate) return outcome;

  const int starts = std::min<int>(problem.refine_starts, static_cast<int>(ranked.size()));
  for (int s = 0; s < starts; ++s) {
    auto [x, v] = maximize_compass([&](const std::vector<double>& p) {
      return mbdoe_objective(problem, p);
    }, ranked[static_cast<std::size_t>(s)].second, problem.x0_lower, problem.x0_upper,
        0.6 / static_cast<double>(m - 1), 1e-4);
    if (v > outcome.objective) {
      outcome.objective = v;
      outcome.x0 = x;
    }
  }
  return outcome;
}

}  // namespace kindisc

#endif  // KINDISC_MBDOE_HPP
