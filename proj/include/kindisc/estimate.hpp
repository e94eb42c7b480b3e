// SPDX-License-Identifier: Apache-2.0
//
// Parameter refinement and model selection. Surrogates are fitted directly
// against (t, C) samples; rate models are fitted dynamically, i.e. against
// the concentration measurements reproduced by integrating
// dx/dt = nu * m(x | theta) from each experiment's initial condition. Both
// objectives carry the weighted constraint penalty. Candidates are compared
// by AIC = 2*NLL + 2*d_m on the data term alone.
//
// The negative log-likelihood is the concentrated Gaussian form with the
// noise variance profiled out; the simulator's sigma is deliberately never
// given to the estimator.

#ifndef KINDISC_ESTIMATE_HPP
#define KINDISC_ESTIMATE_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kindisc/common.hpp"
#include "kindisc/constraints.hpp"
#include "kindisc/dataset.hpp"
#include "kindisc/expression.hpp"
#include "kindisc/ode.hpp"
#include "kindisc/optimize.hpp"
#include "kindisc/rng.hpp"

namespace kindisc {

struct EstimateOptions {
  int restarts = 10;
  BfgsOptions bfgs{};           // gradient tolerance 1e-8, max 500 iterations
  DeOptions presearch{};        // evolutionary pre-search for dynamic fits
  bool use_presearch = true;    // only consulted by fit_rate_dynamic
  double ode_abs_tol = 1e-9;
  double ode_rel_tol = 1e-9;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct FitDiagnostics {
  int restarts = 0;
  int best_restart = -1;
  bool converged = false;
  double objective = kInf;  // SSE + weighted penalty at theta*
};

struct FitResult {
  ExpressionTree model;            // literal-promoted, contiguous parameter slots
  std::vector<double> parameters;  // theta*
  double sse = kInf;
  double penalty_total = kInf;
  PenaltyReport penalties;
  double nll = kInf;
  double aic = kInf;
  int parameter_dimension = 0;
  int sample_size = 0;
  FitDiagnostics diagnostics;

  bool failed() const { return !std::isfinite(aic); }
};

/// Concentrated Gaussian negative log-likelihood:
/// NLL = (n/2) * (ln(2*pi*SSE/n) + 1), with SSE floored at n*1e-12 so a
/// perfect fit stays finite.
inline double nll(double sse, int n) {
  if (n < 1) throw std::invalid_argument("nll: n must be >= 1");
  if (sse < 0.0) throw std::invalid_argument("nll: SSE must be >= 0");
  const double floored = std::max(sse, static_cast<double>(n) * 1e-12);
  const double two_pi = 6.283185307179586476925286766559;
  return 0.5 * static_cast<double>(n) *
         (std::log(two_pi * floored / static_cast<double>(n)) + 1.0);
}

inline double aic(double nll_value, int parameter_dimension) {
  return 2.0 * nll_value + 2.0 * static_cast<double>(parameter_dimension);
}

namespace detail {

struct MultistartOutcome {
  std::vector<double> x;
  double value = kInf;
  FitDiagnostics diagnostics;
};

/// Shared multistart driver. `objective_factory()` yields a fresh callable
/// (own scratch buffers) so restarts can run in parallel; restart r draws its
/// start from an rng seeded by mix(seed, r), which makes nested restart sets
/// reproducible and monotone in the restart count.
template <class ObjectiveFactory>
MultistartOutcome run_multistart(ObjectiveFactory&& objective_factory, std::size_t dim,
                                 std::optional<std::vector<double>> initial,
                                 const EstimateOptions& options, bool with_presearch) {
  MultistartOutcome outcome;
  if (dim == 0) {
    auto objective = objective_factory();
    std::vector<double> empty;
    outcome.x = empty;
    outcome.value = objective(empty);
    outcome.diagnostics.restarts = 1;
    outcome.diagnostics.best_restart = 0;
    outcome.diagnostics.converged = std::isfinite(outcome.value);
    outcome.diagnostics.objective = outcome.value;
    return outcome;
  }

  std::vector<std::vector<double>> starts;
  if (initial && initial->size() == dim) starts.push_back(*initial);
  if (with_presearch) {
    Rng de_rng(mix_seed(options.seed, 0xDEull));
    auto objective = objective_factory();
    auto ranked = de_presearch(objective, dim, options.presearch, de_rng);
    const std::size_t take = std::min<std::size_t>(3, ranked.size());
    for (std::size_t i = 0; i < take; ++i)
      if (std::isfinite(ranked[i].first)) starts.push_back(ranked[i].second);
  }
  const int total = std::max<int>(options.restarts, static_cast<int>(starts.size()));
  for (int r = static_cast<int>(starts.size()); r < total; ++r) {
    Rng rng(mix_seed(options.seed, static_cast<std::uint64_t>(r)));
    starts.push_back(restart_point(dim, r, rng));
  }

  std::vector<BfgsResult> results(starts.size());
  parallel_for(starts.size(), options.threads, [&](std::size_t r) {
    auto objective = objective_factory();
    results[r] = minimize_bfgs(objective, starts[r], options.bfgs);
  });

  outcome.diagnostics.restarts = static_cast<int>(starts.size());
  for (std::size_t r = 0; r < results.size(); ++r) {
    if (results[r].value < outcome.value) {
      outcome.value = results[r].value;
      outcome.x = results[r].x;
      outcome.diagnostics.best_restart = static_cast<int>(r);
      outcome.diagnostics.converged = results[r].converged;
    }
  }
  outcome.diagnostics.objective = outcome.value;
  return outcome;
}

inline FitResult finalize_fit(const ExpressionTree& model, MultistartOutcome&& outcome,
                              const std::function<double(std::span<const double>)>& sse_fn,
                              const ConstraintSpec& spec, int sample_size) {
  FitResult fit;
  fit.model = model;
  fit.parameter_dimension = parameter_count(fit.model);
  fit.sample_size = sample_size;
  fit.diagnostics = outcome.diagnostics;
  if (!std::isfinite(outcome.value)) return fit;  // fit-failed: AIC stays +inf
  fit.parameters = std::move(outcome.x);
  fit.sse = sse_fn(fit.parameters);
  fit.penalties = total_penalty(fit.model, fit.parameters, spec);
  fit.penalty_total = fit.penalties.total;
  if (!std::isfinite(fit.sse)) return fit;
  fit.nll = nll(fit.sse, sample_size);
  fit.aic = aic(fit.nll, fit.parameter_dimension);
  return fit;
}

}  // namespace detail

/// Fits a concentration surrogate (single variable: time) by minimizing
/// SSE + weighted penalties with multistart BFGS. Numeric literals in the
/// tree are promoted to parameter slots first, so every constant is tunable;
/// `theta0`, when given, seeds restart 0 alongside the literal values.
inline FitResult fit_surrogate(const ExpressionTree& tree, const FitData& data,
                               const ConstraintSpec& spec, const EstimateOptions& options = {},
                               std::span<const double> theta0 = {}) {
  data.validate();
  if (data.rows() == 0) throw std::invalid_argument("fit_surrogate: empty dataset");
  auto [model, init] = promote_literals(tree, theta0);
  const std::size_t dim = static_cast<std::size_t>(parameter_count(model));

  auto sse_fn = [&model = model, &data](std::span<const double> theta) {
    std::vector<double> scratch;
    double total = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i) {
      const double pred = evaluate(model, theta, data.inputs[i], scratch);
      if (!std::isfinite(pred)) return kInf;
      const double r = pred - data.targets[i];
      total += r * r;
    }
    return total;
  };

  auto factory = [&]() {
    return [&model = model, &data, &spec](std::span<const double> theta) {
      std::vector<double> scratch;
      double total = 0.0;
      for (std::size_t i = 0; i < data.rows(); ++i) {
        const double pred = evaluate(model, theta, data.inputs[i], scratch);
        if (!std::isfinite(pred)) return kInf;
        const double r = pred - data.targets[i];
        total += r * r;
      }
      const auto report = total_penalty(model, theta, spec);
      return total + report.total;
    };
  };

  auto outcome = detail::run_multistart(
      factory, dim, init.empty() ? std::nullopt : std::optional<std::vector<double>>(init),
      options, /*with_presearch=*/false);
  return detail::finalize_fit(model, std::move(outcome), sse_fn, spec,
                              static_cast<int>(data.rows()));
}

/// Dynamic parameter estimation for a rate model: theta* minimizes the
/// summed squared error between measured concentrations and the ODE
/// trajectories integrated from each experiment's initial condition, plus
/// penalties. Integration failure at a trial theta contributes +inf. An
/// evolutionary pre-search seeds the quasi-Newton restarts.
inline FitResult fit_rate_dynamic(const ExpressionTree& tree,
                                  const std::vector<ExperimentDataset>& experiments,
                                  const std::vector<double>& stoichiometry,
                                  const ConstraintSpec& spec, const EstimateOptions& options = {},
                                  std::span<const double> theta0 = {}) {
  if (experiments.empty()) throw std::invalid_argument("fit_rate_dynamic: zero experiments");
  for (const auto& e : experiments)
    if (e.times.empty() || e.initial_state.size() != stoichiometry.size())
      throw std::invalid_argument("fit_rate_dynamic: malformed experiment " + std::to_string(e.id));

  auto [model, init] = promote_literals(tree, theta0);
  const std::size_t dim = static_cast<std::size_t>(parameter_count(model));
  int sample_size = 0;
  for (const auto& e : experiments)
    sample_size += static_cast<int>(e.times.size() * e.species_count());

  auto sse_fn = [&model = model, &experiments, &stoichiometry,
                 &options](std::span<const double> theta) {
    double total = 0.0;
    for (const auto& e : experiments) {
      KineticRhs rhs(model, std::vector<double>(theta.begin(), theta.end()), stoichiometry);
      OdeResult sol = integrate_at_times(rhs, e.initial_state, e.times, options.ode_abs_tol,
                                         options.ode_rel_tol);
      if (!sol.ok) return kInf;
      for (std::size_t i = 0; i < e.times.size(); ++i)
        for (std::size_t s = 0; s < e.species_count(); ++s) {
          const double r = sol.states[i][s] - e.measurements[i][s];
          total += r * r;
        }
    }
    return total;
  };

  auto factory = [&]() {
    return [&model = model, &experiments, &stoichiometry, &spec,
            &options](std::span<const double> theta) {
      double total = 0.0;
      for (const auto& e : experiments) {
        KineticRhs rhs(model, std::vector<double>(theta.begin(), theta.end()), stoichiometry);
        OdeResult sol = integrate_at_times(rhs, e.initial_state, e.times, options.ode_abs_tol,
                                           options.ode_rel_tol);
        if (!sol.ok) return kInf;
        for (std::size_t i = 0; i < e.times.size(); ++i)
          for (std::size_t s = 0; s < e.species_count(); ++s) {
            const double r = sol.states[i][s] - e.measurements[i][s];
            total += r * r;
          }
      }
      const auto report = total_penalty(model, theta, spec);
      return total + report.total;
    };
  };

  auto outcome = detail::run_multistart(
      factory, dim, init.empty() ? std::nullopt : std::optional<std::vector<double>>(init),
      options, options.use_presearch);
  return detail::finalize_fit(model, std::move(outcome), sse_fn, spec, sample_size);
}

/// Minimum-AIC selection. Ties break toward smaller complexity, then by
/// canonical serialization order, so the result is deterministic under any
/// permutation of the input.
inline std::size_t select_by_aic(std::span<const FitResult> candidates) {
  std::size_t best = candidates.size();
  int best_complexity = 0;
  std::string best_text;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (!std::isfinite(c.aic)) continue;
    const int cx = complexity(c.model);
    if (best == candidates.size()) {
      best = i;
      best_complexity = cx;
      best_text = serialize(canonical(c.model));
      continue;
    }
    const auto& b = candidates[best];
    if (c.aic < b.aic) {
      best = i;
      best_complexity = cx;
      best_text = serialize(canonical(c.model));
    } else if (c.aic == b.aic) {
      const std::string text = serialize(canonical(c.model));
      if (cx < best_complexity || (cx == best_complexity && text < best_text)) {
        best = i;
        best_complexity = cx;
        best_text = text;
      }
    }
  }
  if (best == candidates.size())
    throw PipelineError("select_by_aic: no candidate with finite AIC");
  return best;
}

}  // namespace kindisc

#endif  // KINDISC_ESTIMATE_HPP
