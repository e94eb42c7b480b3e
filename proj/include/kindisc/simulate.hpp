// SPDX-License-Identifier: Apache-2.0
//
// In-silico laboratory: the three built-in batch-reactor case studies, exact
// trajectory integration of their ground-truth kinetics, and noisy sampling
// into experiment datasets.
//
// Stoichiometry convention: the case stores the signed coefficients nu_s of
// dC_s/dt = nu_s * r taken verbatim from the rate identities (for the
// nitrous-oxide system r = -2 dC_NO/dt = 2 dC_N/dt = dC_O/dt, i.e.
// nu = (-1/2, +1/2, +1)), so either sign convention is expressible in a
// custom case file.

#ifndef KINDISC_SIMULATE_HPP
#define KINDISC_SIMULATE_HPP

#include <cmath>
#include <string>
#include <vector>

#include "kindisc/common.hpp"
#include "kindisc/dataset.hpp"
#include "kindisc/expression.hpp"
#include "kindisc/ode.hpp"
#include "kindisc/rng.hpp"

namespace kindisc {

struct CaseStudy {
  std::string name;
  std::vector<std::string> species;       // variable identifiers, e.g. {"CNO","CN","CO"}
  ExpressionTree truth_rate;              // literals-only tree over the species variables
  std::vector<double> stoichiometry;      // nu_s in dC_s/dt = nu_s * r
  double t_start = 0.0;
  double t_final = 10.0;                  // [h]
  int sample_count = 15;
  double noise_std = 0.2;                 // [M]
  std::vector<std::vector<double>> designed_initial_conditions;
  std::vector<double> x0_lower, x0_upper;  // experiment-design box

  std::size_t species_count() const { return species.size(); }

  void validate() const {
    if (species.empty()) throw ConfigError("case.species", "at least one species required");
    if (stoichiometry.size() != species.size())
      throw ConfigError("case.stoichiometry", "one coefficient per species required");
    if (!(t_final > t_start)) throw ConfigError("case.horizon", "t_final must exceed t_start");
    if (sample_count < 2) throw ConfigError("case.sample_count", "need at least 2 samples");
    if (noise_std < 0.0) throw ConfigError("case.noise_std", "must be >= 0");
    if (designed_initial_conditions.empty())
      throw ConfigError("case.designed_initial_conditions", "at least one experiment required");
    for (std::size_t i = 0; i < designed_initial_conditions.size(); ++i) {
      if (designed_initial_conditions[i].size() != species.size())
        throw ConfigError("case.designed_initial_conditions[" + std::to_string(i) + "]",
                          "one value per species required");
      for (double v : designed_initial_conditions[i])
        if (v < 0.0)
          throw ConfigError("case.designed_initial_conditions[" + std::to_string(i) + "]",
                            "initial concentrations must be >= 0");
    }
    if (x0_lower.size() != species.size() || x0_upper.size() != species.size())
      throw ConfigError("case.x0_bounds", "one bound per species required");
    for (std::size_t s = 0; s < species.size(); ++s)
      if (x0_lower[s] > x0_upper[s])
        throw ConfigError("case.x0_bounds", "lower bound exceeds upper bound for " + species[s]);
    for (int v : referenced_variables(truth_rate))
      if (v < 0 || static_cast<std::size_t>(v) >= species.size())
        throw ConfigError("case.truth_rate", "rate law references an undeclared species");
  }
};

/// Uniform sample grid including both endpoints.
inline std::vector<double> uniform_grid(double t_start, double t_final, int count) {
  std::vector<double> grid(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    grid[static_cast<std::size_t>(i)] =
        t_start + (t_final - t_start) * static_cast<double>(i) / static_cast<double>(count - 1);
  return grid;
}

/// Exact (tight-tolerance) integration of the case's ground-truth kinetics.
inline OdeResult integrate_truth(const CaseStudy& cs, const std::vector<double>& x0,
                                 std::span<const double> grid, double tolerance = 1e-10) {
  KineticRhs rhs(cs.truth_rate, {}, cs.stoichiometry);
  return integrate_at_times(rhs, x0, grid, tolerance, tolerance);
}

/// Runs one experiment: integrate the truth on a uniform grid (t0 included;
/// initial conditions are known with minimal uncertainty) and add i.i.d.
/// Gaussian noise per measurement. Noise may drive values slightly negative;
/// they are not clipped - the discovery side must cope.
inline ExperimentDataset run_experiment(const CaseStudy& cs, const std::vector<double>& x0,
                                        int sample_count, double noise_std, Rng& rng,
                                        int experiment_id = 0,
                                        const std::string& provenance = "designed") {
  const auto grid = uniform_grid(cs.t_start, cs.t_final, sample_count);
  OdeResult truth = integrate_truth(cs, x0, grid);
  if (!truth.ok)
    throw PipelineError("truth integration failed for experiment " + std::to_string(experiment_id) +
                        ": " + truth.error);
  ExperimentDataset ds;
  ds.id = experiment_id;
  ds.initial_state = x0;
  ds.times = grid;
  ds.provenance = provenance;
  ds.measurements.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ds.measurements[i].resize(cs.species_count());
    for (std::size_t s = 0; s < cs.species_count(); ++s)
      ds.measurements[i][s] = truth.states[i][s] + rng.normal(0.0, noise_std);
  }
  return ds;
}

/// All designed experiments of a case, with per-experiment noise streams
/// derived from the master noise seed so a replay never depends on order.
inline std::vector<ExperimentDataset> run_designed_experiments(const CaseStudy& cs,
                                                               std::uint64_t noise_seed) {
  std::vector<ExperimentDataset> out;
  out.reserve(cs.designed_initial_conditions.size());
  for (std::size_t i = 0; i < cs.designed_initial_conditions.size(); ++i) {
    Rng rng(mix_seed(noise_seed, static_cast<std::uint64_t>(i)));
    out.push_back(run_experiment(cs, cs.designed_initial_conditions[i], cs.sample_count,
                                 cs.noise_std, rng, static_cast<int>(i) + 1, "designed"));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Built-in case studies
// ---------------------------------------------------------------------------

inline CaseStudy case_nitrous_oxide() {
  CaseStudy cs;
  cs.name = "nitrous_oxide";
  cs.species = {"CNO", "CN", "CO"};
  // r = kA*CNO^2 / (1 + kB*CNO), kA = 2 1/(M h), kB = 5 1/M
  cs.truth_rate = parse("(2*CNO*CNO)/(1+5*CNO)", cs.species);
  cs.stoichiometry = {-0.5, 0.5, 1.0};
  cs.designed_initial_conditions = {
      {5, 0, 0}, {10, 0, 0}, {5, 2, 0}, {5, 0, 3}, {0, 2, 3}};
  cs.x0_lower = {0, 0, 0};
  cs.x0_upper = {10, 2, 3};
  return cs;
}

inline CaseStudy case_toluene_hydrodealkylation() {
  CaseStudy cs;
  cs.name = "toluene_hydrodealkylation";
  cs.species = {"CT", "CH", "CB", "CM"};
  // r = kA*CT*CH / (1 + KB*CB + KC*CT), kA = 2 1/(M h), KB = 9 1/M, KC = 5 1/M
  cs.truth_rate = parse("(2*CT*CH)/(1+9*CB+5*CT)", cs.species);
  cs.stoichiometry = {-1.0, -1.0, 1.0, 1.0};
  cs.designed_initial_conditions = {
      {1, 8, 2, 3}, {5, 8, 0, 0.5}, {5, 3, 0, 0.5}, {1, 3, 0, 3}, {1, 8, 2, 0.5}};
  cs.x0_lower = {1, 3, 0, 0.5};
  cs.x0_upper = {5, 8, 2, 3};
  return cs;
}

inline CaseStudy case_isomerization() {
  CaseStudy cs;
  cs.name = "isomerization";
  cs.species = {"CA", "CB"};
  // r = (kA*CA - kB*CB) / (kC*CA + kD*CB + kE)
  // kA = 7 M/h^2, kB = 3 M/h^2, kC = 4 1/h, kD = 2 1/h, kE = 6 M/h
  cs.truth_rate = parse("(7*CA-3*CB)/(4*CA+2*CB+6)", cs.species);
  cs.stoichiometry = {-1.0, 1.0};
  cs.designed_initial_conditions = {{2, 0}, {10, 0}, {2, 2}, {10, 2}, {10, 1}};
  cs.x0_lower = {2, 0};
  cs.x0_upper = {10, 2};
  return cs;
}

inline CaseStudy builtin_case(const std::string& name) {
  if (name == "nitrous_oxide") return case_nitrous_oxide();
  if (name == "toluene_hydrodealkylation") return case_toluene_hydrodealkylation();
  if (name == "isomerization") return case_isomerization();
  throw ConfigError("case", "unknown built-in case study '" + name +
                                "' (expected nitrous_oxide, toluene_hydrodealkylation or "
                                "isomerization)");
}

/// Orthonormal basis of { w : w . nu = 0 }. Every such combination w . C(t)
/// is conserved along noiseless trajectories.
inline std::vector<std::vector<double>> conservation_basis(const std::vector<double>& nu) {
  const std::size_t n = nu.size();
  std::vector<std::vector<double>> basis;
  double norm2 = 0.0;
  for (double v : nu) norm2 += v * v;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> w(n, 0.0);
    w[i] = 1.0;
    if (norm2 > 0.0) {
      const double proj = nu[i] / norm2;
      for (std::size_t j = 0; j < n; ++j) w[j] -= proj * nu[j];
    }
    // Gram-Schmidt against previously accepted directions.
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += w[j] * b[j];
      for (std::size_t j = 0; j < n; ++j) w[j] -= dot * b[j];
    }
    double wnorm = 0.0;
    for (double v : w) wnorm += v * v;
    if (wnorm > 1e-12) {
      wnorm = std::sqrt(wnorm);
      for (double& v : w) v /= wnorm;
      basis.push_back(std::move(w));
    }
  }
  return basis;
}

}  // namespace kindisc

#endif  // KINDISC_SIMULATE_HPP
