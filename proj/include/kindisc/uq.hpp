// SPDX-License-Identifier: Apache-2.0
//
// Metropolis-Hastings posterior sampling over the selected model's kinetic
// parameters, and propagation of the samples to trajectory credible bands.
//
// The likelihood is L(theta) = exp(-SSE(theta)/2) with no noise-variance
// term; the prior (Gaussian, centred on the dynamic-fit optimum) absorbs
// scale. Proposals are Gaussian with per-parameter standard deviations
// (parameters span different units), and every proposal is clamped
// componentwise to theta' = max(theta', 0) before evaluation. The clamp
// technically biases the kernel at the boundary; it is kept as specified.

#ifndef KINDISC_UQ_HPP
#define KINDISC_UQ_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "kindisc/common.hpp"
#include "kindisc/dataset.hpp"
#include "kindisc/expression.hpp"
#include "kindisc/ode.hpp"
#include "kindisc/rng.hpp"

namespace kindisc {

struct MHConfig {
  int iterations = 50000;        // recorded (frozen-kernel) proposals
  double proposal_scale = 0.1;   // initial sigma_prop = scale * max(|theta*|, floor)
  double proposal_floor = 0.05;
  double prior_rel_std = 0.25;   // prior std = rel * |theta*|, floored
  double prior_std_floor = 0.1;
  double burn_in_fraction = 0.2;
  int thinning = 5;
  double accept_low = 0.40;  // target acceptance window
  double accept_high = 0.50;
  int tuning_proposals = 2000;
  int tuning_window = 100;
  double tuning_factor = 1.5;
  std::uint64_t seed = 0;
  double ode_abs_tol = 1e-8;
  double ode_rel_tol = 1e-8;
  int propagate_draws = 200;
  int band_k = 3;

  void validate() const {
    if (iterations < 10) throw ConfigError("mh.iterations", "must be >= 10");
    if (burn_in_fraction < 0.0 || burn_in_fraction > 0.5)
      throw ConfigError("mh.burn_in_fraction", "must lie in [0, 0.5]");
    if (thinning < 1) throw ConfigError("mh.thinning", "must be >= 1");
    if (!(accept_low < accept_high))
      throw ConfigError("mh.acceptance_window", "low bound must be below high bound");
    if (tuning_window < 1 || tuning_proposals < 0)
      throw ConfigError("mh.tuning", "invalid tuning phase");
    if (!(tuning_factor > 1.0)) throw ConfigError("mh.tuning_factor", "must exceed 1");
    if (!(proposal_scale > 0.0) || !(proposal_floor > 0.0))
      throw ConfigError("mh.proposal", "proposal scale and floor must be positive");
    if (band_k < 1 || band_k > 3) throw ConfigError("mh.band_k", "must be 1, 2 or 3");
    if (propagate_draws < 1) throw ConfigError("mh.propagate_draws", "must be >= 1");
  }
};

struct GaussianPrior {
  std::vector<double> mean;
  std::vector<double> std_dev;  // diagonal covariance

  static GaussianPrior around(const std::vector<double>& theta_star, double rel_std,
                              double floor) {
    GaussianPrior prior;
    prior.mean = theta_star;
    prior.std_dev.reserve(theta_star.size());
    for (double v : theta_star)
      prior.std_dev.push_back(std::max(rel_std * std::abs(v), floor));
    return prior;
  }

  double log_density(std::span<const double> theta) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double z = (theta[i] - mean[i]) / std_dev[i];
      acc -= 0.5 * z * z;
    }
    return acc;  // up to an additive constant, which cancels in MH ratios
  }
};

struct TuningStep {
  int window_end = 0;          // proposals consumed when the window closed
  double window_acceptance = 0.0;
  double scale_multiplier = 1.0;  // proposal std multiplier after this window
};

struct MHDiagnostics {
  double acceptance_rate = 0.0;  // frozen phase only
  bool tuned_within_budget = false;
  int tuning_proposals_used = 0;
  std::vector<double> frozen_proposal_std;
  std::vector<TuningStep> tuning_trace;
  std::vector<double> lag1_autocorrelation;  // per parameter, kept chain
};

struct PosteriorSampleSet {
  std::vector<std::vector<double>> chain;  // full frozen-phase chain states
  std::vector<bool> accepted;              // per frozen-phase proposal
  std::vector<std::vector<double>> kept;   // post burn-in, thinned
  std::vector<double> mode, mean, std_dev;  // per-parameter summaries of kept
  MHDiagnostics diagnostics;
};

/// Unnormalized log posterior of a kinetic rate model:
/// -SSE(theta)/2 + log p_prior(theta), with SSE the concentration-space
/// residual over all experiments (same residual as the dynamic fit, penalties
/// excluded). Integration failure yields -inf so the sample is rejected.
inline double log_target(const ExpressionTree& model, std::span<const double> theta,
                         const std::vector<ExperimentDataset>& experiments,
                         const std::vector<double>& stoichiometry, const GaussianPrior& prior,
                         double abs_tol = 1e-8, double rel_tol = 1e-8) {
  double sse = 0.0;
  for (const auto& e : experiments) {
    KineticRhs rhs(model, std::vector<double>(theta.begin(), theta.end()), stoichiometry);
    const OdeResult sol = integrate_at_times(rhs, e.initial_state, e.times, abs_tol, rel_tol);
    if (!sol.ok) return -kInf;
    for (std::size_t i = 0; i < e.times.size(); ++i)
      for (std::size_t s = 0; s < e.species_count(); ++s) {
        const double r = sol.states[i][s] - e.measurements[i][s];
        sse += r * r;
      }
  }
  return -0.5 * sse + prior.log_density(theta);
}

namespace uq_detail {

inline std::vector<double> histogram_mode(const std::vector<std::vector<double>>& kept,
                                          std::size_t dim) {
  constexpr int kBins = 64;
  std::vector<double> modes(dim, 0.0);
  for (std::size_t p = 0; p < dim; ++p) {
    double lo = kInf, hi = -kInf;
    for (const auto& row : kept) {
      lo = std::min(lo, row[p]);
      hi = std::max(hi, row[p]);
    }
    if (!(hi > lo)) {
      modes[p] = lo;
      continue;
    }
    std::vector<int> counts(kBins, 0);
    for (const auto& row : kept) {
      int b = static_cast<int>((row[p] - lo) / (hi - lo) * kBins);
      b = std::clamp(b, 0, kBins - 1);
      ++counts[static_cast<std::size_t>(b)];
    }
    int best = 0;
    for (int b = 1; b < kBins; ++b)
      if (counts[static_cast<std::size_t>(b)] > counts[static_cast<std::size_t>(best)]) best = b;
    modes[p] = lo + (static_cast<double>(best) + 0.5) * (hi - lo) / kBins;
  }
  return modes;
}

}  // namespace uq_detail

/// Random-walk Metropolis-Hastings over an arbitrary log target with the
/// non-negativity clamp. A tuning phase rescales the proposal stds in
/// windowed steps until the window acceptance lands in the target range (or
/// the budget runs out, in which case the closest achieved setting is used);
/// the recorded chain then runs with the frozen kernel only.
template <class LogTarget>
PosteriorSampleSet sample_target(LogTarget&& target, std::vector<double> theta0,
                                 std::vector<double> proposal_std, const MHConfig& cfg) {
  cfg.validate();
  const std::size_t dim = theta0.size();
  if (dim == 0) throw std::invalid_argument("sample_target: model has no parameters");

  Rng rng(mix_seed(cfg.seed, 0x3cull));
  PosteriorSampleSet set;

  std::vector<double> theta = theta0;
  for (double& v : theta) v = std::max(v, 0.0);
  double current = target(std::span<const double>(theta));
  std::vector<double> proposal(dim);

  auto mh_step = [&](double scale_mult) -> bool {
    for (std::size_t i = 0; i < dim; ++i)
      proposal[i] = std::max(rng.normal(theta[i], scale_mult * proposal_std[i]), 0.0);
    const double proposed = target(std::span<const double>(proposal));
    const double log_a = proposed - current;
    const double u = rng.uniform01();
    if (log_a >= 0.0 || u < std::exp(log_a)) {
      theta = proposal;
      current = proposed;
      return true;
    }
    return false;
  };

  // Tuning phase: fixed multiplicative schedule on a shared multiplier.
  double scale = 1.0;
  double best_scale = 1.0;
  double best_gap = kInf;
  const double mid = 0.5 * (cfg.accept_low + cfg.accept_high);
  bool in_window = false;
  int used = 0;
  while (used < cfg.tuning_proposals && !in_window) {
    int accepted = 0;
    const int window = std::min(cfg.tuning_window, cfg.tuning_proposals - used);
    if (window <= 0) break;
    for (int i = 0; i < window; ++i)
      if (mh_step(scale)) ++accepted;
    used += window;
    const double rate = static_cast<double>(accepted) / window;
    const double gap = std::abs(rate - mid);
    if (gap < best_gap) {
      best_gap = gap;
      best_scale = scale;
    }
    if (rate >= cfg.accept_low && rate <= cfg.accept_high) {
      in_window = true;
    } else if (rate > cfg.accept_high) {
      scale *= cfg.tuning_factor;  // too timid, lengthen steps
    } else {
      scale /= cfg.tuning_factor;
    }
    set.diagnostics.tuning_trace.push_back({used, rate, scale});
  }
  if (!in_window) scale = best_scale;
  set.diagnostics.tuned_within_budget = in_window || cfg.tuning_proposals == 0;
  set.diagnostics.tuning_proposals_used = used;
  set.diagnostics.frozen_proposal_std.resize(dim);
  for (std::size_t i = 0; i < dim; ++i)
    set.diagnostics.frozen_proposal_std[i] = scale * proposal_std[i];

  // Frozen phase: the recorded chain uses the fixed kernel only.
  set.chain.reserve(static_cast<std::size_t>(cfg.iterations));
  set.accepted.reserve(static_cast<std::size_t>(cfg.iterations));
  int accepted_total = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    const bool acc = mh_step(scale);
    accepted_total += acc ? 1 : 0;
    set.chain.push_back(theta);
    set.accepted.push_back(acc);
  }
  set.diagnostics.acceptance_rate = static_cast<double>(accepted_total) / cfg.iterations;

  const std::size_t burn =
      static_cast<std::size_t>(cfg.burn_in_fraction * static_cast<double>(set.chain.size()));
  for (std::size_t i = burn; i < set.chain.size(); i += static_cast<std::size_t>(cfg.thinning))
    set.kept.push_back(set.chain[i]);

  // Summaries.
  set.mean.assign(dim, 0.0);
  set.std_dev.assign(dim, 0.0);
  for (const auto& row : set.kept)
    for (std::size_t p = 0; p < dim; ++p) set.mean[p] += row[p];
  for (double& m : set.mean) m /= static_cast<double>(set.kept.size());
  if (set.kept.size() > 1) {
    for (const auto& row : set.kept)
      for (std::size_t p = 0; p < dim; ++p) {
        const double d = row[p] - set.mean[p];
        set.std_dev[p] += d * d;
      }
    for (double& s : set.std_dev) s = std::sqrt(s / static_cast<double>(set.kept.size() - 1));
  }
  set.mode = uq_detail::histogram_mode(set.kept, dim);

  set.diagnostics.lag1_autocorrelation.assign(dim, 0.0);
  if (set.kept.size() > 2) {
    for (std::size_t p = 0; p < dim; ++p) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < set.kept.size(); ++i) {
        const double d = set.kept[i][p] - set.mean[p];
        den += d * d;
        if (i + 1 < set.kept.size()) num += d * (set.kept[i + 1][p] - set.mean[p]);
      }
      set.diagnostics.lag1_autocorrelation[p] = den > 0.0 ? num / den : 0.0;
    }
  }
  return set;
}

/// Posterior sampling for a kinetic model: prior mean = theta_star from the
/// dynamic fit, per-parameter proposal stds scaled by |theta_star|.
inline PosteriorSampleSet sample(const ExpressionTree& model,
                                 const std::vector<ExperimentDataset>& experiments,
                                 const std::vector<double>& stoichiometry,
                                 const std::vector<double>& theta_star, const MHConfig& cfg) {
  if (theta_star.empty()) throw std::invalid_argument("uq::sample: model has no parameters");
  const GaussianPrior prior =
      GaussianPrior::around(theta_star, cfg.prior_rel_std, cfg.prior_std_floor);
  std::vector<double> proposal_std(theta_star.size());
  for (std::size_t i = 0; i < theta_star.size(); ++i)
    proposal_std[i] = cfg.proposal_scale * std::max(std::abs(theta_star[i]), cfg.proposal_floor);
  auto target = [&](std::span<const double> theta) {
    return log_target(model, theta, experiments, stoichiometry, prior, cfg.ode_abs_tol,
                      cfg.ode_rel_tol);
  };
  return sample_target(target, theta_star, proposal_std, cfg);
}

struct BandRow {
  int experiment_id = 0;
  double time = 0.0;
  int species = 0;
  double mean = 0.0;
  double std_dev = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct PredictionBands {
  int band_k = 3;
  std::vector<BandRow> rows;
};

/// Integrates the model under a strided subset of the posterior draws for
/// every experiment and returns per-time per-species mean +/- k*std envelopes.
inline PredictionBands propagate(const ExpressionTree& model,
                                 const std::vector<std::vector<double>>& samples,
                                 const std::vector<ExperimentDataset>& experiments,
                                 const std::vector<double>& stoichiometry, int band_k,
                                 int max_draws = 200, double abs_tol = 1e-8,
                                 double rel_tol = 1e-8) {
  if (samples.empty()) throw std::invalid_argument("uq::propagate: no posterior samples");
  std::vector<std::size_t> draw_indices;
  if (samples.size() <= static_cast<std::size_t>(max_draws)) {
    for (std::size_t i = 0; i < samples.size(); ++i) draw_indices.push_back(i);
  } else {
    const double stride = static_cast<double>(samples.size()) / max_draws;
    for (int k = 0; k < max_draws; ++k)
      draw_indices.push_back(static_cast<std::size_t>(k * stride));
  }

  PredictionBands bands;
  bands.band_k = band_k;
  for (const auto& e : experiments) {
    const std::size_t nt = e.times.size();
    const std::size_t ns = e.species_count();
    std::vector<double> acc(nt * ns, 0.0), acc2(nt * ns, 0.0);
    int ok_draws = 0;
    for (const std::size_t di : draw_indices) {
      KineticRhs rhs(model, samples[di], stoichiometry);
      const OdeResult sol = integrate_at_times(rhs, e.initial_state, e.times, abs_tol, rel_tol);
      if (!sol.ok) continue;
      ++ok_draws;
      for (std::size_t i = 0; i < nt; ++i)
        for (std::size_t s = 0; s < ns; ++s) {
          const double v = sol.states[i][s];
          acc[i * ns + s] += v;
          acc2[i * ns + s] += v * v;
        }
    }
    if (ok_draws == 0)
      throw PipelineError("uq::propagate: every posterior draw failed to integrate experiment " +
                          std::to_string(e.id));
    for (std::size_t i = 0; i < nt; ++i)
      for (std::size_t s = 0; s < ns; ++s) {
        BandRow row;
        row.experiment_id = e.id;
        row.time = e.times[i];
        row.species = static_cast<int>(s);
        row.mean = acc[i * ns + s] / ok_draws;
        const double var =
            std::max(0.0, acc2[i * ns + s] / ok_draws - row.mean * row.mean);
        row.std_dev = std::sqrt(var);
        row.lo = row.mean - band_k * row.std_dev;
        row.hi = row.mean + band_k * row.std_dev;
        bands.rows.push_back(row);
      }
  }
  return bands;
}

}  // namespace kindisc

#endif  // KINDISC_UQ_HPP
