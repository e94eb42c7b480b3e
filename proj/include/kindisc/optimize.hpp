// SPDX-License-Identifier: Apache-2.0
//
// Local and global optimization building blocks: dense BFGS with numerical
// gradients and backtracking line search, a small differential-evolution
// pre-search, and a bounded compass (pattern) search for derivative-free
// maximization. All routines are deterministic given their inputs and seeds
// and treat +inf objective values as "reject and back off".

#ifndef KINDISC_OPTIMIZE_HPP
#define KINDISC_OPTIMIZE_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "kindisc/common.hpp"
#include "kindisc/rng.hpp"

namespace kindisc {

struct BfgsOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-8;  // infinity norm
  double fd_step = 1e-6;             // relative central-difference step
  double initial_step = 1.0;
};

struct BfgsResult {
  std::vector<double> x;
  double value = kInf;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

template <class F>
bool numeric_gradient(F&& f, const std::vector<double>& x, double fx, double rel_step,
                      std::vector<double>& grad) {
  const std::size_t d = x.size();
  grad.assign(d, 0.0);
  std::vector<double> probe = x;
  for (std::size_t i = 0; i < d; ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    if (std::isfinite(fp) && std::isfinite(fm)) {
      grad[i] = (fp - fm) / (2.0 * h);
    } else if (std::isfinite(fp)) {
      grad[i] = (fp - fx) / h;
    } else if (std::isfinite(fm)) {
      grad[i] = (fx - fm) / h;
    } else {
      return false;
    }
  }
  return true;
}

}  // namespace detail

/// Quasi-Newton minimization with a dense inverse-Hessian update and Armijo
/// backtracking. Stops when the gradient infinity norm drops below the
/// tolerance or the iteration cap is hit.
template <class F>
BfgsResult minimize_bfgs(F&& f, std::vector<double> x0, const BfgsOptions& options = {}) {
  const std::size_t d = x0.size();
  BfgsResult result;
  result.x = std::move(x0);
  result.value = f(result.x);
  if (!std::isfinite(result.value) || d == 0) return result;

  // Inverse Hessian approximation, row-major.
  std::vector<double> hess(d * d, 0.0);
  auto reset_hessian = [&] {
    std::fill(hess.begin(), hess.end(), 0.0);
    for (std::size_t i = 0; i < d; ++i) hess[i * d + i] = 1.0;
  };
  reset_hessian();

  std::vector<double> grad(d), dir(d), x_new(d), grad_new(d), s(d), y(d), hy(d);
  if (!detail::numeric_gradient(f, result.x, result.value, options.fd_step, grad)) return result;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter;
    double gnorm = 0.0;
    for (double g : grad) gnorm = std::max(gnorm, std::abs(g));
    if (gnorm <= options.gradient_tolerance) {
      result.converged = true;
      return result;
    }

    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += hess[i * d + j] * grad[j];
      dir[i] = -acc;
    }
    double descent = 0.0;
    for (std::size_t i = 0; i < d; ++i) descent += dir[i] * grad[i];
    if (!(descent < 0.0)) {
      reset_hessian();
      for (std::size_t i = 0; i < d; ++i) dir[i] = -grad[i];
      descent = 0.0;
      for (std::size_t i = 0; i < d; ++i) descent += dir[i] * grad[i];
      if (!(descent < 0.0)) return result;
    }

    // Armijo backtracking.
    double step = options.initial_step;
    double f_new = kInf;
    bool accepted = false;
    for (int ls = 0; ls < 48; ++ls) {
      for (std::size_t i = 0; i < d; ++i) x_new[i] = result.x[i] + step * dir[i];
      f_new = f(x_new);
      if (std::isfinite(f_new) && f_new <= result.value + 1e-4 * step * descent) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) return result;  // no further progress possible

    if (!detail::numeric_gradient(f, x_new, f_new, options.fd_step, grad_new)) {
      result.x = x_new;
      result.value = f_new;
      return result;
    }

    double sy = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      s[i] = x_new[i] - result.x[i];
      y[i] = grad_new[i] - grad[i];
      sy += s[i] * y[i];
    }
    result.x = x_new;
    result.value = f_new;
    grad = grad_new;

    if (sy > 1e-12) {
      // BFGS inverse update: H <- (I - s y^T / sy) H (I - y s^T / sy) + s s^T / sy
      const double rho = 1.0 / sy;
      for (std::size_t i = 0; i < d; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += hess[i * d + j] * y[j];
        hy[i] = acc;
      }
      double yhy = 0.0;
      for (std::size_t i = 0; i < d; ++i) yhy += y[i] * hy[i];
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          hess[i * d + j] += rho * rho * (1.0 / rho + yhy) * s[i] * s[j] -
                             rho * (hy[i] * s[j] + s[i] * hy[j]);
    } else {
      reset_hessian();
    }
  }
  result.iterations = options.max_iterations;
  return result;
}

/// Draws a restart point: even indices use log-uniform magnitudes in
/// [1e-2, 1e2] (positive-scale parameters such as kinetic constants), odd
/// indices use uniform [-10, 10]. Which slots are positive-scale is unknowable
/// a priori, so restarts alternate between the two schemes.
inline std::vector<double> restart_point(std::size_t dim, int restart_index, Rng& rng) {
  std::vector<double> x(dim);
  const bool log_scale = (restart_index % 2) == 0;
  for (auto& v : x)
    v = log_scale ? rng.log_uniform(1e-2, 1e2) : rng.uniform(-10.0, 10.0);
  return x;
}

struct DeOptions {
  int population = 16;
  int generations = 20;
  double crossover = 0.9;
  double weight = 0.7;
};

/// Differential evolution (rand/1/bin) returning the final population sorted
/// by objective, best first. Used as a global pre-search whose leaders seed
/// the quasi-Newton restarts.
template <class F>
std::vector<std::pair<double, std::vector<double>>> de_presearch(F&& f, std::size_t dim,
                                                                 const DeOptions& options,
                                                                 Rng& rng) {
  const int np = std::max(4, options.population);
  std::vector<std::vector<double>> pop(static_cast<std::size_t>(np));
  std::vector<double> score(static_cast<std::size_t>(np), kInf);
  for (int i = 0; i < np; ++i) {
    pop[static_cast<std::size_t>(i)] = restart_point(dim, i, rng);
    score[static_cast<std::size_t>(i)] = f(pop[static_cast<std::size_t>(i)]);
  }
  std::vector<double> trial(dim);
  for (int gen = 0; gen < options.generations; ++gen) {
    for (int i = 0; i < np; ++i) {
      const auto a = rng.index(static_cast<std::size_t>(np));
      const auto b = rng.index(static_cast<std::size_t>(np));
      const auto c = rng.index(static_cast<std::size_t>(np));
      const std::size_t forced = rng.index(dim);
      for (std::size_t j = 0; j < dim; ++j) {
        if (j == forced || rng.bernoulli(options.crossover))
          trial[j] = pop[a][j] + options.weight * (pop[b][j] - pop[c][j]);
        else
          trial[j] = pop[static_cast<std::size_t>(i)][j];
      }
      const double fv = f(trial);
      if (fv < score[static_cast<std::size_t>(i)]) {
        pop[static_cast<std::size_t>(i)] = trial;
        score[static_cast<std::size_t>(i)] = fv;
      }
    }
  }
  std::vector<std::pair<double, std::vector<double>>> out;
  out.reserve(static_cast<std::size_t>(np));
  for (int i = 0; i < np; ++i)
    out.push_back({score[static_cast<std::size_t>(i)], pop[static_cast<std::size_t>(i)]});
  std::sort(out.begin(), out.end(),
            [](const auto& l, const auto& r) { return l.first < r.first; });
  return out;
}

/// Bounded derivative-free maximization by compass search with step halving.
/// Returns the best point found, clipped to the box. -inf objective values
/// mark rejected candidates.
template <class F>
std::pair<std::vector<double>, double> maximize_compass(F&& f, std::vector<double> x,
                                                        std::span<const double> lower,
                                                        std::span<const double> upper,
                                                        double initial_step_fraction = 0.1,
                                                        double min_step_fraction = 1e-4) {
  const std::size_t d = x.size();
  for (std::size_t i = 0; i < d; ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
  double best = f(x);
  std::vector<double> step(d);
  for (std::size_t i = 0; i < d; ++i) step[i] = initial_step_fraction * (upper[i] - lower[i]);
  std::vector<double> probe = x;

  bool any_axis_active = false;
  for (std::size_t i = 0; i < d; ++i) any_axis_active = any_axis_active || step[i] > 0.0;
  if (!any_axis_active) return {x, best};

  while (true) {
    bool improved = false;
    for (std::size_t i = 0; i < d; ++i) {
      if (step[i] <= 0.0) continue;
      for (double dir : {+1.0, -1.0}) {
        probe = x;
        probe[i] = std::clamp(x[i] + dir * step[i], lower[i], upper[i]);
        if (probe[i] == x[i]) continue;
        const double v = f(probe);
        if (v > best) {
          best = v;
          x = probe;
          improved = true;
        }
      }
    }
    if (!improved) {
      bool can_shrink = false;
      for (std::size_t i = 0; i < d; ++i) {
        step[i] *= 0.5;
        if (step[i] > min_step_fraction * (upper[i] - lower[i])) can_shrink = true;
      }
      if (!can_shrink) break;
    }
  }
  return {x, best};
}

}  // namespace kindisc

#endif  // KINDISC_OPTIMIZE_HPP
