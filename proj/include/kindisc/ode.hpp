// SPDX-License-Identifier: Apache-2.0
//
// Adaptive Runge-Kutta integration on a fixed output grid, backed by
// boost::numeric::odeint (Cash-Karp 5(4) with step-size control). Failures
// (non-finite state, unbounded blow-up, step-size collapse) are reported as
// a status instead of propagating exceptions, because candidate rate models
// routinely produce unintegrable dynamics.

#ifndef KINDISC_ODE_HPP
#define KINDISC_ODE_HPP

#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "kindisc/common.hpp"
#include "kindisc/expression.hpp"

namespace kindisc {

using StateVector = std::vector<double>;

struct OdeResult {
  bool ok = false;
  std::vector<StateVector> states;  // one row per requested time
  double failure_time = 0.0;
  std::string error;
};

namespace detail {

struct OdeBlowup : std::runtime_error {
  explicit OdeBlowup(double t)
      : std::runtime_error("non-finite or unbounded state at t=" + format_double(t)), time(t) {}
  double time;
};

}  // namespace detail

/// Integrates dx/dt = rhs(x, dxdt, t) from x0, observing the state at every
/// entry of `times` (strictly increasing, times[0] is the initial time).
template <class Rhs>
OdeResult integrate_at_times(Rhs&& rhs, const StateVector& x0, std::span<const double> times,
                             double abs_tol = 1e-8, double rel_tol = 1e-8) {
  namespace ode = boost::numeric::odeint;
  OdeResult result;
  if (times.size() < 1) {
    result.error = "empty time grid";
    return result;
  }
  result.states.reserve(times.size());

  auto guarded_rhs = [&rhs](const StateVector& x, StateVector& dxdt, double t) {
    for (double v : x)
      if (!std::isfinite(v) || std::abs(v) > 1e12) throw detail::OdeBlowup(t);
    rhs(x, dxdt, t);
    for (double v : dxdt)
      if (!std::isfinite(v)) throw detail::OdeBlowup(t);
  };

  StateVector state = x0;
  auto stepper = ode::make_controlled<ode::runge_kutta_cash_karp54<StateVector>>(abs_tol, rel_tol);
  double last_time = times[0];
  try {
    ode::integrate_times(stepper, guarded_rhs, state, times.begin(), times.end(),
                         1e-4 * std::max(1e-12, times.back() - times.front()),
                         [&](const StateVector& x, double t) {
                           result.states.push_back(x);
                           last_time = t;
                         });
  } catch (const detail::OdeBlowup& e) {
    result.failure_time = e.time;
    result.error = e.what();
    return result;
  } catch (const std::exception& e) {
    // odeint throws std::overflow_error when the controlled step collapses.
    result.failure_time = last_time;
    result.error = std::string("integrator step failure near t=") + format_double(last_time) +
                   ": " + e.what();
    return result;
  }
  result.ok = true;
  return result;
}

/// Right-hand side for a single-reaction kinetic system: dC_s/dt = nu_s *
/// r(C) with a non-negativity projection. The rate is evaluated at the
/// clamped state and a species sitting at (or noise-pushed below) zero is
/// never driven further negative.
class KineticRhs {
public:
  KineticRhs(const ExpressionTree& rate, std::vector<double> theta, std::vector<double> stoichiometry)
      : rate_(rate), theta_(std::move(theta)), stoichiometry_(std::move(stoichiometry)) {}

  void operator()(const StateVector& x, StateVector& dxdt, double /*t*/) const {
    clamped_.assign(x.begin(), x.end());
    for (double& v : clamped_) v = std::max(v, 0.0);
    const double r = evaluate(rate_, theta_, clamped_, scratch_);
    dxdt.resize(x.size());
    for (std::size_t s = 0; s < x.size(); ++s) {
      double d = stoichiometry_[s] * r;
      if (x[s] <= 0.0 && d < 0.0) d = 0.0;
      dxdt[s] = d;
    }
  }

private:
  const ExpressionTree& rate_;
  std::vector<double> theta_;
  std::vector<double> stoichiometry_;
  mutable std::vector<double> clamped_;
  mutable std::vector<double> scratch_;
};

}  // namespace kindisc

#endif  // KINDISC_ODE_HPP
