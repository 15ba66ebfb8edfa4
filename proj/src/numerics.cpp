#include "lfo/numerics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace lfo::numerics {

namespace {

void require_positive(double time_constant, const char* name) {
  if (!(time_constant > 0.0)) {
    throw InvalidTimeConstant(fmt::format("{} must be > 0 (got {})", name, time_constant));
  }
}

}  // namespace

void check_finite(std::span<const double> values, const char* stage) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NonFiniteDerivative(fmt::format("non-finite derivative at state {} ({} stage)", i, stage), i);
    }
  }
}

std::vector<double> heun_step(std::span<const double> state, const DerivativeFn& deriv_fn, double dt) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("heun_step: dt must be > 0");
  }
  const std::size_t n = state.size();
  std::vector<double> k1(n), k2(n), predicted(n), next(n);

  deriv_fn(state, k1);
  check_finite(k1, "predictor");
  for (std::size_t i = 0; i < n; ++i) predicted[i] = state[i] + dt * k1[i];

  deriv_fn(predicted, k2);
  check_finite(k2, "corrector");
  for (std::size_t i = 0; i < n; ++i) next[i] = state[i] + 0.5 * dt * (k1[i] + k2[i]);
  return next;
}

double first_order_lag_deriv(double input, double state, double time_constant) {
  require_positive(time_constant, "lag time constant");
  return (input - state) / time_constant;
}

double washout_output(double input, double state, double gain) { return gain * (input - state); }

double washout_deriv(double input, double state, double time_constant) {
  require_positive(time_constant, "washout time constant");
  return (input - state) / time_constant;
}

double washout_step(double input, BlockState& state, double gain, double time_constant, double dt) {
  require_positive(time_constant, "washout time constant");
  const double out = washout_output(input, state.value, gain);
  state.derivative = washout_deriv(input, state.value, time_constant);
  state.value = advance_lag(state.value, input, time_constant, dt);
  return out;
}

LeadLagOutput lead_lag_deriv(double input, double state, double t_lead, double t_lag) {
  require_positive(t_lag, "lead-lag denominator time constant");
  if (t_lead < 0.0) {
    throw InvalidTimeConstant(fmt::format("lead time constant must be >= 0 (got {})", t_lead));
  }
  const double dstate = (input - state) / t_lag;
  return {state + (t_lead / t_lag) * (input - state), dstate};
}

double deadband(double input, double width) {
  if (input > width) return input - width;
  if (input < -width) return input + width;
  return 0.0;
}

double limit(double value, Limits limits) { return std::clamp(value, limits.min, limits.max); }

double windup_guard(double derivative, double state, Limits limits) {
  if (state >= limits.max && derivative > 0.0) return 0.0;
  if (state <= limits.min && derivative < 0.0) return 0.0;
  return derivative;
}

double advance_lag(double state, double input, double time_constant, double dt) {
  const double k1 = (input - state) / time_constant;
  const double predicted = state + dt * k1;
  const double k2 = (input - predicted) / time_constant;
  return state + 0.5 * dt * (k1 + k2);
}

ComplexVector solve_linear_complex(const ComplexMatrix& a, const ComplexVector& b) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw std::invalid_argument("solve_linear_complex: matrix must be square and non-empty");
  }
  if (b.size() != a.rows()) {
    throw std::invalid_argument("solve_linear_complex: dimension mismatch");
  }
  Eigen::PartialPivLU<ComplexMatrix> lu(a);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14)) {
    throw SingularMatrix(fmt::format("matrix is singular (rcond estimate {:.3g})", rcond));
  }
  ComplexVector x = lu.solve(b);
  const double bnorm = b.cwiseAbs().maxCoeff();
  if (bnorm > 0.0) {
    const double residual = (a * x - b).cwiseAbs().maxCoeff() / bnorm;
    if (!(residual < 1e-10)) {
      throw SingularMatrix(fmt::format("residual {:.3g} too large; matrix near-singular", residual));
    }
  }
  return x;
}

double wrap_angle(double angle) {
  double wrapped = std::remainder(angle, 2.0 * kPi);
  if (wrapped <= -kPi) wrapped += 2.0 * kPi;
  return wrapped;
}

}  // namespace lfo::numerics
