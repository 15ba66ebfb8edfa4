#pragma once

#include <complex>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lfo {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

inline constexpr double kPi = 3.14159265358979323846;
/// Synchronous speed at 60 Hz, rad/s.
inline constexpr double kOmegaSync = 2.0 * kPi * 60.0;

class InvalidTimeConstant : public std::invalid_argument {
 public:
  explicit InvalidTimeConstant(const std::string& what) : std::invalid_argument(what) {}
};

class NonFiniteDerivative : public std::runtime_error {
 public:
  NonFiniteDerivative(const std::string& what, std::size_t index)
      : std::runtime_error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class SingularMatrix : public std::runtime_error {
 public:
  explicit SingularMatrix(const std::string& what) : std::runtime_error(what) {}
};

namespace numerics {

/// Output/internal value of a scalar control block plus its time derivative.
struct BlockState {
  double value{0.0};
  double derivative{0.0};
};

struct Limits {
  double min{-1e30};
  double max{1e30};
};

/// Evaluates dx/dt into the second argument. Must be total over the state domain.
using DerivativeFn = std::function<void(std::span<const double>, std::span<double>)>;

/// Predictor-corrector (Heun) step: x* = x + dt f(x); x+ = x + dt/2 (f(x) + f(x*)).
/// Throws NonFiniteDerivative if either stage yields NaN/Inf.
std::vector<double> heun_step(std::span<const double> state, const DerivativeFn& deriv_fn, double dt);

/// Throws NonFiniteDerivative naming the first offending index.
void check_finite(std::span<const double> values, const char* stage);

/// ds/dt = (input - state)/T.
double first_order_lag_deriv(double input, double state, double time_constant);

/// Washout Kw*sTw/(1+sTw): output = Kw (input - state), ds/dt = (input - state)/Tw.
double washout_output(double input, double state, double gain);
double washout_deriv(double input, double state, double time_constant);

/// Returns the present washout output and advances `state` by dt with the input held.
double washout_step(double input, BlockState& state, double gain, double time_constant, double dt);

struct LeadLagOutput {
  double output;
  double dstate;
};

/// (1 + sT_lead)/(1 + sT_lag) in controllable canonical form with direct feedthrough.
LeadLagOutput lead_lag_deriv(double input, double state, double t_lead, double t_lag);

/// Continuous deadband: zero inside [-width, width], shifted toward zero outside.
double deadband(double input, double width);

double limit(double value, Limits limits);

/// Anti-windup rule for a clamped integrator: zero the derivative when the state sits at
/// a limit and the derivative pushes it further out.
double windup_guard(double derivative, double state, Limits limits);

/// Advances a scalar first-order ODE ds/dt = (input - s)/T by one Heun step with the
/// input held. Used by the standalone step helpers.
double advance_lag(double state, double input, double time_constant, double dt);

/// Solves A x = b with partial-pivot LU. Throws SingularMatrix when A is numerically
/// singular or the residual check ||Ax - b||_inf / ||b||_inf < 1e-10 fails.
ComplexVector solve_linear_complex(const ComplexMatrix& a, const ComplexVector& b);

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

}  // namespace numerics
}  // namespace lfo
