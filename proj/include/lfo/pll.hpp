#pragma once

#include "lfo/numerics.hpp"

namespace lfo {

/// PI phase-locked loop on the terminal voltage angle; frozen below `v_freeze`.
struct PllParams {
  double kp{50.0};   // rad/s per unit angle error
  double ki{900.0};  // rad/s^2 per unit angle error
  double v_freeze{0.05};
};

struct PllState {
  double angle{0.0};
  double integrator{0.0};  // frequency offset, rad/s
};

PllState pll_derivatives(const PllParams& params, const PllState& state, Complex v_term);
/// Advances the PLL and returns its angle.
double pll_step(Complex v_term, const PllParams& params, PllState& state, double dt);

}  // namespace lfo
