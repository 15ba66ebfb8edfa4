#include "lfo/pll.hpp"

#include <cmath>
#include <vector>

namespace lfo {

PllState pll_derivatives(const PllParams& p, const PllState& s, Complex v_term) {
  const double vmag = std::abs(v_term);
  if (vmag < p.v_freeze) return {0.0, 0.0};
  const double err = (v_term * std::polar(1.0, -s.angle)).imag() / vmag;
  return {p.kp * err + s.integrator, p.ki * err};
}

double pll_step(Complex v_term, const PllParams& params, PllState& state, double dt) {
  const std::vector<double> x{state.angle, state.integrator};
  const auto next = numerics::heun_step(
      x,
      [&](std::span<const double> in, std::span<double> d) {
        const auto ds = pll_derivatives(params, {in[0], in[1]}, v_term);
        d[0] = ds.angle;
        d[1] = ds.integrator;
      },
      dt);
  state = {next[0], next[1]};
  return state.angle;
}

}  // namespace lfo
