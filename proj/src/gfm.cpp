#include "lfo/gfm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace lfo::gfm {

using numerics::first_order_lag_deriv;
using numerics::Limits;
using numerics::windup_guard;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

GfmVariant parse_gfm_variant(std::string_view text) {
  if (text == "vsm") return GfmVariant::Vsm;
  if (text == "droop") return GfmVariant::Droop;
  if (text == "regfm") return GfmVariant::Regfm;
  throw std::invalid_argument(fmt::format("gfm.variant must be \"vsm\", \"droop\" or \"regfm\" (got \"{}\")", text));
}

std::string_view to_string(GfmVariant variant) {
  switch (variant) {
    case GfmVariant::Vsm: return "vsm";
    case GfmVariant::Droop: return "droop";
    case GfmVariant::Regfm: return "regfm";
  }
  return "vsm";
}

void GfmParams::validate() const {
  if (!(tvdrp > 0 && tfdrp > 0 && tf_vsm > 0 && tm > 0)) throw InvalidTimeConstant("GFM lag time constants must be > 0");
  if (variant == GfmVariant::Vsm && !(hv > 0)) throw std::invalid_argument("GFM virtual inertia Hv must be > 0");
  if (!(kin > 0 && kiv > 0)) throw std::invalid_argument("GFM current-controller gains Kin, Kiv must be > 0");
  if (!(x_int > 0)) throw std::invalid_argument("GFM internal reactance must be > 0");
  if (!(imax > 0)) throw std::invalid_argument("GFM Imax must be > 0");
  if (!(e_min < e_max)) throw std::invalid_argument("GFM voltage limits must satisfy e_min < e_max");
}

void RegfmParams::validate() const {
  if (!(tpf > 0 && tqf > 0 && te > 0)) throw InvalidTimeConstant("REGFM time constants must be > 0");
  if (!(mp > 0 && mq >= 0)) throw std::invalid_argument("REGFM droops must satisfy mp > 0, mq >= 0");
  if (!(pmin < pmax && qmin < qmax)) throw std::invalid_argument("REGFM power limits are inverted");
  if (!(x_int > 0 && imax > 0)) throw std::invalid_argument("REGFM internal reactance and Imax must be > 0");
}

// --- VSM / droop frequency reference ----------------------------------------

double vsm_output(const VsmState& state) { return state.wpr; }

VsmState vsm_derivatives(const GfmParams& p, const VsmState& s, double p_ref, double p_meas) {
  VsmState d;
  if (p.variant == GfmVariant::Vsm) {
    d.speed = (p_ref - p_meas - p.dv * (s.speed - 1.0)) / (2.0 * p.hv);
    d.wpr = first_order_lag_deriv(s.speed, s.wpr, p.tf_vsm);
  } else {
    d.speed = 0.0;
    d.wpr = first_order_lag_deriv(1.0 + p.mp * (p_ref - p_meas), s.wpr, p.tf_vsm);
  }
  return d;
}

double vsm_swing_step(const GfmParams& params, double p_ref, double p_meas, VsmState& state, double dt) {
  const double out = vsm_output(state);
  const std::vector<double> x{state.speed, state.wpr};
  const auto next = numerics::heun_step(
      x,
      [&](std::span<const double> in, std::span<double> d) {
        const auto ds = vsm_derivatives(params, {in[0], in[1]}, p_ref, p_meas);
        d[0] = ds.speed;
        d[1] = ds.wpr;
      },
      dt);
  state = {next[0], next[1]};
  return out;
}

// --- virtual excitation -----------------------------------------------------

namespace {
double excitation_error(const GfmParams& p, double v_ref, double v_meas, double q_ref, double q_meas) {
  return v_ref - v_meas + p.mq_ve * (q_ref - q_meas);
}
}  // namespace

double virtual_excitation_output(const GfmParams& p, double v_ref, double v_meas, double q_ref, double q_meas,
                                 const ExcitationState& s) {
  return std::clamp(s.integrator + p.kp_ve * excitation_error(p, v_ref, v_meas, q_ref, q_meas), p.e_min, p.e_max);
}

double virtual_excitation_deriv(const GfmParams& p, double v_ref, double v_meas, double q_ref, double q_meas,
                                const ExcitationState& s) {
  return windup_guard(p.ki_ve * excitation_error(p, v_ref, v_meas, q_ref, q_meas), s.integrator, {p.e_min, p.e_max});
}

double virtual_excitation_step(const GfmParams& params, double v_ref, double v_meas, double q_ref, double q_meas,
                               ExcitationState& state, double dt) {
  const double out = virtual_excitation_output(params, v_ref, v_meas, q_ref, q_meas, state);
  const std::vector<double> x{state.integrator};
  const auto next = numerics::heun_step(
      x,
      [&](std::span<const double> in, std::span<double> d) {
        d[0] = virtual_excitation_deriv(params, v_ref, v_meas, q_ref, q_meas, {in[0]});
      },
      dt);
  state.integrator = std::clamp(next[0], params.e_min, params.e_max);
  return out;
}

// --- droop feedback and current controller -------------------------------------

DroopState droop_feedback_deriv(const GfmParams& p, double id, double iq, const DroopState& s) {
  return {first_order_lag_deriv(id * p.kvd + iq * p.kvq, s.s14, p.tvdrp),
          first_order_lag_deriv(id * p.kfd + iq * p.kfq, s.s15, p.tfdrp)};
}

DroopOutput droop_feedback_step(double id, double iq, const GfmParams& params, DroopState& state, double dt) {
  const DroopOutput out{state.s15, state.s14};
  const std::vector<double> x{state.s14, state.s15};
  const auto next = numerics::heun_step(
      x,
      [&](std::span<const double> in, std::span<double> d) {
        const auto ds = droop_feedback_deriv(params, id, iq, {in[0], in[1]});
        d[0] = ds.s14;
        d[1] = ds.s15;
      },
      dt);
  state = {next[0], next[1]};
  return out;
}

CurrentControllerState current_controller_deriv(const GfmParams& p, double wpr, double vpr, double fd, double vd,
                                                const CurrentControllerState& s) {
  return {p.kin * (wpr - fd - s.s11), p.kiv * (vpr - vd - s.s13)};
}

CurrentControllerState current_controller_step(double wpr, double vpr, double fd, double vd, const GfmParams& params,
                                               CurrentControllerState& state, double dt) {
  const CurrentControllerState out = state;
  const std::vector<double> x{state.s11, state.s13};
  const auto next = numerics::heun_step(
      x,
      [&](std::span<const double> in, std::span<double> d) {
        const auto ds = current_controller_deriv(params, wpr, vpr, fd, vd, {in[0], in[1]});
        d[0] = ds.s11;
        d[1] = ds.s13;
      },
      dt);
  state = {next[0], next[1]};
  return out;
}

Complex voltage_source_interface(Complex e, Complex v_term, double r_int, double x_int, double imax) {
  if (!(x_int > 0.0)) throw std::invalid_argument("internal reactance must be > 0");
  Complex i = (e - v_term) / Complex(r_int, x_int);
  const double mag = std::abs(i);
  if (mag > imax) i *= imax / mag;
  return i;
}

DqCurrent to_dq(Complex current, double angle) {
  const Complex r = current * std::polar(1.0, -angle);
  return {r.real(), -r.imag()};
}

// --- droop benchmark ------------------------------------------------------

double regfm_frequency(const RegfmParams& p, const RegfmRefs& refs, const RegfmState& s) {
  return p.mp * (refs.p_ref - s.p_filtered) + p.kp_plim * std::min(p.pmax - s.p_filtered, 0.0) + s.pmax_integrator +
         p.kp_plim * std::max(p.pmin - s.p_filtered, 0.0) + s.pmin_integrator;
}

namespace {
double regfm_voltage_target(const RegfmParams& p, const RegfmRefs& refs, const RegfmState& s) {
  const double e = refs.e0 + p.mq * (refs.q_ref - s.q_filtered) + p.kp_qlim * std::min(p.qmax - s.q_filtered, 0.0) +
                   s.qmax_integrator + p.kp_qlim * std::max(p.qmin - s.q_filtered, 0.0) + s.qmin_integrator;
  return std::clamp(e, p.e_min, p.e_max);
}
}  // namespace

RegfmState regfm_derivatives(const RegfmParams& p, const RegfmRefs& refs, const RegfmState& s, double p_meas,
                             double q_meas) {
  RegfmState d;
  d.angle = kOmegaSync * regfm_frequency(p, refs, s);
  d.p_filtered = first_order_lag_deriv(p_meas, s.p_filtered, p.tpf);
  d.q_filtered = first_order_lag_deriv(q_meas, s.q_filtered, p.tqf);
  d.pmax_integrator = windup_guard(p.ki_plim * (p.pmax - s.p_filtered), s.pmax_integrator, {-kInf, 0.0});
  d.pmin_integrator = windup_guard(p.ki_plim * (p.pmin - s.p_filtered), s.pmin_integrator, {0.0, kInf});
  d.qmax_integrator = windup_guard(p.ki_qlim * (p.qmax - s.q_filtered), s.qmax_integrator, {-kInf, 0.0});
  d.qmin_integrator = windup_guard(p.ki_qlim * (p.qmin - s.q_filtered), s.qmin_integrator, {0.0, kInf});
  d.e = first_order_lag_deriv(regfm_voltage_target(p, refs, s), s.e, p.te);
  return d;
}

namespace {
void store(const RegfmState& s, std::span<double> out) {
  out[0] = s.angle;
  out[1] = s.p_filtered;
  out[2] = s.q_filtered;
  out[3] = s.pmax_integrator;
  out[4] = s.pmin_integrator;
  out[5] = s.qmax_integrator;
  out[6] = s.qmin_integrator;
  out[7] = s.e;
}

void clamp_regfm(const RegfmParams& p, RegfmState& s) {
  s.pmax_integrator = std::min(s.pmax_integrator, 0.0);
  s.pmin_integrator = std::max(s.pmin_integrator, 0.0);
  s.qmax_integrator = std::min(s.qmax_integrator, 0.0);
  s.qmin_integrator = std::max(s.qmin_integrator, 0.0);
  s.e = std::clamp(s.e, p.e_min, p.e_max);
}
}  // namespace

RegfmState RegfmPlant::load(std::span<const double> x) {
  return {x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7]};
}

Complex regfm_step(Complex v_term, const RegfmParams& params, const RegfmRefs& refs, RegfmState& state, double dt) {
  const Complex i = voltage_source_interface(std::polar(state.e, state.angle), v_term, params.r_int, params.x_int,
                                             params.imax);
  const Complex s = v_term * std::conj(i);
  std::vector<double> x(8);
  store(state, x);
  const auto next = numerics::heun_step(
      x,
      [&](std::span<const double> in, std::span<double> d) {
        const RegfmState st{in[0], in[1], in[2], in[3], in[4], in[5], in[6], in[7]};
        store(regfm_derivatives(params, refs, st, s.real(), s.imag()), d);
      },
      dt);
  state = {next[0], next[1], next[2], next[3], next[4], next[5], next[6], next[7]};
  clamp_regfm(params, state);
  return i;
}

// --- plants ---------------------------------------------------------------

namespace {

/// Norton split of a limited source: the unlimited source E/z behind 1/z goes into the
/// network matrix and the limiter correction is returned as an extra injection.
Complex limiter_correction(Complex e, Complex v, double r, double x, double imax) {
  const Complex z(r, x);
  return voltage_source_interface(e, v, r, x, imax) - (e - v) / z;
}

Complex source_for(Complex v, Complex s_dev, double r, double x, double imax, const std::string& name) {
  const Complex i = std::conj(s_dev / v);
  if (std::abs(i) > imax) throw std::runtime_error(fmt::format("{}: initial current exceeds Imax", name));
  return v + Complex(r, x) * i;
}

}  // namespace

GfmPlant::GfmPlant(GfmPlantParams params, std::size_t bus, double base_mva)
    : params_(std::move(params)), bus_(bus), scale_(params_.mva_base / base_mva) {
  params_.gfm.validate();
  if (params_.gfm.variant == GfmVariant::Regfm) throw std::invalid_argument("GfmPlant does not build the REGFM variant");
}

std::vector<std::string> GfmPlant::state_names() const {
  return {"angle", "vsm_speed", "wpr", "excitation", "s11", "s13", "s14", "s15", "pll_angle", "pll_integrator",
          "p_filtered", "q_filtered"};
}

Complex GfmPlant::internal_emf(std::span<const double> x) const {
  const auto& p = params_.gfm;
  return std::polar(std::clamp(x[kS13], p.e_min, p.e_max), x[kAngle]);
}

Complex GfmPlant::device_current(std::span<const double> x, Complex v) const {
  const auto& p = params_.gfm;
  return voltage_source_interface(internal_emf(x), v, p.r_int, p.x_int, p.imax);
}

void GfmPlant::initialize(Complex v, Complex s_gen, const Snapshot& /*snapshot*/, std::span<double> x) {
  const auto& p = params_.gfm;
  const Complex s_dev = s_gen / scale_;
  const Complex e = source_for(v, s_dev, p.r_int, p.x_int, p.imax, name());
  if (std::abs(e) < p.e_min || std::abs(e) > p.e_max) {
    throw std::runtime_error(fmt::format("{}: initial internal voltage {:.4f} outside limits", name(), std::abs(e)));
  }
  p_ref_ = s_dev.real();
  q_ref_ = s_dev.imag();
  v_ref_ = std::abs(v);
  x[kAngle] = std::arg(e);
  x[kSpeed] = 1.0;
  x[kWpr] = 1.0;
  x[kExc] = std::abs(e);
  x[kS11] = 1.0;
  x[kS13] = std::abs(e);
  x[kS14] = 0.0;
  x[kS15] = 0.0;
  x[kPll] = std::arg(v);
  x[kPllInt] = 0.0;
  x[kPf] = s_dev.real();
  x[kQf] = s_dev.imag();
  i0_ = to_dq(std::conj(s_dev / v), std::arg(v));
}

network::NortonSource GfmPlant::norton(std::span<const double> x) const {
  const auto& p = params_.gfm;
  const Complex y = 1.0 / Complex(p.r_int, p.x_int);
  return {bus_, internal_emf(x) * y * scale_, y * scale_};
}

Complex GfmPlant::extra_current(std::span<const double> x, Complex v) const {
  const auto& p = params_.gfm;
  return limiter_correction(internal_emf(x), v, p.r_int, p.x_int, p.imax) * scale_;
}

void GfmPlant::derivatives(std::span<const double> x, const Snapshot& snapshot, std::span<double> dx) const {
  const auto& p = params_.gfm;
  const Complex v = snapshot.voltage(bus_);
  const Complex i = device_current(x, v);
  const Complex s = v * std::conj(i);

  dx[kPf] = first_order_lag_deriv(s.real(), x[kPf], p.tm);
  dx[kQf] = first_order_lag_deriv(s.imag(), x[kQf], p.tm);

  const auto dvsm = vsm_derivatives(p, {x[kSpeed], x[kWpr]}, p_ref_, x[kPf]);
  dx[kSpeed] = dvsm.speed;
  dx[kWpr] = dvsm.wpr;

  const ExcitationState exc{x[kExc]};
  const double vpr = virtual_excitation_output(p, v_ref_, std::abs(v), q_ref_, x[kQf], exc);
  dx[kExc] = virtual_excitation_deriv(p, v_ref_, std::abs(v), q_ref_, x[kQf], exc);

  const auto dq = to_dq(i, x[kPll]);
  const auto ddroop = droop_feedback_deriv(p, dq.id - i0_.id, dq.iq - i0_.iq, {x[kS14], x[kS15]});
  dx[kS14] = ddroop.s14;
  dx[kS15] = ddroop.s15;

  const auto dcc = current_controller_deriv(p, x[kWpr], vpr, x[kS15], x[kS14], {x[kS11], x[kS13]});
  dx[kS11] = dcc.s11;
  dx[kS13] = windup_guard(dcc.s13, x[kS13], {p.e_min, p.e_max});
  dx[kAngle] = kOmegaSync * (x[kS11] - 1.0);

  const auto dpll = pll_derivatives(p.pll, {x[kPll], x[kPllInt]}, v);
  dx[kPll] = dpll.angle;
  dx[kPllInt] = dpll.integrator;
}

void GfmPlant::enforce_limits(std::span<double> x) const {
  const auto& p = params_.gfm;
  x[kS13] = std::clamp(x[kS13], p.e_min, p.e_max);
  x[kExc] = std::clamp(x[kExc], p.e_min, p.e_max);
}

RegfmPlant::RegfmPlant(RegfmPlantParams params, std::size_t bus, double base_mva)
    : params_(std::move(params)), bus_(bus), scale_(params_.mva_base / base_mva) {
  params_.regfm.validate();
}

std::vector<std::string> RegfmPlant::state_names() const {
  return {"angle", "p_filtered", "q_filtered", "pmax_integrator", "pmin_integrator", "qmax_integrator",
          "qmin_integrator", "e"};
}

Complex RegfmPlant::device_current(std::span<const double> x, Complex v) const {
  const auto& p = params_.regfm;
  return voltage_source_interface(std::polar(x[7], x[0]), v, p.r_int, p.x_int, p.imax);
}

void RegfmPlant::initialize(Complex v, Complex s_gen, const Snapshot& /*snapshot*/, std::span<double> x) {
  const auto& p = params_.regfm;
  const Complex s_dev = s_gen / scale_;
  const Complex e = source_for(v, s_dev, p.r_int, p.x_int, p.imax, name());
  if (s_dev.real() > p.pmax || s_dev.real() < p.pmin || s_dev.imag() > p.qmax || s_dev.imag() < p.qmin) {
    throw std::runtime_error(fmt::format("{}: dispatch outside REGFM power limits", name()));
  }
  refs_ = {s_dev.real(), s_dev.imag(), std::abs(e)};
  store({std::arg(e), s_dev.real(), s_dev.imag(), 0.0, 0.0, 0.0, 0.0, std::abs(e)}, x);
}

network::NortonSource RegfmPlant::norton(std::span<const double> x) const {
  const auto& p = params_.regfm;
  const Complex y = 1.0 / Complex(p.r_int, p.x_int);
  return {bus_, std::polar(x[7], x[0]) * y * scale_, y * scale_};
}

Complex RegfmPlant::extra_current(std::span<const double> x, Complex v) const {
  const auto& p = params_.regfm;
  return limiter_correction(std::polar(x[7], x[0]), v, p.r_int, p.x_int, p.imax) * scale_;
}

void RegfmPlant::derivatives(std::span<const double> x, const Snapshot& snapshot, std::span<double> dx) const {
  const Complex v = snapshot.voltage(bus_);
  const Complex s = v * std::conj(device_current(x, v));
  store(regfm_derivatives(params_.regfm, refs_, load(x), s.real(), s.imag()), dx);
}

void RegfmPlant::enforce_limits(std::span<double> x) const {
  auto s = load(x);
  clamp_regfm(params_.regfm, s);
  store(s, x);
}

}  // namespace lfo::gfm
