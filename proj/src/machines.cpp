#include "lfo/machines.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace lfo::machines {

using numerics::Limits;

void SyncMachineParams::validate() const {
  if (!(xd >= xd1 && xd1 >= xd2 && xd2 > xl && xl > 0.0)) {
    throw std::invalid_argument("machine reactances must satisfy Xd >= Xd' >= Xd'' > Xl > 0");
  }
  if (!(xq >= xq1 && xq1 >= xd2)) throw std::invalid_argument("machine reactances must satisfy Xq >= Xq' >= Xq''");
  if (!(td01 > 0 && tq01 > 0 && td02 > 0 && tq02 > 0)) throw InvalidTimeConstant("machine time constants must be > 0");
  if (!(h > 0.0)) throw std::invalid_argument("machine inertia H must be > 0");
  if (!(mva_base > 0.0)) throw std::invalid_argument("machine MVA base must be > 0");
}

SyncMachineParams SyncMachineParams::to_system_base(double base_mva) const {
  const double z = base_mva / mva_base;
  const double p = mva_base / base_mva;
  SyncMachineParams out = *this;
  out.xd *= z;
  out.xq *= z;
  out.xd1 *= z;
  out.xq1 *= z;
  out.xd2 *= z;
  out.xl *= z;
  out.ra *= z;
  out.h *= p;
  out.d *= p;
  out.mva_base = base_mva;
  return out;
}

SaturationCurve::SaturationCurve(double s10, double s12) {
  if (s10 <= 0.0 || s12 <= 0.0) {
    a_ = 1.0;
    b_ = 0.0;
    return;
  }
  if (!(s12 > s10)) throw std::invalid_argument("saturation requires S12 > S10");
  const double r = std::sqrt(s12 / s10);
  a_ = (1.2 - r) / (1.0 - r);
  b_ = s10 / ((1.0 - a_) * (1.0 - a_));
}

double SaturationCurve::operator()(double e) const {
  if (e <= a_) return 0.0;
  return b_ * (e - a_) * (e - a_);
}

void SyncMachineState::store(std::span<double> out) const {
  out[0] = delta;
  out[1] = speed_dev;
  out[2] = eq1;
  out[3] = ed1;
  out[4] = psi_kd;
  out[5] = psi_kq;
}

SyncMachineState SyncMachineState::load(std::span<const double> in) {
  return {in[0], in[1], in[2], in[3], in[4], in[5]};
}

namespace {

struct AxisCoefficients {
  double gd1, gd2, gq1, gq2;
};

AxisCoefficients coefficients(const SyncMachineParams& p) {
  return {(p.xd2 - p.xl) / (p.xd1 - p.xl), (p.xd1 - p.xd2) / ((p.xd1 - p.xl) * (p.xd1 - p.xl)),
          (p.xd2 - p.xl) / (p.xq1 - p.xl), (p.xq1 - p.xd2) / ((p.xq1 - p.xl) * (p.xq1 - p.xl))};
}

/// d/q components of E''.
Complex subtransient_dq(const SyncMachineState& s, const SyncMachineParams& p) {
  const auto c = coefficients(p);
  const double e2q = c.gd1 * s.eq1 + (1.0 - c.gd1) * s.psi_kd;
  const double e2d = c.gq1 * s.ed1 + (1.0 - c.gq1) * s.psi_kq;
  return {e2d, e2q};
}

Complex to_network(Complex dq, double delta) { return dq * std::polar(1.0, delta - kPi / 2.0); }
Complex to_rotor(Complex net, double delta) { return net * std::polar(1.0, -(delta - kPi / 2.0)); }

}  // namespace

Complex subtransient_emf(const SyncMachineState& state, const SyncMachineParams& params) {
  return to_network(subtransient_dq(state, params), state.delta);
}

Norton sync_machine_norton(const SyncMachineState& state, const SyncMachineParams& params) {
  const Complex z(params.ra, params.xd2);
  return {subtransient_emf(state, params) / z, 1.0 / z};
}

Complex stator_current(const SyncMachineState& state, const SyncMachineParams& params, Complex v_term) {
  const Complex z(params.ra, params.xd2);
  return (subtransient_emf(state, params) - v_term) / z;
}

double electrical_power(const SyncMachineState& state, const SyncMachineParams& params, Complex v_term) {
  return (subtransient_emf(state, params) * std::conj(stator_current(state, params, v_term))).real();
}

SyncMachineState sync_machine_derivatives(const SyncMachineState& s, const SyncMachineParams& p, double efd, double pm,
                                          Complex v_term) {
  const auto c = coefficients(p);
  const Complex e2 = subtransient_dq(s, p);
  const Complex z(p.ra, p.xd2);
  const Complex i_dq = (e2 - to_rotor(v_term, s.delta)) / z;
  const double id = i_dq.real();
  const double iq = i_dq.imag();

  const SaturationCurve sat(p.s10, p.s12);
  const double e2mag = std::abs(e2);
  const double s_val = sat(e2mag);
  const double sat_d = e2mag > 0.0 ? s_val * e2.imag() / e2mag : 0.0;
  const double sat_q = e2mag > 0.0 ? (p.xq - p.xl) / (p.xd - p.xl) * s_val * e2.real() / e2mag : 0.0;

  const double pe = (e2 * std::conj(i_dq)).real();

  SyncMachineState d;
  d.delta = kOmegaSync * s.speed_dev;
  d.speed_dev = (pm / (1.0 + s.speed_dev) - pe - p.d * s.speed_dev) / (2.0 * p.h);
  d.eq1 = (efd - s.eq1 - (p.xd - p.xd1) * (id - c.gd2 * (s.psi_kd + (p.xd1 - p.xl) * id - s.eq1)) - sat_d) / p.td01;
  d.psi_kd = (-s.psi_kd + s.eq1 - (p.xd1 - p.xl) * id) / p.td02;
  d.ed1 = (-s.ed1 + (p.xq - p.xq1) * (iq + c.gq2 * (s.psi_kq - (p.xq1 - p.xl) * iq - s.ed1)) - sat_q) / p.tq01;
  d.psi_kq = (-s.psi_kq + s.ed1 + (p.xq1 - p.xl) * iq) / p.tq02;
  return d;
}

MachineInit initialize_sync_machine(const SyncMachineParams& p, Complex v, Complex s_gen) {
  p.validate();
  if (std::abs(v) <= 0.0) throw std::invalid_argument("machine terminal voltage must be nonzero");
  const Complex z(p.ra, p.xd2);
  const Complex i = std::conj(s_gen / v);
  const Complex e2 = v + z * i;
  const double e2mag = std::abs(e2);
  const SaturationCurve sat(p.s10, p.s12);
  const double s_val = sat(e2mag);
  const double kq = (p.xq - p.xl) / (p.xd - p.xl);
  const double c = 1.0 + kq * s_val / e2mag;

  MachineInit out;
  auto& s = out.state;
  s.delta = std::arg(c * e2 + Complex(0.0, p.xq - p.xd2) * i);
  const Complex e2_dq = to_rotor(e2, s.delta);
  const Complex i_dq = to_rotor(i, s.delta);
  const double id = i_dq.real();
  const double iq = i_dq.imag();

  s.speed_dev = 0.0;
  s.eq1 = e2_dq.imag() + (p.xd1 - p.xd2) * id;
  s.psi_kd = s.eq1 - (p.xd1 - p.xl) * id;
  s.ed1 = e2_dq.real() - (p.xq1 - p.xd2) * iq;
  s.psi_kq = s.ed1 + (p.xq1 - p.xl) * iq;
  out.efd = s.eq1 + (p.xd - p.xd1) * id + s_val * e2_dq.imag() / e2mag;
  out.pm = (e2 * std::conj(i)).real();
  return out;
}

// --- excitation -----------------------------------------------------------

ExciterState exciter_init(const ExciterParams& /*params*/, double v_term_mag, double efd0) {
  return {v_term_mag, efd0};
}

double exciter_output(const ExciterParams& p, const ExciterState& s, double v_ref, double v_pss) {
  return numerics::limit(p.kp * (v_ref + v_pss - s.v_sensed) + s.integrator, {p.efd_min, p.efd_max});
}

ExciterState exciter_derivatives(const ExciterParams& p, const ExciterState& s, double v_ref, double v_term_mag,
                                 double v_pss) {
  ExciterState d;
  d.v_sensed = numerics::first_order_lag_deriv(v_term_mag, s.v_sensed, p.tr);
  const double error = v_ref + v_pss - s.v_sensed;
  const double unclamped = p.kp * error + s.integrator;
  double di = p.ki * error;
  if ((unclamped >= p.efd_max && di > 0.0) || (unclamped <= p.efd_min && di < 0.0)) di = 0.0;
  d.integrator = numerics::windup_guard(di, s.integrator, {p.efd_min, p.efd_max});
  return d;
}

double exciter_step(const ExciterParams& p, double v_ref, double v_term_mag, double v_pss, ExciterState& state,
                    double dt) {
  const double efd = exciter_output(p, state, v_ref, v_pss);
  const std::vector<double> x{state.v_sensed, state.integrator};
  const auto next = numerics::heun_step(
      x,
      [&](std::span<const double> in, std::span<double> out) {
        const auto d = exciter_derivatives(p, {in[0], in[1]}, v_ref, v_term_mag, v_pss);
        out[0] = d.v_sensed;
        out[1] = d.integrator;
      },
      dt);
  state = {next[0], std::clamp(next[1], p.efd_min, p.efd_max)};
  return efd;
}

// --- governor -------------------------------------------------------------

GovernorState governor_init(const GovernorParams& /*params*/, double pm0) { return {pm0, pm0}; }

double governor_output(const GovernorParams& p, const GovernorState& s, double speed_dev) {
  return numerics::lead_lag_deriv(s.valve, s.lead_lag, p.t2, p.t3).output - p.dt * speed_dev;
}

GovernorState governor_derivatives(const GovernorParams& p, const GovernorState& s, double speed_dev, double p_ref) {
  if (!(p.r > 0.0)) throw std::invalid_argument("governor droop R must be > 0");
  GovernorState d;
  const double input = p_ref - speed_dev / p.r;
  d.valve = numerics::windup_guard(numerics::first_order_lag_deriv(input, s.valve, p.t1), s.valve, {p.vmin, p.vmax});
  d.lead_lag = numerics::lead_lag_deriv(s.valve, s.lead_lag, p.t2, p.t3).dstate;
  return d;
}

double governor_step(const GovernorParams& p, double speed_dev, double p_ref, GovernorState& state, double dt) {
  const double pm = governor_output(p, state, speed_dev);
  const std::vector<double> x{state.valve, state.lead_lag};
  const auto next = numerics::heun_step(
      x,
      [&](std::span<const double> in, std::span<double> out) {
        const auto d = governor_derivatives(p, {in[0], in[1]}, speed_dev, p_ref);
        out[0] = d.valve;
        out[1] = d.lead_lag;
      },
      dt);
  state = {std::clamp(next[0], p.vmin, p.vmax), next[1]};
  return pm;
}

// --- dual-input stabilizer -------------------------------------------------

void PssParams::validate() const {
  if (!(tw1 > 0 && tw2 > 0 && tw3 > 0 && t7 > 0 && t9 > 0 && t2 > 0 && t4 > 0)) {
    throw InvalidTimeConstant("stabilizer time constants must be > 0");
  }
  if (tw4 < 0.0) throw InvalidTimeConstant("stabilizer Tw4 must be >= 0 (0 bypasses the block)");
  if (m < 1) throw std::invalid_argument("ramp-tracking filter order M must be >= 1");
  if (!(vmin < vmax)) throw std::invalid_argument("stabilizer limits must satisfy vmin < vmax");
}

DualInputPss::DualInputPss(PssParams params) : params_(params) { params_.validate(); }

// Layout: w1 w2 (speed washouts), w3 w4 (power washouts), p7 (power lag), rtf[m], ll1, ll2.
std::size_t DualInputPss::state_count() const { return 7 + static_cast<std::size_t>(params_.m); }

std::vector<std::string> DualInputPss::state_names() const {
  std::vector<std::string> names{"pss_w1", "pss_w2", "pss_w3", "pss_w4", "pss_p7"};
  for (int k = 0; k < params_.m; ++k) names.push_back(fmt::format("pss_rtf{}", k));
  names.push_back("pss_ll1");
  names.push_back("pss_ll2");
  return names;
}

std::vector<double> DualInputPss::initialize(double p_elec) const {
  std::vector<double> s(state_count(), 0.0);
  s[2] = p_elec;
  return s;
}

DualInputPss::Signals DualInputPss::evaluate(std::span<const double> s, double p_elec, double speed_dev) const {
  const auto& p = params_;
  Signals sig;
  sig.y1 = numerics::washout_output(speed_dev, s[0], 1.0);
  sig.y2 = numerics::washout_output(sig.y1, s[1], 1.0);
  sig.y3 = numerics::washout_output(p_elec, s[2], 1.0);
  sig.y4 = p.tw4 > 0.0 ? numerics::washout_output(sig.y3, s[3], 1.0) : sig.y3;
  sig.vsi2 = s[4];
  sig.rtf_in = sig.y2 + p.ks3 * sig.vsi2;
  sig.rtf_out.resize(static_cast<std::size_t>(p.m));
  sig.rtf_out[0] = numerics::lead_lag_deriv(sig.rtf_in, s[5], p.t8, p.t9).output;
  for (int k = 1; k < p.m; ++k) sig.rtf_out[static_cast<std::size_t>(k)] = s[5 + static_cast<std::size_t>(k)];
  sig.ll_in = p.ks1 * (sig.rtf_out.back() - sig.vsi2);
  const std::size_t ll = 5 + static_cast<std::size_t>(p.m);
  sig.ll1_out = numerics::lead_lag_deriv(sig.ll_in, s[ll], p.t1, p.t2).output;
  sig.ll2_out = numerics::lead_lag_deriv(sig.ll1_out, s[ll + 1], p.t3, p.t4).output;
  return sig;
}

double DualInputPss::output(std::span<const double> state, double p_elec, double speed_dev) const {
  return numerics::limit(evaluate(state, p_elec, speed_dev).ll2_out, {params_.vmin, params_.vmax});
}

void DualInputPss::derivatives(std::span<const double> s, double p_elec, double speed_dev,
                               std::span<double> ds) const {
  const auto& p = params_;
  const auto sig = evaluate(s, p_elec, speed_dev);
  ds[0] = numerics::washout_deriv(speed_dev, s[0], p.tw1);
  ds[1] = numerics::washout_deriv(sig.y1, s[1], p.tw2);
  ds[2] = numerics::washout_deriv(p_elec, s[2], p.tw3);
  ds[3] = p.tw4 > 0.0 ? numerics::washout_deriv(sig.y3, s[3], p.tw4) : 0.0;
  ds[4] = numerics::first_order_lag_deriv(p.ks2 * sig.y4, s[4], p.t7);
  ds[5] = numerics::lead_lag_deriv(sig.rtf_in, s[5], p.t8, p.t9).dstate;
  for (int k = 1; k < p.m; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    ds[5 + idx] = numerics::first_order_lag_deriv(sig.rtf_out[idx - 1], s[5 + idx], p.t9);
  }
  const std::size_t ll = 5 + static_cast<std::size_t>(p.m);
  ds[ll] = numerics::lead_lag_deriv(sig.ll_in, s[ll], p.t1, p.t2).dstate;
  ds[ll + 1] = numerics::lead_lag_deriv(sig.ll1_out, s[ll + 1], p.t3, p.t4).dstate;
}

double pss_dual_input_step(const DualInputPss& pss, double p_elec, double speed_dev, std::vector<double>& state,
                           double dt) {
  const double out = pss.output(state, p_elec, speed_dev);
  state = numerics::heun_step(
      state, [&](std::span<const double> in, std::span<double> d) { pss.derivatives(in, p_elec, speed_dev, d); }, dt);
  return out;
}

// --- generating unit ------------------------------------------------------

GeneratorUnit::GeneratorUnit(GeneratorUnitParams params, std::size_t bus, double base_mva)
    : params_(std::move(params)), bus_(bus), base_mva_(base_mva) {
  params_.machine.validate();
  sys_ = params_.machine.to_system_base(base_mva);
  mva_ratio_ = params_.machine.mva_base / base_mva;
  if (params_.pss) pss_.emplace(*params_.pss);
}

std::vector<std::string> GeneratorUnit::state_names() const {
  std::vector<std::string> names{"delta", "speed_dev", "eq1", "ed1", "psi_kd", "psi_kq",
                                 "exc_v_sensed", "exc_integrator", "gov_valve", "gov_lead_lag"};
  if (pss_) {
    for (auto& n : pss_->state_names()) names.push_back(n);
  }
  return names;
}

void GeneratorUnit::initialize(Complex v, Complex s_gen, const Snapshot& /*snapshot*/, std::span<double> x) {
  const auto init = initialize_sync_machine(sys_, v, s_gen);
  init.state.store(x.subspan(0, SyncMachineState::kSize));
  if (init.efd > params_.exciter.efd_max || init.efd < params_.exciter.efd_min) {
    throw std::runtime_error(fmt::format("{}: initial field voltage {:.4f} outside exciter limits", name(), init.efd));
  }
  v_ref_ = std::abs(v);
  const auto exc = exciter_init(params_.exciter, std::abs(v), init.efd);
  x[kExc] = exc.v_sensed;
  x[kExc + 1] = exc.integrator;
  p_ref_ = init.pm / mva_ratio_;
  if (p_ref_ > params_.governor.vmax || p_ref_ < params_.governor.vmin) {
    throw std::runtime_error(fmt::format("{}: dispatch {:.4f} pu outside governor valve limits", name(), p_ref_));
  }
  const auto gov = governor_init(params_.governor, p_ref_);
  x[kGov] = gov.valve;
  x[kGov + 1] = gov.lead_lag;
  if (pss_) {
    const auto s = pss_->initialize(init.pm / mva_ratio_);
    std::copy(s.begin(), s.end(), x.begin() + static_cast<std::ptrdiff_t>(kPss));
  }
}

network::NortonSource GeneratorUnit::norton(std::span<const double> x) const {
  const auto n = sync_machine_norton(SyncMachineState::load(x), sys_);
  return {bus_, n.current, n.admittance};
}

double GeneratorUnit::stabilizer_signal(std::span<const double> x, Complex v_term) const {
  if (!pss_) return 0.0;
  const auto s = SyncMachineState::load(x);
  const double pe_mach = electrical_power(s, sys_, v_term) / mva_ratio_;
  return pss_->output(x.subspan(kPss), pe_mach, s.speed_dev);
}

double GeneratorUnit::field_voltage(std::span<const double> x, Complex v_term) const {
  return exciter_output(params_.exciter, {x[kExc], x[kExc + 1]}, v_ref_, stabilizer_signal(x, v_term));
}

double GeneratorUnit::mechanical_power(std::span<const double> x) const {
  return governor_output(params_.governor, {x[kGov], x[kGov + 1]}, x[1]) * mva_ratio_;
}

void GeneratorUnit::derivatives(std::span<const double> x, const Snapshot& snapshot, std::span<double> dx) const {
  const Complex v = snapshot.voltage(bus_);
  const auto s = SyncMachineState::load(x);
  const double v_pss = stabilizer_signal(x, v);
  const ExciterState exc{x[kExc], x[kExc + 1]};
  const double efd = exciter_output(params_.exciter, exc, v_ref_, v_pss);
  const double pm = mechanical_power(x);

  sync_machine_derivatives(s, sys_, efd, pm, v).store(dx.subspan(0, SyncMachineState::kSize));
  const auto dexc = exciter_derivatives(params_.exciter, exc, v_ref_, std::abs(v), v_pss);
  dx[kExc] = dexc.v_sensed;
  dx[kExc + 1] = dexc.integrator;
  const auto dgov = governor_derivatives(params_.governor, {x[kGov], x[kGov + 1]}, s.speed_dev, p_ref_);
  dx[kGov] = dgov.valve;
  dx[kGov + 1] = dgov.lead_lag;
  if (pss_) {
    const double pe_mach = electrical_power(s, sys_, v) / mva_ratio_;
    pss_->derivatives(x.subspan(kPss), pe_mach, s.speed_dev, dx.subspan(kPss));
  }
}

void GeneratorUnit::enforce_limits(std::span<double> x) const {
  x[kExc + 1] = std::clamp(x[kExc + 1], params_.exciter.efd_min, params_.exciter.efd_max);
  x[kGov] = std::clamp(x[kGov], params_.governor.vmin, params_.governor.vmax);
}

}  // namespace lfo::machines
