#include "lfo/gfl.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace lfo::gfl {

PodMode parse_pod_mode(std::string_view text) {
  if (text == "p") return PodMode::P;
  if (text == "q") return PodMode::Q;
  if (text == "off") return PodMode::Off;
  throw std::invalid_argument(fmt::format("pod.mode must be \"p\", \"q\" or \"off\" (got \"{}\")", text));
}

PodInput parse_pod_input(std::string_view text) {
  if (text == "branch_p") return PodInput::BranchP;
  if (text == "bus_freq") return PodInput::BusFreq;
  if (text == "branch_q") return PodInput::BranchQ;
  if (text == "bus_v") return PodInput::BusV;
  throw std::invalid_argument(
      fmt::format("pod.input must be one of branch_p, bus_freq, branch_q, bus_v (got \"{}\")", text));
}

std::string_view to_string(PodMode mode) {
  switch (mode) {
    case PodMode::P: return "p";
    case PodMode::Q: return "q";
    case PodMode::Off: return "off";
  }
  return "off";
}

std::string_view to_string(PodInput input) {
  switch (input) {
    case PodInput::BranchP: return "branch_p";
    case PodInput::BusFreq: return "bus_freq";
    case PodInput::BranchQ: return "branch_q";
    case PodInput::BusV: return "bus_v";
  }
  return "branch_p";
}

void PodParams::validate() const {
  if (!(tf > 0 && tw > 0 && t2 > 0 && t4 > 0)) throw InvalidTimeConstant("POD Tf, Tw, T2, T4 must be > 0");
  if (t1 < 0 || t3 < 0) throw InvalidTimeConstant("POD lead time constants must be >= 0");
  if (!std::isfinite(kw)) throw std::invalid_argument("POD washout gain Kw must be finite");
  if (!(out_min < out_max)) throw std::invalid_argument("POD limits must satisfy out_min < out_max");
  const bool p_input = input == PodInput::BranchP || input == PodInput::BusFreq;
  if (mode == PodMode::P && !p_input) throw std::invalid_argument("POD-P requires input branch_p or bus_freq");
  if (mode == PodMode::Q && p_input) throw std::invalid_argument("POD-Q requires input branch_q or bus_v");
  if (deadband < 0) throw std::invalid_argument("POD deadband must be >= 0");
}

namespace {

struct PodSignals {
  double u0, washed, ll1, ll2;
};

PodSignals pod_signals(const PodParams& p, const PodState& s, double raw) {
  PodSignals sig;
  sig.u0 = numerics::deadband(raw, p.deadband);
  sig.washed = numerics::washout_output(s.s0, s.s1, p.kw);
  sig.ll1 = numerics::lead_lag_deriv(sig.washed, s.s2, p.t1, p.t2).output;
  sig.ll2 = numerics::lead_lag_deriv(sig.ll1, s.s3, p.t3, p.t4).output;
  return sig;
}

}  // namespace

double pod_output(const PodParams& params, const PodState& state, double raw_input) {
  return numerics::limit(pod_signals(params, state, raw_input).ll2, {params.out_min, params.out_max});
}

PodState pod_derivatives(const PodParams& p, const PodState& s, double raw_input) {
  const auto sig = pod_signals(p, s, raw_input);
  PodState d;
  d.s0 = numerics::first_order_lag_deriv(sig.u0, s.s0, p.tf);
  d.s1 = numerics::washout_deriv(s.s0, s.s1, p.tw);
  d.s2 = numerics::lead_lag_deriv(sig.washed, s.s2, p.t1, p.t2).dstate;
  d.s3 = numerics::lead_lag_deriv(sig.ll1, s.s3, p.t3, p.t4).dstate;
  return d;
}

double pod_step(double raw_input, const PodParams& params, PodState& state, double dt) {
  params.validate();
  const double out = pod_output(params, state, raw_input);
  const std::vector<double> x{state.s0, state.s1, state.s2, state.s3};
  const auto next = numerics::heun_step(
      x,
      [&](std::span<const double> in, std::span<double> d) {
        const auto ds = pod_derivatives(params, {in[0], in[1], in[2], in[3]}, raw_input);
        d[0] = ds.s0;
        d[1] = ds.s1;
        d[2] = ds.s2;
        d[3] = ds.s3;
      },
      dt);
  state = {next[0], next[1], next[2], next[3]};
  return out;
}

double BusFrequencyMeter::output(double angle, double filter_state) const {
  return numerics::wrap_angle(angle - filter_state) / (tf * kOmegaSync);
}

double BusFrequencyMeter::derivative(double angle, double filter_state) const {
  if (!(tf > 0.0)) throw InvalidTimeConstant("bus frequency filter time constant must be > 0");
  return numerics::wrap_angle(angle - filter_state) / tf;
}

double bus_frequency(std::span<const double> angles, double dt, double tf) {
  if (angles.size() < 2) throw std::invalid_argument("bus_frequency needs at least two samples");
  const BusFrequencyMeter meter{tf};
  double z = angles[0];
  for (std::size_t k = 1; k < angles.size(); ++k) {
    // Heun with the angle interpolated linearly across the sample interval.
    const double k1 = meter.derivative(angles[k - 1], z);
    const double k2 = meter.derivative(angles[k], z + dt * k1);
    z += 0.5 * dt * (k1 + k2);
  }
  return meter.output(angles.back(), z);
}

CurrentCommand limit_current_q_priority(CurrentCommand cmd, double imax) {
  CurrentCommand out;
  out.iq = std::clamp(cmd.iq, -imax, imax);
  const double ip_max = std::sqrt(std::max(imax * imax - out.iq * out.iq, 0.0));
  out.ip = std::clamp(cmd.ip, 0.0, ip_max);
  return out;
}

CurrentCommand ppc_commands(const PpcParams& p, const PpcRefs& refs, const PpcState& s, double q_meas,
                            double pod_out, PodMode mode) {
  const double v_error = refs.v_ref - s.v_filtered - p.kqv * (q_meas - refs.q_ref);
  CurrentCommand cmd;
  cmd.iq = s.q_integrator + p.kp_v * v_error;
  cmd.ip = refs.p_ref / std::max(s.v_filtered, 0.01);
  if (mode == PodMode::P) cmd.ip += pod_out;
  if (mode == PodMode::Q) cmd.iq += pod_out;
  return limit_current_q_priority(cmd, p.imax);
}

PpcState ppc_derivatives(const PpcParams& p, const PpcRefs& refs, const PpcState& s, double v_meas, double q_meas) {
  PpcState d;
  d.v_filtered = numerics::first_order_lag_deriv(v_meas, s.v_filtered, p.tr);
  const double v_error = refs.v_ref - s.v_filtered - p.kqv * (q_meas - refs.q_ref);
  d.q_integrator = numerics::windup_guard(p.ki_v * v_error, s.q_integrator, {-p.imax, p.imax});
  return d;
}

CurrentCommand ppc_step(double v_meas, double q_meas, double pod_out, PodMode mode, const PpcParams& params,
                        const PpcRefs& refs, PpcState& state, double dt) {
  const auto cmd = ppc_commands(params, refs, state, q_meas, pod_out, mode);
  const std::vector<double> x{state.v_filtered, state.q_integrator};
  const auto next = numerics::heun_step(
      x,
      [&](std::span<const double> in, std::span<double> d) {
        const auto ds = ppc_derivatives(params, refs, {in[0], in[1]}, v_meas, q_meas);
        d[0] = ds.v_filtered;
        d[1] = ds.q_integrator;
      },
      dt);
  state = {next[0], std::clamp(next[1], -params.imax, params.imax)};
  return cmd;
}

Complex converter_current(const ConverterParams& p, const ConverterState& s, Complex v, double angle) {
  const double vmag = std::abs(v);
  const Complex u = std::polar(1.0, angle);
  const double lv_gain = std::clamp(vmag / p.lv_point, 0.0, 1.0);
  Complex i = Complex(s.ip * lv_gain, -s.iq) * u;
  const double mag = std::abs(i);
  if (mag > p.imax) i *= p.imax / mag;
  return i;
}

ConverterState converter_derivatives(const ConverterParams& p, const ConverterState& s, const CurrentCommand& cmd) {
  return {numerics::first_order_lag_deriv(cmd.ip, s.ip, p.tg), numerics::first_order_lag_deriv(cmd.iq, s.iq, p.tg)};
}

Complex gfl_converter_step(const CurrentCommand& cmd, Complex v_term, const ConverterParams& params,
                           ConverterState& state, double dt) {
  const Complex i = converter_current(params, state, v_term, std::arg(v_term));
  state.ip = numerics::advance_lag(state.ip, cmd.ip, params.tg, dt);
  state.iq = numerics::advance_lag(state.iq, cmd.iq, params.tg, dt);
  return i;
}

// --- plant ----------------------------------------------------------------

GflPlant::GflPlant(GflPlantParams params, std::size_t bus, double base_mva)
    : params_(std::move(params)), bus_(bus), base_mva_(base_mva), scale_(params_.mva_base / base_mva) {
  if (params_.pod) params_.pod->validate();
}

std::vector<std::string> GflPlant::state_names() const {
  std::vector<std::string> names{"conv_ip", "conv_iq", "ppc_v_filtered", "ppc_q_integrator", "pll_angle",
                                 "pll_integrator"};
  if (params_.pod) {
    for (const char* n : {"meter_angle", "pod_s0", "pod_s1", "pod_s2", "pod_s3"}) names.emplace_back(n);
  }
  return names;
}

double GflPlant::reactive_output(std::span<const double> x, Complex v) const {
  const Complex i = converter_current(params_.converter, {x[kIp], x[kIq]}, v, x[kPll]);
  return (v * std::conj(i)).imag();
}

void GflPlant::initialize(Complex v, Complex s_gen, const Snapshot& snapshot, std::span<double> x) {
  const Complex s_dev = s_gen / scale_;
  const double vmag = std::abs(v);
  x[kIp] = s_dev.real() / vmag;
  x[kIq] = s_dev.imag() / vmag;
  if (std::hypot(x[kIp], x[kIq]) > params_.ppc.imax) {
    throw std::runtime_error(fmt::format("{}: initial current exceeds Imax", name()));
  }
  refs_ = {vmag, s_dev.imag(), s_dev.real()};
  x[kVf] = vmag;
  x[kQi] = x[kIq];
  x[kPll] = std::arg(v);
  x[kPllInt] = 0.0;
  if (params_.pod) {
    const Complex vm = snapshot.voltage(snapshot.monitored_bus);
    x[kMeter] = std::arg(vm);
    for (std::size_t k = 0; k < 4; ++k) x[kPod + k] = 0.0;
    switch (params_.pod->input) {
      case PodInput::BranchP: pod_reference_ = snapshot.tie_flow.real(); break;
      case PodInput::BranchQ: pod_reference_ = snapshot.tie_flow.imag(); break;
      case PodInput::BusV: pod_reference_ = std::abs(vm); break;
      case PodInput::BusFreq: pod_reference_ = 0.0; break;
    }
  }
}

network::NortonSource GflPlant::norton(std::span<const double> /*x*/) const { return {bus_, {}, {}}; }

Complex GflPlant::extra_current(std::span<const double> x, Complex v) const {
  return converter_current(params_.converter, {x[kIp], x[kIq]}, v, x[kPll]) * scale_;
}

double GflPlant::pod_raw_input(std::span<const double> x, const Snapshot& snapshot) const {
  const Complex vm = snapshot.voltage(snapshot.monitored_bus);
  switch (params_.pod->input) {
    case PodInput::BranchP: return snapshot.tie_flow.real() - pod_reference_;
    case PodInput::BranchQ: return snapshot.tie_flow.imag() - pod_reference_;
    case PodInput::BusV: return std::abs(vm) - pod_reference_;
    case PodInput::BusFreq: return params_.meter.output(std::arg(vm), x[kMeter]);
  }
  return 0.0;
}

double GflPlant::pod_signal(std::span<const double> x, const Snapshot& snapshot) const {
  if (!params_.pod || params_.pod->mode == PodMode::Off) return 0.0;
  const PodState ps{x[kPod], x[kPod + 1], x[kPod + 2], x[kPod + 3]};
  return pod_output(*params_.pod, ps, pod_raw_input(x, snapshot));
}

CurrentCommand GflPlant::commands(std::span<const double> x, const Snapshot& snapshot) const {
  const Complex v = snapshot.voltage(bus_);
  const PodMode mode = params_.pod ? params_.pod->mode : PodMode::Off;
  return ppc_commands(params_.ppc, refs_, {x[kVf], x[kQi]}, reactive_output(x, v), pod_signal(x, snapshot), mode);
}

void GflPlant::derivatives(std::span<const double> x, const Snapshot& snapshot, std::span<double> dx) const {
  const Complex v = snapshot.voltage(bus_);
  const auto cmd = commands(x, snapshot);
  const auto dconv = converter_derivatives(params_.converter, {x[kIp], x[kIq]}, cmd);
  dx[kIp] = dconv.ip;
  dx[kIq] = dconv.iq;
  const auto dppc = ppc_derivatives(params_.ppc, refs_, {x[kVf], x[kQi]}, std::abs(v), reactive_output(x, v));
  dx[kVf] = dppc.v_filtered;
  dx[kQi] = dppc.q_integrator;
  const auto dpll = pll_derivatives(params_.pll, {x[kPll], x[kPllInt]}, v);
  dx[kPll] = dpll.angle;
  dx[kPllInt] = dpll.integrator;
  if (params_.pod) {
    const Complex vm = snapshot.voltage(snapshot.monitored_bus);
    dx[kMeter] = params_.meter.derivative(std::arg(vm), x[kMeter]);
    const PodState ps{x[kPod], x[kPod + 1], x[kPod + 2], x[kPod + 3]};
    const auto dpod = pod_derivatives(*params_.pod, ps, pod_raw_input(x, snapshot));
    dx[kPod] = dpod.s0;
    dx[kPod + 1] = dpod.s1;
    dx[kPod + 2] = dpod.s2;
    dx[kPod + 3] = dpod.s3;
  }
}

}  // namespace lfo::gfl
