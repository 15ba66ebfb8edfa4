#include "doctest.h"

#include <cmath>
#include <complex>
#include <vector>

#include "lfo/machines.hpp"

using namespace lfo;
using namespace lfo::machines;

namespace {

double max_abs(const SyncMachineState& d) {
  return std::max({std::abs(d.delta), std::abs(d.speed_dev), std::abs(d.eq1), std::abs(d.ed1), std::abs(d.psi_kd),
                   std::abs(d.psi_kq)});
}

// Steady sinusoid fit y ~ a sin(wt) + b cos(wt) + c; returns gain and phase of (a, b).
std::pair<double, double> fit_sinusoid(const std::vector<double>& t, const std::vector<double>& y, double w) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.size()), 3);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(t.size()));
  for (std::size_t k = 0; k < t.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    m(i, 0) = std::sin(w * t[k]);
    m(i, 1) = std::cos(w * t[k]);
    m(i, 2) = 1.0;
    rhs(i) = y[k];
  }
  const Eigen::VectorXd c = m.colPivHouseholderQr().solve(rhs);
  return {std::hypot(c(0), c(1)), std::atan2(c(1), c(0))};
}

Complex lead_lag_tf(Complex s, double t_lead, double t_lag) { return (1.0 + s * t_lead) / (1.0 + s * t_lag); }
Complex washout_tf(Complex s, double tw) { return s * tw / (1.0 + s * tw); }

}  // namespace

TEST_CASE("machine equilibrium from initialization") {
  SyncMachineParams p;
  p.mva_base = 100.0;
  for (const Complex s : {Complex(0.9, 0.3), Complex(0.5, -0.1), Complex(0.0, 0.0)}) {
    const Complex v = std::polar(1.02, 0.2);
    const auto init = initialize_sync_machine(p, v, s);
    const auto d = sync_machine_derivatives(init.state, p, init.efd, init.pm, v);
    CHECK(max_abs(d) < 1e-6);
    const Complex i = stator_current(init.state, p, v);
    CHECK(std::abs(v * std::conj(i) - s) < 1e-6);
  }
}

TEST_CASE("mechanical power step accelerates the rotor by dP/2H") {
  SyncMachineParams p;
  const Complex v = std::polar(1.0, 0.1);
  const auto init = initialize_sync_machine(p, v, Complex(0.8, 0.2));
  const auto d = sync_machine_derivatives(init.state, p, init.efd, init.pm + 0.1, v);
  CHECK(d.speed_dev == doctest::Approx(0.1 / (2.0 * p.h)).epsilon(1e-9));
}

TEST_CASE("undamped machine on an infinite bus stays energy bounded") {
  SyncMachineParams p;
  p.d = 0.0;
  const Complex v_inf(1.0, 0.0);
  const double xe = 0.3;
  auto terminal = [&](const SyncMachineState& s) {
    const Complex e = subtransient_emf(s, p);
    const Complex i = (e - v_inf) / Complex(p.ra, p.xd2 + xe);
    return v_inf + Complex(0.0, xe) * i;
  };
  // initialize at the terminal voltage consistent with 0.8 + j0.1 delivered through xe
  Complex vt(1.0, 0.0);
  const Complex s_gen(0.8, 0.1);
  for (int k = 0; k < 50; ++k) {
    const Complex i = std::conj(s_gen / vt);
    vt = v_inf + Complex(0.0, xe) * i;
  }
  const auto init = initialize_sync_machine(p, vt, s_gen);
  auto st = init.state;
  st.delta += 0.02;
  std::vector<double> x(SyncMachineState::kSize);
  st.store(x);
  const double dt = 1.0 / 240.0;
  std::vector<double> dev;
  for (int k = 0; k < 240 * 10; ++k) {
    x = numerics::heun_step(
        x,
        [&](std::span<const double> in, std::span<double> out) {
          const auto s = SyncMachineState::load(in);
          sync_machine_derivatives(s, p, init.efd, init.pm, terminal(s)).store(out);
        },
        dt);
    dev.push_back(SyncMachineState::load(x).delta - init.state.delta);
  }
  double first = 0.0, last = 0.0;
  for (int k = 0; k < 240 * 2; ++k) first = std::max(first, std::abs(dev[static_cast<std::size_t>(k)]));
  for (std::size_t k = dev.size() - 480; k < dev.size(); ++k) last = std::max(last, std::abs(dev[k]));
  CHECK(first <= 0.0201);
  CHECK(last <= first * 1.001);
}

TEST_CASE("machine Norton round trip") {
  SyncMachineParams p;
  const SyncMachineState zero{};
  CHECK(std::abs(sync_machine_norton(zero, p).current) == 0.0);

  const Complex v = std::polar(1.01, -0.15);
  const Complex s(0.7, 0.25);
  const auto init = initialize_sync_machine(p, v, s);
  const auto n = sync_machine_norton(init.state, p);
  // one bus with a constant-impedance load absorbing the machine output
  const Complex y_load = std::conj(s) / std::norm(v);
  const Complex v_solved = n.current / (n.admittance + y_load);
  CHECK(std::abs(v_solved - v) < 1e-8);
  CHECK((v * std::conj(n.current - n.admittance * v)).real() == doctest::Approx(s.real()).epsilon(1e-9));
}

TEST_CASE("saturation curve") {
  const SaturationCurve sat(0.039, 0.267);
  CHECK(sat(1.0) == doctest::Approx(0.039));
  CHECK(sat(1.2) == doctest::Approx(0.267));
  double prev = -1.0;
  for (double e = 0.0; e <= 1.6; e += 0.01) {
    CHECK(sat(e) >= prev);
    prev = sat(e);
  }
  CHECK(SaturationCurve(0.0, 0.0)(1.3) == 0.0);
}

TEST_CASE("machine parameter validation") {
  SyncMachineParams p;
  CHECK_NOTHROW(p.validate());
  p.xd2 = 0.1;  // below Xl
  CHECK_THROWS(p.validate());
  p = {};
  p.h = 0.0;
  CHECK_THROWS(p.validate());
  p = {};
  p.td01 = 0.0;
  CHECK_THROWS(p.validate());
}

TEST_CASE("exciter equilibrium, voltage dip and stabilizing signal") {
  ExciterParams p;
  p.ki = 0.0;
  const double efd0 = 2.1;
  auto st = exciter_init(p, 1.0, efd0);
  const double dt = 1.0 / 240.0;
  for (int k = 0; k < 240; ++k) CHECK(exciter_step(p, 1.0, 1.0, 0.0, st, dt) == doctest::Approx(efd0));

  auto dip = exciter_init(p, 1.0, efd0);
  double prev = efd0;
  for (int k = 0; k < 240; ++k) {
    const double efd = exciter_step(p, 1.0, 0.95, 0.0, dip, dt);
    CHECK(efd >= prev);
    prev = efd;
  }
  CHECK(prev == doctest::Approx(p.efd_max));

  auto pss = exciter_init(p, 1.0, efd0);
  double efd = 0.0;
  for (int k = 0; k < 240; ++k) efd = exciter_step(p, 1.0, 1.0, 0.005, pss, dt);
  CHECK(efd > efd0);

  ExciterParams pi = p;
  pi.ki = 50.0;
  auto wind = exciter_init(pi, 1.0, efd0);
  for (int k = 0; k < 2400; ++k) exciter_step(pi, 1.0, 0.5, 0.0, wind, dt);
  CHECK(wind.integrator <= pi.efd_max);
}

TEST_CASE("governor droop and valve limits") {
  GovernorParams p;
  const double pref = 0.7;
  auto st = governor_init(p, pref);
  const double dt = 1.0 / 240.0;
  CHECK(governor_step(p, 0.0, pref, st, dt) == doctest::Approx(pref));

  double pm = 0.0;
  for (int k = 0; k < 240 * 40; ++k) pm = governor_step(p, p.r * 0.1, pref, st, dt);
  CHECK(pm == doctest::Approx(pref - 0.1).epsilon(1e-6));

  auto hi = governor_init(p, pref);
  for (int k = 0; k < 240 * 40; ++k) pm = governor_step(p, -1.0, pref, hi, dt);
  CHECK(pm == doctest::Approx(p.vmax));
  CHECK(hi.valve <= p.vmax);
}

TEST_CASE("stabilizer rejects steady inputs") {
  const DualInputPss pss(PssParams{});
  auto st = pss.initialize(0.8);
  const double dt = 1.0 / 240.0;
  double out = 1.0;
  for (int k = 0; k < 240 * 100; ++k) out = pss_dual_input_step(pss, 0.8, 0.0, st, dt);
  CHECK(std::abs(out) < 1e-4);
}

TEST_CASE("stabilizer phase compensation at 0.9 Hz matches the block-chain response") {
  PssParams p;
  const DualInputPss pss(p);
  auto st = pss.initialize(0.0);
  const double dt = 1.0 / 240.0, w = 2.0 * kPi * 0.9, amp = 1e-5;
  std::vector<double> t, y;
  for (int k = 0; k < 240 * 120; ++k) {
    const double tk = k * dt;
    const double out = pss_dual_input_step(pss, 0.0, amp * std::sin(w * tk), st, dt);
    if (tk >= 100.0) {
      t.push_back(tk);
      y.push_back(out);
    }
  }
  const Complex s(0.0, w);
  Complex h = washout_tf(s, p.tw1) * washout_tf(s, p.tw2) * lead_lag_tf(s, p.t8, p.t9) * p.ks1 *
              lead_lag_tf(s, p.t1, p.t2) * lead_lag_tf(s, p.t3, p.t4);
  for (int k = 1; k < p.m; ++k) h /= (1.0 + s * p.t9);
  const auto [gain, phase] = fit_sinusoid(t, y, w);
  CHECK(gain == doctest::Approx(amp * std::abs(h)).epsilon(0.02));
  CHECK(std::abs(numerics::wrap_angle(phase - std::arg(h))) < 5.0 * kPi / 180.0);
}

TEST_CASE("stabilizer output stays inside its limits") {
  PssParams p;
  const DualInputPss pss(p);
  auto st = pss.initialize(0.5);
  const double dt = 1.0 / 240.0;
  for (int k = 0; k < 240 * 10; ++k) {
    const double tk = k * dt;
    const double out = pss_dual_input_step(pss, 0.5 + 0.3 * std::sin(3.0 * tk), 0.05 * std::sin(6.0 * tk), st, dt);
    CHECK(out <= p.vmax);
    CHECK(out >= p.vmin);
  }
}
