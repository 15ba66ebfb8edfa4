#include "lfo/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace lfo::network {

std::size_t PowerSystem::bus_index(int id) const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == id) return i;
  }
  throw std::out_of_range(fmt::format("unknown bus id {}", id));
}

ComplexVector PowerSystem::voltages() const {
  ComplexVector v(static_cast<Eigen::Index>(buses.size()));
  for (std::size_t i = 0; i < buses.size(); ++i) v[static_cast<Eigen::Index>(i)] = std::polar(buses[i].v_mag, buses[i].v_ang);
  return v;
}

void PowerSystem::set_voltages(const ComplexVector& v) {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    buses[i].v_mag = std::abs(v[static_cast<Eigen::Index>(i)]);
    buses[i].v_ang = std::arg(v[static_cast<Eigen::Index>(i)]);
  }
}

namespace {

std::size_t find_bus(std::span<const Bus> buses, int id) {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].id == id) return i;
  }
  throw std::out_of_range(fmt::format("branch references unknown bus {}", id));
}

}  // namespace

bool is_connected(std::span<const Bus> buses, std::span<const Branch> branches) {
  if (buses.empty()) return false;
  std::vector<std::size_t> parent(buses.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto root = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (const auto& br : branches) {
    if (!br.in_service) continue;
    parent[root(find_bus(buses, br.from_bus))] = root(find_bus(buses, br.to_bus));
  }
  const std::size_t r0 = root(0);
  for (std::size_t i = 1; i < buses.size(); ++i) {
    if (root(i) != r0) return false;
  }
  return true;
}

ComplexMatrix build_admittance(std::span<const Bus> buses, std::span<const Branch> branches) {
  const auto n = static_cast<Eigen::Index>(buses.size());
  if (n == 0) throw std::invalid_argument("build_admittance: no buses");
  ComplexMatrix y = ComplexMatrix::Zero(n, n);
  bool any_in_service = false;
  for (const auto& br : branches) {
    const auto f = static_cast<Eigen::Index>(find_bus(buses, br.from_bus));
    const auto t = static_cast<Eigen::Index>(find_bus(buses, br.to_bus));
    if (!br.in_service) continue;
    if (br.x == 0.0) throw std::invalid_argument(fmt::format("branch {} has zero reactance", br.name));
    if (!(br.scale > 0.0)) throw std::invalid_argument(fmt::format("branch {} has non-positive scale", br.name));
    any_in_service = true;
    const Complex ys = 1.0 / (br.scale * Complex(br.r, br.x));
    const Complex ysh(0.0, br.b_shunt / 2.0);
    y(f, f) += ys + ysh;
    y(t, t) += ys + ysh;
    y(f, t) -= ys;
    y(t, f) -= ys;
  }
  if (!any_in_service) throw std::invalid_argument("build_admittance: no branch in service");
  if (!is_connected(buses, branches)) throw DisconnectedNetwork("in-service network is not connected");
  return y;
}

Complex branch_flow_from(const Branch& branch, Complex v_from, Complex v_to) {
  if (!branch.in_service) return {};
  const Complex ys = 1.0 / (branch.scale * Complex(branch.r, branch.x));
  const Complex i = (v_from - v_to) * ys + Complex(0.0, branch.b_shunt / 2.0) * v_from;
  return v_from * std::conj(i);
}

ComplexVector power_mismatch(const PowerSystem& system, const ComplexMatrix& y) {
  const ComplexVector v = system.voltages();
  const ComplexVector s_calc = v.cwiseProduct((y * v).conjugate());
  ComplexVector s_spec(v.size());
  for (std::size_t i = 0; i < system.buses.size(); ++i) {
    s_spec[static_cast<Eigen::Index>(i)] = Complex(system.buses[i].p_gen, system.buses[i].q_gen);
  }
  for (const auto& ld : system.loads) {
    s_spec[static_cast<Eigen::Index>(system.bus_index(ld.bus))] -= Complex(ld.p0_mw, ld.q0_mvar) / system.base_mva;
  }
  return s_spec - s_calc;
}

PowerFlowResult solve_power_flow(PowerSystem& system, const PowerFlowOptions& options) {
  const ComplexMatrix y = build_admittance(system.buses, system.branches);
  const auto n = static_cast<Eigen::Index>(system.buses.size());

  std::vector<Eigen::Index> ang_idx, mag_idx;
  int slack_count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto kind = system.buses[static_cast<std::size_t>(i)].kind;
    if (kind == BusKind::Slack) {
      ++slack_count;
      continue;
    }
    ang_idx.push_back(i);
    if (kind == BusKind::PQ) mag_idx.push_back(i);
  }
  if (slack_count != 1) throw std::invalid_argument("power flow requires exactly one slack bus");

  ComplexVector s_load = ComplexVector::Zero(n);
  for (const auto& ld : system.loads) {
    s_load[static_cast<Eigen::Index>(system.bus_index(ld.bus))] += Complex(ld.p0_mw, ld.q0_mvar) / system.base_mva;
  }

  Eigen::VectorXd vm(n), va(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    vm[i] = system.buses[static_cast<std::size_t>(i)].v_mag;
    va[i] = system.buses[static_cast<std::size_t>(i)].v_ang;
  }

  const auto na = static_cast<Eigen::Index>(ang_idx.size());
  const auto nm = static_cast<Eigen::Index>(mag_idx.size());
  PowerFlowResult result;

  auto evaluate = [&](ComplexVector& v, ComplexVector& ibus, Eigen::VectorXd& f, int& worst) {
    for (Eigen::Index i = 0; i < n; ++i) v[i] = std::polar(vm[i], va[i]);
    ibus = y * v;
    const ComplexVector s = v.cwiseProduct(ibus.conjugate());
    f.resize(na + nm);
    double worst_val = -1.0;
    for (Eigen::Index k = 0; k < na; ++k) {
      const auto i = ang_idx[static_cast<std::size_t>(k)];
      f[k] = s[i].real() - (system.buses[static_cast<std::size_t>(i)].p_gen - s_load[i].real());
      if (std::abs(f[k]) > worst_val) {
        worst_val = std::abs(f[k]);
        worst = system.buses[static_cast<std::size_t>(i)].id;
      }
    }
    for (Eigen::Index k = 0; k < nm; ++k) {
      const auto i = mag_idx[static_cast<std::size_t>(k)];
      f[na + k] = s[i].imag() - (system.buses[static_cast<std::size_t>(i)].q_gen - s_load[i].imag());
      if (std::abs(f[na + k]) > worst_val) {
        worst_val = std::abs(f[na + k]);
        worst = system.buses[static_cast<std::size_t>(i)].id;
      }
    }
    return f.size() > 0 ? f.cwiseAbs().maxCoeff() : 0.0;
  };

  ComplexVector v(n), ibus(n);
  Eigen::VectorXd f;
  int worst_bus = system.buses.front().id;
  double mismatch = evaluate(v, ibus, f, worst_bus);

  while (mismatch > options.tolerance && result.iterations < options.max_iterations) {
    // dS/dVa = j diag(V) conj(diag(I) - Y diag(V)); dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
    const ComplexVector vnorm = v.cwiseQuotient(vm.cast<Complex>());
    const ComplexMatrix ds_dva =
        Complex(0.0, 1.0) * v.asDiagonal() * (ComplexMatrix(ibus.asDiagonal()) - y * v.asDiagonal()).conjugate();
    const ComplexMatrix ds_dvm =
        v.asDiagonal() * (y * vnorm.asDiagonal()).conjugate() + ComplexMatrix(ibus.conjugate().asDiagonal()) * vnorm.asDiagonal();

    Eigen::MatrixXd jac(na + nm, na + nm);
    for (Eigen::Index r = 0; r < na; ++r) {
      const auto i = ang_idx[static_cast<std::size_t>(r)];
      for (Eigen::Index c = 0; c < na; ++c) jac(r, c) = ds_dva(i, ang_idx[static_cast<std::size_t>(c)]).real();
      for (Eigen::Index c = 0; c < nm; ++c) jac(r, na + c) = ds_dvm(i, mag_idx[static_cast<std::size_t>(c)]).real();
    }
    for (Eigen::Index r = 0; r < nm; ++r) {
      const auto i = mag_idx[static_cast<std::size_t>(r)];
      for (Eigen::Index c = 0; c < na; ++c) jac(na + r, c) = ds_dva(i, ang_idx[static_cast<std::size_t>(c)]).imag();
      for (Eigen::Index c = 0; c < nm; ++c) jac(na + r, na + c) = ds_dvm(i, mag_idx[static_cast<std::size_t>(c)]).imag();
    }
    const Eigen::VectorXd dx = jac.partialPivLu().solve(-f);
    for (Eigen::Index k = 0; k < na; ++k) va[ang_idx[static_cast<std::size_t>(k)]] += dx[k];
    for (Eigen::Index k = 0; k < nm; ++k) vm[mag_idx[static_cast<std::size_t>(k)]] += dx[na + k];
    ++result.iterations;
    mismatch = evaluate(v, ibus, f, worst_bus);
    if (!std::isfinite(mismatch)) break;
  }

  if (!(mismatch <= options.acceptance)) {
    throw PowerFlowDiverged(
        fmt::format("power flow diverged after {} iterations; worst mismatch {:.3g} pu at bus {}",
                    result.iterations, mismatch, worst_bus),
        worst_bus, mismatch);
  }
  result.max_mismatch = mismatch;

  const ComplexVector s = v.cwiseProduct(ibus.conjugate());
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& bus = system.buses[static_cast<std::size_t>(i)];
    bus.v_mag = vm[i];
    bus.v_ang = va[i];
    const Complex gen = s[i] + s_load[i];
    if (bus.kind == BusKind::Slack) {
      bus.p_gen = gen.real();
      bus.q_gen = gen.imag();
    } else if (bus.kind == BusKind::PV) {
      bus.q_gen = gen.imag();
    }
  }
  return result;
}

std::vector<LoadModel> resolve_loads(const PowerSystem& system) {
  std::vector<LoadModel> out;
  out.reserve(system.loads.size());
  for (const auto& ld : system.loads) {
    out.push_back({system.bus_index(ld.bus), ld.p0_mw / system.base_mva, ld.q0_mvar / system.base_mva, ld.v0});
  }
  return out;
}

namespace {

/// Magnitude scaling of the constant-current part; linear to zero below `low_voltage`.
double active_current_magnitude(double p0, double v0, double vmag, double low_voltage) {
  const double base = p0 / v0;
  return vmag >= low_voltage ? base : base * vmag / low_voltage;
}

Complex unit_phasor(Complex v) {
  const double m = std::abs(v);
  return m > 0.0 ? v / m : Complex(1.0, 0.0);
}

}  // namespace

Complex zi_load_current(const LoadModel& load, Complex v, double low_voltage) {
  const double vmag = std::abs(v);
  const Complex i_p = active_current_magnitude(load.p0, load.v0, vmag, low_voltage) * unit_phasor(v);
  const Complex i_q = Complex(0.0, -load.q0 / (load.v0 * load.v0)) * v;
  return i_p + i_q;
}

Complex zi_load_current(const ZiLoad& load, Complex v, double base_mva, double low_voltage) {
  return zi_load_current(LoadModel{0, load.p0_mw / base_mva, load.q0_mvar / base_mva, load.v0}, v, low_voltage);
}

ComplexVector network_solution(const ComplexMatrix& y, std::span<const NortonSource> sources,
                               std::span<const LoadModel> loads, std::span<const CurrentInjector> injectors,
                               const ComplexVector& v_guess, const NetworkSolveOptions& options,
                               NetworkSolveStats* stats) {
  const auto n = y.rows();
  if (v_guess.size() != n) throw std::invalid_argument("network_solution: guess has wrong dimension");
  const bool has_source = !injectors.empty() || std::any_of(sources.begin(), sources.end(), [](const auto& s) {
                            return s.current != Complex{};
                          });
  if (!has_source) throw std::invalid_argument("network_solution: no current source in the network");

  // Linear part: network, Norton admittances and the constant-impedance share of the loads.
  ComplexMatrix a = y;
  ComplexVector i_fixed = ComplexVector::Zero(n);
  for (const auto& src : sources) {
    const auto k = static_cast<Eigen::Index>(src.bus);
    a(k, k) += src.admittance;
    i_fixed[k] += src.current;
  }
  for (const auto& ld : loads) {
    const auto k = static_cast<Eigen::Index>(ld.bus);
    a(k, k) += Complex(0.0, -ld.q0 / (ld.v0 * ld.v0));
  }

  // Voltage-dependent current leaving each bus: constant-current loads minus injectors.
  auto nonlinear = [&](Eigen::Index k, Complex v) {
    Complex i{};
    for (const auto& ld : loads) {
      if (static_cast<Eigen::Index>(ld.bus) == k) {
        i += active_current_magnitude(ld.p0, ld.v0, std::abs(v), options.low_voltage) * unit_phasor(v);
      }
    }
    for (const auto& inj : injectors) {
      if (static_cast<Eigen::Index>(inj.bus) == k) i -= inj.current(v);
    }
    return i;
  };
  std::vector<bool> has_nonlinear(static_cast<std::size_t>(n), false);
  for (const auto& ld : loads) has_nonlinear[ld.bus] = true;
  for (const auto& inj : injectors) has_nonlinear[inj.bus] = true;

  // Newton iteration on the real and imaginary parts of A V - I_fixed + I_nl(V) = 0.
  Eigen::MatrixXd jac_linear(2 * n, 2 * n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      const Complex z = a(r, c);
      jac_linear(2 * r, 2 * c) = z.real();
      jac_linear(2 * r, 2 * c + 1) = -z.imag();
      jac_linear(2 * r + 1, 2 * c) = z.imag();
      jac_linear(2 * r + 1, 2 * c + 1) = z.real();
    }
  }
  ComplexVector v = v_guess;
  double update = 0.0;
  for (int it = 1; it <= options.max_iterations; ++it) {
    ComplexVector f = a * v - i_fixed;
    Eigen::MatrixXd jac = jac_linear;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (!has_nonlinear[static_cast<std::size_t>(k)]) continue;
      const Complex i0 = nonlinear(k, v[k]);
      f[k] += i0;
      const double h = 1e-7 * std::max(1.0, std::abs(v[k]));
      const Complex dr = (nonlinear(k, v[k] + h) - nonlinear(k, v[k] - h)) / (2.0 * h);
      const Complex di = (nonlinear(k, v[k] + Complex(0.0, h)) - nonlinear(k, v[k] - Complex(0.0, h))) / (2.0 * h);
      jac(2 * k, 2 * k) += dr.real();
      jac(2 * k + 1, 2 * k) += dr.imag();
      jac(2 * k, 2 * k + 1) += di.real();
      jac(2 * k + 1, 2 * k + 1) += di.imag();
    }
    Eigen::VectorXd rhs(2 * n);
    for (Eigen::Index k = 0; k < n; ++k) {
      rhs[2 * k] = -f[k].real();
      rhs[2 * k + 1] = -f[k].imag();
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    if (!(lu.rcond() > 1e-14)) throw SingularMatrix("network matrix is singular (islanded or degenerate network)");
    const Eigen::VectorXd dx = lu.solve(rhs);
    update = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const Complex dv(dx[2 * k], dx[2 * k + 1]);
      v[k] += dv;
      update = std::max(update, std::abs(dv));
    }
    if (!std::isfinite(update)) break;
    if (update < options.tolerance) {
      if (stats) *stats = {it, update};
      return v;
    }
  }
  throw NetworkSolutionDiverged(
      fmt::format("network solution did not converge in {} iterations (last update {:.3g})", options.max_iterations, update));
}

ComplexMatrix apply_fault(const ComplexMatrix& y, std::size_t bus, Complex fault_admittance) {
  if (bus >= static_cast<std::size_t>(y.rows())) throw std::out_of_range(fmt::format("fault bus {} out of range", bus));
  ComplexMatrix faulted = y;
  const auto k = static_cast<Eigen::Index>(bus);
  faulted(k, k) += fault_admittance;
  return faulted;
}

ComplexMatrix clear_fault(const ComplexMatrix& faulted, std::size_t bus, Complex original_diagonal) {
  if (bus >= static_cast<std::size_t>(faulted.rows())) throw std::out_of_range(fmt::format("fault bus {} out of range", bus));
  ComplexMatrix cleared = faulted;
  const auto k = static_cast<Eigen::Index>(bus);
  cleared(k, k) = original_diagonal;
  return cleared;
}

}  // namespace lfo::network
