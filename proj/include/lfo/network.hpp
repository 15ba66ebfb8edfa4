#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lfo/numerics.hpp"

namespace lfo::network {

enum class BusKind { Slack, PV, PQ };

struct Bus {
  int id{0};
  BusKind kind{BusKind::PQ};
  double v_mag{1.0};  // pu; PV/slack setpoint before the solve
  double v_ang{0.0};  // rad
  double base_kv{230.0};
  double p_gen{0.0};  // pu, system base; scheduled for PV, solved for slack
  double q_gen{0.0};  // pu; solved for PV and slack
};

struct Branch {
  std::string name;
  int from_bus{0};
  int to_bus{0};
  double r{0.0};
  double x{0.0};
  double b_shunt{0.0};  // total line charging, pu
  bool in_service{true};
  double scale{1.0};  // series impedance multiplier
};

/// Constant-current P / constant-impedance Q load, specified at reference voltage v0.
struct ZiLoad {
  int bus{0};
  double p0_mw{0.0};
  double q0_mvar{0.0};
  double v0{1.0};
};

class DisconnectedNetwork : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PowerFlowDiverged : public std::runtime_error {
 public:
  PowerFlowDiverged(const std::string& what, int worst_bus, double mismatch)
      : std::runtime_error(what), worst_bus_(worst_bus), mismatch_(mismatch) {}
  int worst_bus() const { return worst_bus_; }
  double mismatch() const { return mismatch_; }

 private:
  int worst_bus_;
  double mismatch_;
};

class NetworkSolutionDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PowerSystem {
 public:
  double base_mva{100.0};
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<ZiLoad> loads;

  /// Position of bus `id` in `buses`; throws std::out_of_range for unknown ids.
  std::size_t bus_index(int id) const;
  ComplexVector voltages() const;
  void set_voltages(const ComplexVector& v);
};

/// Y[i][i] = sum(1/Z + jB/2) over incident in-service branches; Y[i][k] = -sum(1/Z).
/// Throws DisconnectedNetwork when the in-service graph is not connected.
ComplexMatrix build_admittance(std::span<const Bus> buses, std::span<const Branch> branches);

/// True when every bus is reachable through in-service branches.
bool is_connected(std::span<const Bus> buses, std::span<const Branch> branches);

/// Complex power (pu) entering `branch` at its from-end.
Complex branch_flow_from(const Branch& branch, Complex v_from, Complex v_to);

struct PowerFlowOptions {
  double tolerance{1e-10};
  double acceptance{1e-8};
  int max_iterations{20};
};

struct PowerFlowResult {
  int iterations{0};
  double max_mismatch{0.0};
};

/// Newton-Raphson power flow in polar form. Loads are treated as constant power at
/// their nameplate values. Writes the solved voltages, slack P/Q and PV Q back into
/// `system.buses`.
PowerFlowResult solve_power_flow(PowerSystem& system, const PowerFlowOptions& options = {});

/// Per-bus complex power mismatch S_spec - V conj(Y V) for the current bus state.
ComplexVector power_mismatch(const PowerSystem& system, const ComplexMatrix& y);

/// Load expressed on the system base and bound to a bus position.
struct LoadModel {
  std::size_t bus{0};
  double p0{0.0};  // pu at v0
  double q0{0.0};
  double v0{1.0};
};

std::vector<LoadModel> resolve_loads(const PowerSystem& system);

/// Current drawn by a ZI load: P scales with |v|/v0 (constant current), Q with (|v|/v0)^2.
/// Below `low_voltage` the constant-current magnitude ramps linearly to zero.
Complex zi_load_current(const ZiLoad& load, Complex v, double base_mva, double low_voltage = 0.2);
Complex zi_load_current(const LoadModel& load, Complex v, double low_voltage = 0.2);

/// Norton equivalent of a device at a bus: injects `current` with `admittance` to ground.
struct NortonSource {
  std::size_t bus{0};
  Complex current{};
  Complex admittance{};
};

/// Extra voltage-dependent injection a device adds on top of its Norton part.
struct CurrentInjector {
  std::size_t bus{0};
  std::function<Complex(Complex)> current;
};

struct NetworkSolveOptions {
  double tolerance{1e-8};
  int max_iterations{60};
  double low_voltage{0.2};
};

struct NetworkSolveStats {
  int iterations{0};
  double last_update{0.0};
};

/// Solves (Y + diag(y_src)) V = I_src + I_inj(V) - I_load(V) by Newton iteration on the
/// real and imaginary parts, seeded with `v_guess`. Throws std::invalid_argument when no
/// source is present and NetworkSolutionDiverged when the update stalls.
ComplexVector network_solution(const ComplexMatrix& y, std::span<const NortonSource> sources,
                               std::span<const LoadModel> loads, std::span<const CurrentInjector> injectors,
                               const ComplexVector& v_guess, const NetworkSolveOptions& options = {},
                               NetworkSolveStats* stats = nullptr);

/// Adds a shunt fault admittance at `bus`. Throws std::out_of_range for a bad bus.
ComplexMatrix apply_fault(const ComplexMatrix& y, std::size_t bus, Complex fault_admittance);

/// Restores the diagonal entry saved before the fault; yields the pre-fault matrix exactly.
ComplexMatrix clear_fault(const ComplexMatrix& faulted, std::size_t bus, Complex original_diagonal);

}  // namespace lfo::network
