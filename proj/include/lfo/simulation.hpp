#pragma once

#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lfo/device.hpp"
#include "lfo/network.hpp"
#include "lfo/numerics.hpp"

namespace lfo::sim {

class InitializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Time-domain model: network algebra plus every device's differential states in one
/// flat vector. Heun steps re-solve the network at both stages.
class DynamicSystem {
 public:
  /// `system` must hold a solved power flow. Each device is initialized from the bus
  /// voltage and the generation assigned to it in `generation` (system pu).
  DynamicSystem(network::PowerSystem system, std::vector<std::unique_ptr<Device>> devices,
                std::vector<std::size_t> tie_branches, std::size_t monitored_bus,
                network::NetworkSolveOptions solve_options = {});

  void initialize(std::span<const Complex> generation);

  double time() const { return time_; }
  std::span<const double> state() const { return x_; }
  const ComplexVector& voltages() const { return v_; }
  const network::PowerSystem& system() const { return system_; }
  const std::vector<std::unique_ptr<Device>>& devices() const { return devices_; }
  std::span<const double> device_state(std::size_t device) const;
  std::size_t device_offset(std::size_t device) const { return offsets_[device]; }

  /// Evaluates the global derivative at `x`; the network solution is written to `v`.
  void derivatives(std::span<const double> x, ComplexVector& v, std::span<double> dx) const;

  /// Largest |dx/dt| over all states at the present point, with the state's label.
  std::pair<double, std::string> max_derivative() const;

  void step(double dt);

  void apply_fault(std::size_t bus, Complex admittance);
  void clear_fault();
  bool faulted() const { return fault_bus_.has_value(); }

  /// Adds (dp + j dq) pu, system base, to the ZI load at `bus` (at its reference voltage).
  void change_load(std::size_t bus, double dp, double dq);

  Complex tie_flow() const { return tie_flow(v_); }
  Complex tie_flow(const ComplexVector& v) const;
  Complex device_injection(std::size_t device) const;  // S = V conj(I), system pu
  Complex load_power() const;

  /// |sum(device S) - sum(load S) - sum(network S)|, system pu.
  double power_balance_residual() const;

 private:
  ComplexVector solve(std::span<const double> x, const ComplexVector& guess) const;
  Snapshot snapshot(const ComplexVector& v) const;

  network::PowerSystem system_;
  std::vector<std::unique_ptr<Device>> devices_;
  std::vector<std::size_t> tie_branches_;
  std::size_t monitored_bus_;
  network::NetworkSolveOptions solve_options_;
  ComplexMatrix y_;
  std::vector<network::LoadModel> loads_;
  std::vector<std::size_t> offsets_;
  std::vector<std::string> labels_;
  std::vector<double> x_;
  ComplexVector v_;
  double time_{0.0};
  std::optional<std::size_t> fault_bus_;
  Complex saved_diagonal_{};
};

}  // namespace lfo::sim
