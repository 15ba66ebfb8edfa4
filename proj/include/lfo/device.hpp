#pragma once

#include <span>
#include <string>
#include <vector>

#include "lfo/network.hpp"
#include "lfo/numerics.hpp"

namespace lfo {

/// Network quantities visible to device controllers during a derivative evaluation.
struct Snapshot {
  const ComplexVector* voltages{nullptr};
  Complex tie_flow{};  // complex power leaving the monitored area over the tie, pu
  std::size_t monitored_bus{0};

  Complex voltage(std::size_t bus) const { return (*voltages)[static_cast<Eigen::Index>(bus)]; }
};

/// Dynamic device attached to one bus. States live in a caller-owned flat vector; each
/// device receives its own slice. All electrical quantities are on the system base.
class Device {
 public:
  virtual ~Device() = default;

  virtual std::string name() const = 0;
  virtual std::size_t bus() const = 0;
  virtual std::vector<std::string> state_names() const = 0;
  std::size_t state_count() const { return state_names().size(); }

  /// Sets an equilibrium state that injects `s_gen` at terminal voltage `v`.
  virtual void initialize(Complex v, Complex s_gen, const Snapshot& snapshot, std::span<double> x) = 0;

  /// Linear part of the terminal behaviour: I = current - admittance * V.
  virtual network::NortonSource norton(std::span<const double> x) const = 0;

  /// Nonlinear injection added to the Norton part; zero for linear devices.
  virtual bool has_extra_current() const { return false; }
  virtual Complex extra_current(std::span<const double> /*x*/, Complex /*v*/) const { return {}; }

  virtual void derivatives(std::span<const double> x, const Snapshot& snapshot, std::span<double> dx) const = 0;

  /// Clamps limited states after an accepted step.
  virtual void enforce_limits(std::span<double> /*x*/) const {}

  /// Total injected current at terminal voltage `v`.
  Complex terminal_current(std::span<const double> x, Complex v) const {
    const auto n = norton(x);
    Complex i = n.current - n.admittance * v;
    if (has_extra_current()) i += extra_current(x, v);
    return i;
  }
};

}  // namespace lfo
