#include "lfo/simulation.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace lfo::sim {

DynamicSystem::DynamicSystem(network::PowerSystem system, std::vector<std::unique_ptr<Device>> devices,
                             std::vector<std::size_t> tie_branches, std::size_t monitored_bus,
                             network::NetworkSolveOptions solve_options)
    : system_(std::move(system)),
      devices_(std::move(devices)),
      tie_branches_(std::move(tie_branches)),
      monitored_bus_(monitored_bus),
      solve_options_(solve_options) {
  if (devices_.empty()) throw std::invalid_argument("DynamicSystem needs at least one device");
  for (auto b : tie_branches_) {
    if (b >= system_.branches.size()) throw std::out_of_range(fmt::format("tie branch index {} out of range", b));
  }
  if (monitored_bus_ >= system_.buses.size()) throw std::out_of_range("monitored bus out of range");
  y_ = network::build_admittance(system_.buses, system_.branches);
  loads_ = network::resolve_loads(system_);
  std::size_t offset = 0;
  for (const auto& d : devices_) {
    if (d->bus() >= system_.buses.size()) throw std::out_of_range(fmt::format("{}: bus index out of range", d->name()));
    offsets_.push_back(offset);
    for (const auto& s : d->state_names()) labels_.push_back(d->name() + "." + s);
    offset += d->state_count();
  }
  x_.assign(offset, 0.0);
  v_ = system_.voltages();
}

std::span<const double> DynamicSystem::device_state(std::size_t device) const {
  return std::span<const double>(x_).subspan(offsets_[device], devices_[device]->state_count());
}

Snapshot DynamicSystem::snapshot(const ComplexVector& v) const { return {&v, tie_flow(v), monitored_bus_}; }

void DynamicSystem::initialize(std::span<const Complex> generation) {
  if (generation.size() != devices_.size()) throw std::invalid_argument("one generation entry per device required");
  v_ = system_.voltages();
  const Snapshot snap = snapshot(v_);
  std::span<double> x(x_);
  for (std::size_t k = 0; k < devices_.size(); ++k) {
    const auto& d = devices_[k];
    d->initialize(v_[static_cast<Eigen::Index>(d->bus())], generation[k], snap, x.subspan(offsets_[k], d->state_count()));
  }
  v_ = solve(x_, v_);
  time_ = 0.0;
}

ComplexVector DynamicSystem::solve(std::span<const double> x, const ComplexVector& guess) const {
  std::vector<network::NortonSource> sources;
  std::vector<network::CurrentInjector> injectors;
  sources.reserve(devices_.size());
  for (std::size_t k = 0; k < devices_.size(); ++k) {
    const auto& d = devices_[k];
    const auto xs = x.subspan(offsets_[k], d->state_count());
    sources.push_back(d->norton(xs));
    if (d->has_extra_current()) {
      const Device* dev = d.get();
      injectors.push_back({d->bus(), [dev, xs](Complex v) { return dev->extra_current(xs, v); }});
    }
  }
  return network::network_solution(y_, sources, loads_, injectors, guess, solve_options_);
}

void DynamicSystem::derivatives(std::span<const double> x, ComplexVector& v, std::span<double> dx) const {
  v = solve(x, v);
  const Snapshot snap = snapshot(v);
  for (std::size_t k = 0; k < devices_.size(); ++k) {
    const auto n = devices_[k]->state_count();
    devices_[k]->derivatives(x.subspan(offsets_[k], n), snap, dx.subspan(offsets_[k], n));
  }
}

std::pair<double, std::string> DynamicSystem::max_derivative() const {
  std::vector<double> dx(x_.size());
  ComplexVector v = v_;
  derivatives(x_, v, dx);
  std::size_t worst = 0;
  for (std::size_t i = 1; i < dx.size(); ++i) {
    if (std::abs(dx[i]) > std::abs(dx[worst])) worst = i;
  }
  return {std::abs(dx[worst]), labels_[worst]};
}

void DynamicSystem::step(double dt) {
  ComplexVector v = v_;
  auto next = numerics::heun_step(x_, [&](std::span<const double> x, std::span<double> dx) { derivatives(x, v, dx); },
                                  dt);
  std::span<double> xs(next);
  for (std::size_t k = 0; k < devices_.size(); ++k) {
    devices_[k]->enforce_limits(xs.subspan(offsets_[k], devices_[k]->state_count()));
  }
  x_ = std::move(next);
  v_ = solve(x_, v);
  time_ += dt;
}

void DynamicSystem::apply_fault(std::size_t bus, Complex admittance) {
  if (fault_bus_) throw std::logic_error("a fault is already applied");
  saved_diagonal_ = y_(static_cast<Eigen::Index>(bus), static_cast<Eigen::Index>(bus));
  y_ = network::apply_fault(y_, bus, admittance);
  fault_bus_ = bus;
  v_ = solve(x_, v_);
}

void DynamicSystem::clear_fault() {
  if (!fault_bus_) throw std::logic_error("no fault to clear");
  y_ = network::clear_fault(y_, *fault_bus_, saved_diagonal_);
  fault_bus_.reset();
  v_ = solve(x_, v_);
}

void DynamicSystem::change_load(std::size_t bus, double dp, double dq) {
  auto it = std::find_if(loads_.begin(), loads_.end(), [bus](const auto& l) { return l.bus == bus; });
  if (it == loads_.end()) throw std::invalid_argument(fmt::format("no load at bus index {}", bus));
  it->p0 += dp;
  it->q0 += dq;
  v_ = solve(x_, v_);
}

Complex DynamicSystem::tie_flow(const ComplexVector& v) const {
  Complex s{};
  for (auto b : tie_branches_) {
    const auto& br = system_.branches[b];
    const auto f = static_cast<Eigen::Index>(system_.bus_index(br.from_bus));
    const auto t = static_cast<Eigen::Index>(system_.bus_index(br.to_bus));
    if (br.in_service) s += network::branch_flow_from(br, v[f], v[t]);
  }
  return s;
}

Complex DynamicSystem::device_injection(std::size_t device) const {
  const auto& d = devices_[device];
  const Complex v = v_[static_cast<Eigen::Index>(d->bus())];
  return v * std::conj(d->terminal_current(device_state(device), v));
}

Complex DynamicSystem::load_power() const {
  Complex s{};
  for (const auto& ld : loads_) {
    const Complex v = v_[static_cast<Eigen::Index>(ld.bus)];
    s += v * std::conj(network::zi_load_current(ld, v, solve_options_.low_voltage));
  }
  return s;
}

double DynamicSystem::power_balance_residual() const {
  Complex gen{};
  for (std::size_t k = 0; k < devices_.size(); ++k) gen += device_injection(k);
  const Complex network_power = v_.cwiseProduct((y_ * v_).conjugate()).sum();
  return std::abs(gen - load_power() - network_power);
}

}  // namespace lfo::sim
