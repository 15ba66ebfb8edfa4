#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lfo/device.hpp"
#include "lfo/numerics.hpp"

namespace lfo::machines {

/// Round-rotor machine data. Reactances/resistance in pu and H, D on `mva_base` unless
/// converted with `to_system_base`.
struct SyncMachineParams {
  double h{6.5};
  double d{0.0};
  double xd{1.8};
  double xq{1.7};
  double xd1{0.3};
  double xq1{0.55};
  double xd2{0.25};  // X''d = X''q
  double xl{0.2};
  double ra{0.0025};
  double td01{8.0};
  double tq01{0.4};
  double td02{0.03};
  double tq02{0.05};
  double s10{0.039};
  double s12{0.267};
  double mva_base{900.0};

  void validate() const;
  SyncMachineParams to_system_base(double base_mva) const;
};

/// Quadratic open-circuit saturation S(E) = B (E - A)^2 for E > A, zero below.
class SaturationCurve {
 public:
  SaturationCurve(double s10, double s12);
  double operator()(double e) const;
  double a() const { return a_; }
  double b() const { return b_; }

 private:
  double a_{1.0};
  double b_{0.0};
};

struct SyncMachineState {
  double delta{0.0};      // rad
  double speed_dev{0.0};  // pu
  double eq1{0.0};        // E'q
  double ed1{0.0};        // E'd
  double psi_kd{0.0};     // d-axis damper flux
  double psi_kq{0.0};     // q-axis damper flux (sign-mirrored to the d axis)

  static constexpr std::size_t kSize = 6;
  void store(std::span<double> out) const;
  static SyncMachineState load(std::span<const double> in);
};

/// Subtransient EMF E'' in the network frame.
Complex subtransient_emf(const SyncMachineState& state, const SyncMachineParams& params);

struct Norton {
  Complex current;
  Complex admittance;
};

/// Norton equivalent behind Ra + jX''.
Norton sync_machine_norton(const SyncMachineState& state, const SyncMachineParams& params);

/// Stator current injected into the network at terminal voltage `v_term`.
Complex stator_current(const SyncMachineState& state, const SyncMachineParams& params, Complex v_term);

/// Air-gap power Re(E'' conj(I)).
double electrical_power(const SyncMachineState& state, const SyncMachineParams& params, Complex v_term);

SyncMachineState sync_machine_derivatives(const SyncMachineState& state, const SyncMachineParams& params, double efd,
                                          double pm, Complex v_term);

struct MachineInit {
  SyncMachineState state;
  double efd{0.0};
  double pm{0.0};
};

/// Equilibrium for terminal voltage `v` and generated power `s_gen` (same base as params).
MachineInit initialize_sync_machine(const SyncMachineParams& params, Complex v, Complex s_gen);

// --- excitation -----------------------------------------------------------

/// Static exciter: sensed-voltage lag, PI regulator, field limits with anti-windup.
struct ExciterParams {
  double tr{0.01};
  double kp{200.0};
  double ki{0.0};
  double efd_min{-5.0};
  double efd_max{7.0};
};

struct ExciterState {
  double v_sensed{1.0};
  double integrator{0.0};
};

ExciterState exciter_init(const ExciterParams& params, double v_term_mag, double efd0);
double exciter_output(const ExciterParams& params, const ExciterState& state, double v_ref, double v_pss);
ExciterState exciter_derivatives(const ExciterParams& params, const ExciterState& state, double v_ref,
                                 double v_term_mag, double v_pss);
/// Returns Efd for the present state, then advances `state` by dt with inputs held.
double exciter_step(const ExciterParams& params, double v_ref, double v_term_mag, double v_pss, ExciterState& state,
                    double dt);

// --- governor -------------------------------------------------------------

/// TGOV1 on machine base.
struct GovernorParams {
  double r{0.05};
  double t1{0.5};
  double t2{1.0};
  double t3{2.0};
  double dt{0.0};
  double vmin{0.0};
  double vmax{1.0};
};

struct GovernorState {
  double valve{0.0};
  double lead_lag{0.0};
};

GovernorState governor_init(const GovernorParams& params, double pm0);
double governor_output(const GovernorParams& params, const GovernorState& state, double speed_dev);
GovernorState governor_derivatives(const GovernorParams& params, const GovernorState& state, double speed_dev,
                                   double p_ref);
double governor_step(const GovernorParams& params, double speed_dev, double p_ref, GovernorState& state, double dt);

// --- dual-input stabilizer -------------------------------------------------

/// Integral-of-accelerating-power stabilizer (speed and electrical power inputs).
struct PssParams {
  double ks1{20.0};
  double tw1{10.0};
  double tw2{10.0};
  double tw3{10.0};
  double tw4{10.0};
  double t7{10.0};
  double ks2{0.77};
  double ks3{1.0};
  double t8{0.5};
  double t9{0.1};
  int m{5};
  double t1{0.15};
  double t2{0.025};
  double t3{0.15};
  double t4{0.025};
  double vmin{-0.1};
  double vmax{0.1};

  void validate() const;
};

class DualInputPss {
 public:
  explicit DualInputPss(PssParams params);

  const PssParams& params() const { return params_; }
  std::size_t state_count() const;
  std::vector<std::string> state_names() const;

  std::vector<double> initialize(double p_elec) const;
  double output(std::span<const double> state, double p_elec, double speed_dev) const;
  void derivatives(std::span<const double> state, double p_elec, double speed_dev, std::span<double> dstate) const;

 private:
  struct Signals {
    double y1, y2, y3, y4, vsi2, rtf_in;
    std::vector<double> rtf_out;
    double ll_in, ll1_out, ll2_out;
  };
  Signals evaluate(std::span<const double> state, double p_elec, double speed_dev) const;

  PssParams params_;
};

/// Returns the limited stabilizing signal for the present state, then advances `state`.
double pss_dual_input_step(const DualInputPss& pss, double p_elec, double speed_dev, std::vector<double>& state,
                           double dt);

// --- generating unit ------------------------------------------------------

struct GeneratorUnitParams {
  std::string name{"SG"};
  SyncMachineParams machine;  // machine base
  ExciterParams exciter;
  GovernorParams governor;
  std::optional<PssParams> pss;
};

/// Machine + exciter + governor (+ optional stabilizer) attached to one bus.
class GeneratorUnit final : public Device {
 public:
  GeneratorUnit(GeneratorUnitParams params, std::size_t bus, double base_mva);

  std::string name() const override { return params_.name; }
  std::size_t bus() const override { return bus_; }
  std::vector<std::string> state_names() const override;

  void initialize(Complex v, Complex s_gen, const Snapshot& snapshot, std::span<double> x) override;
  network::NortonSource norton(std::span<const double> x) const override;
  void derivatives(std::span<const double> x, const Snapshot& snapshot, std::span<double> dx) const override;
  void enforce_limits(std::span<double> x) const override;

  double field_voltage(std::span<const double> x, Complex v_term) const;
  double stabilizer_signal(std::span<const double> x, Complex v_term) const;
  double mechanical_power(std::span<const double> x) const;  // system base
  const SyncMachineParams& system_params() const { return sys_; }
  double v_ref() const { return v_ref_; }
  double p_ref() const { return p_ref_; }

 private:
  static constexpr std::size_t kExc = SyncMachineState::kSize;
  static constexpr std::size_t kGov = kExc + 2;
  static constexpr std::size_t kPss = kGov + 2;

  GeneratorUnitParams params_;
  SyncMachineParams sys_;
  std::optional<DualInputPss> pss_;
  std::size_t bus_;
  double base_mva_;
  double mva_ratio_;  // machine base / system base
  double v_ref_{1.0};
  double p_ref_{0.0};  // machine base
};

}  // namespace lfo::machines
