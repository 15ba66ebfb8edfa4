#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lfo/device.hpp"
#include "lfo/numerics.hpp"
#include "lfo/pll.hpp"

namespace lfo::gfm {

enum class GfmVariant { Vsm, Droop, Regfm };

GfmVariant parse_gfm_variant(std::string_view text);
std::string_view to_string(GfmVariant variant);

/// Grid-forming controller data, device base. Only the fields of the selected variant
/// are used; `mp` is the droop-variant frequency slope.
struct GfmParams {
  GfmVariant variant{GfmVariant::Vsm};
  double hv{0.5};     // virtual inertia, s
  double dv{100.0};   // virtual damping, pu power per pu speed
  double tf_vsm{0.05};
  double mp{0.01};
  double kvd{0.0};
  double kvq{0.05};
  double kfd{0.0};
  double kfq{0.0};
  double tvdrp{0.05};
  double tfdrp{0.05};
  double kin{50.0};
  double kiv{50.0};
  double kp_ve{0.5};  // virtual excitation PI
  double ki_ve{5.0};
  double mq_ve{0.05};  // reactive droop on the excitation error
  double tm{0.02};     // P/Q measurement lag
  double e_min{0.5};
  double e_max{1.5};
  double r_int{0.0};
  double x_int{0.15};
  double imax{1.1};
  PllParams pll;

  void validate() const;
};

struct VsmState {
  double speed{1.0};
  double wpr{1.0};  // lagged frequency reference
};

/// Frequency reference output (the lag state).
double vsm_output(const VsmState& state);
VsmState vsm_derivatives(const GfmParams& params, const VsmState& state, double p_ref, double p_meas);
/// Returns the frequency reference for the present state, then advances `state` by dt.
double vsm_swing_step(const GfmParams& params, double p_ref, double p_meas, VsmState& state, double dt);

struct ExcitationState {
  double integrator{1.0};
};

double virtual_excitation_output(const GfmParams& params, double v_ref, double v_meas, double q_ref, double q_meas,
                                 const ExcitationState& state);
double virtual_excitation_deriv(const GfmParams& params, double v_ref, double v_meas, double q_ref, double q_meas,
                                const ExcitationState& state);
double virtual_excitation_step(const GfmParams& params, double v_ref, double v_meas, double q_ref, double q_meas,
                               ExcitationState& state, double dt);

struct DroopState {
  double s14{0.0};  // voltage droop
  double s15{0.0};  // frequency droop
};

struct DroopOutput {
  double fd{0.0};
  double vd{0.0};
};

DroopState droop_feedback_deriv(const GfmParams& params, double id, double iq, const DroopState& state);
DroopOutput droop_feedback_step(double id, double iq, const GfmParams& params, DroopState& state, double dt);

struct CurrentControllerState {
  double s11{1.0};  // frequency command, pu
  double s13{1.0};  // internal voltage command, pu
};

CurrentControllerState current_controller_deriv(const GfmParams& params, double wpr, double vpr, double fd, double vd,
                                                const CurrentControllerState& state);
/// Returns (frequency command, voltage command) for the present state, then advances.
CurrentControllerState current_controller_step(double wpr, double vpr, double fd, double vd, const GfmParams& params,
                                               CurrentControllerState& state, double dt);

/// Current of a source E behind r + jx into terminal voltage v, scaled back onto the
/// |I| = imax circle with its phase kept when the demand exceeds imax.
Complex voltage_source_interface(Complex e, Complex v_term, double r_int, double x_int, double imax);
inline Complex voltage_source_interface(double e_mag, double angle, Complex v_term, const GfmParams& p) {
  return voltage_source_interface(std::polar(e_mag, angle), v_term, p.r_int, p.x_int, p.imax);
}

/// Terminal current in the frame of `angle`: id active, iq reactive export.
struct DqCurrent {
  double id;
  double iq;
};
DqCurrent to_dq(Complex current, double angle);

// --- droop benchmark ------------------------------------------------------

struct RegfmParams {
  double mp{0.02};
  double mq{0.02};
  double tpf{0.02};
  double tqf{0.02};
  double te{0.02};
  double pmax{1.0};
  double pmin{0.0};
  double qmax{0.6};
  double qmin{-0.6};
  double kp_plim{0.0};
  double ki_plim{0.2};
  double kp_qlim{0.0};
  double ki_qlim{1.0};
  double e_min{0.5};
  double e_max{1.5};
  double r_int{0.0};
  double x_int{0.15};
  double imax{1.1};

  void validate() const;
};

struct RegfmRefs {
  double p_ref{0.0};
  double q_ref{0.0};
  double e0{1.0};
};

struct RegfmState {
  double angle{0.0};
  double p_filtered{0.0};
  double q_filtered{0.0};
  double pmax_integrator{0.0};  // <= 0
  double pmin_integrator{0.0};  // >= 0
  double qmax_integrator{0.0};  // <= 0
  double qmin_integrator{0.0};  // >= 0
  double e{1.0};
};

/// Frequency deviation command (pu) from the P-f droop and power-limit controls.
double regfm_frequency(const RegfmParams& params, const RegfmRefs& refs, const RegfmState& state);
RegfmState regfm_derivatives(const RegfmParams& params, const RegfmRefs& refs, const RegfmState& state, double p_meas,
                             double q_meas);
/// Returns the current injected at v_term for the present state, then advances `state`
/// with the measured P and Q held.
Complex regfm_step(Complex v_term, const RegfmParams& params, const RegfmRefs& refs, RegfmState& state, double dt);

// --- plants ---------------------------------------------------------------

struct GfmPlantParams {
  std::string name{"CIG"};
  double mva_base{100.0};
  GfmParams gfm;
};

/// VSM/droop grid-forming plant: swing or droop frequency reference, virtual excitation,
/// droop feedback lags, current-controller integrators, PLL frame, source behind impedance.
class GfmPlant final : public Device {
 public:
  GfmPlant(GfmPlantParams params, std::size_t bus, double base_mva);

  std::string name() const override { return params_.name; }
  std::size_t bus() const override { return bus_; }
  std::vector<std::string> state_names() const override;

  void initialize(Complex v, Complex s_gen, const Snapshot& snapshot, std::span<double> x) override;
  network::NortonSource norton(std::span<const double> x) const override;
  bool has_extra_current() const override { return true; }
  Complex extra_current(std::span<const double> x, Complex v) const override;
  void derivatives(std::span<const double> x, const Snapshot& snapshot, std::span<double> dx) const override;
  void enforce_limits(std::span<double> x) const override;

  /// Injected current on the device base.
  Complex device_current(std::span<const double> x, Complex v) const;
  const GfmParams& params() const { return params_.gfm; }

 private:
  static constexpr std::size_t kAngle = 0, kSpeed = 1, kWpr = 2, kExc = 3, kS11 = 4, kS13 = 5, kS14 = 6, kS15 = 7,
                               kPll = 8, kPllInt = 9, kPf = 10, kQf = 11, kSize = 12;
  Complex internal_emf(std::span<const double> x) const;

  GfmPlantParams params_;
  std::size_t bus_;
  double scale_;
  double p_ref_{0.0};
  double q_ref_{0.0};
  double v_ref_{1.0};
  DqCurrent i0_{0.0, 0.0};
};

struct RegfmPlantParams {
  std::string name{"CIG"};
  double mva_base{100.0};
  RegfmParams regfm;
};

class RegfmPlant final : public Device {
 public:
  RegfmPlant(RegfmPlantParams params, std::size_t bus, double base_mva);

  std::string name() const override { return params_.name; }
  std::size_t bus() const override { return bus_; }
  std::vector<std::string> state_names() const override;

  void initialize(Complex v, Complex s_gen, const Snapshot& snapshot, std::span<double> x) override;
  network::NortonSource norton(std::span<const double> x) const override;
  bool has_extra_current() const override { return true; }
  Complex extra_current(std::span<const double> x, Complex v) const override;
  void derivatives(std::span<const double> x, const Snapshot& snapshot, std::span<double> dx) const override;
  void enforce_limits(std::span<double> x) const override;

  Complex device_current(std::span<const double> x, Complex v) const;
  const RegfmParams& params() const { return params_.regfm; }

 private:
  static RegfmState load(std::span<const double> x);

  RegfmPlantParams params_;
  std::size_t bus_;
  double scale_;
  RegfmRefs refs_;
};

}  // namespace lfo::gfm
