#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lfo/device.hpp"
#include "lfo/numerics.hpp"
#include "lfo/pll.hpp"

namespace lfo::gfl {

enum class PodMode { Off, P, Q };
enum class PodInput { BranchP, BusFreq, BranchQ, BusV };

PodMode parse_pod_mode(std::string_view text);
PodInput parse_pod_input(std::string_view text);
std::string_view to_string(PodMode mode);
std::string_view to_string(PodInput input);

/// Deadband -> low-pass -> washout -> two lead-lags -> limiter.
struct PodParams {
  PodMode mode{PodMode::Off};
  PodInput input{PodInput::BranchP};
  double deadband{0.0};
  double tf{0.02};
  double kw{1.0};
  double tw{5.0};
  double t1{0.1};
  double t2{0.1};
  double t3{0.1};
  double t4{0.1};
  double out_min{-0.3};
  double out_max{0.3};

  void validate() const;
};

struct PodState {
  double s0{0.0};  // low-pass
  double s1{0.0};  // washout
  double s2{0.0};  // first lead-lag
  double s3{0.0};  // second lead-lag
};

/// Limited modulation command for deviation input `raw_input`.
double pod_output(const PodParams& params, const PodState& state, double raw_input);
PodState pod_derivatives(const PodParams& params, const PodState& state, double raw_input);
/// Returns the output for the present state, then advances `state` by dt.
double pod_step(double raw_input, const PodParams& params, PodState& state, double dt);

/// Frequency deviation (pu) from a bus voltage angle: washout-filtered derivative of the
/// unwrapped angle divided by synchronous speed.
struct BusFrequencyMeter {
  double tf{0.02};

  double output(double angle, double filter_state) const;
  double derivative(double angle, double filter_state) const;
};

/// Runs the meter over a uniformly sampled angle history and returns the final reading.
double bus_frequency(std::span<const double> angles, double dt, double tf = 0.02);

struct PpcParams {
  double tr{0.02};    // voltage measurement lag
  double kp_v{2.0};   // voltage PI proportional gain
  double ki_v{10.0};  // voltage PI integral gain
  double kqv{0.05};   // reactive droop on the voltage error
  double imax{1.1};
};

struct PpcRefs {
  double v_ref{1.0};
  double q_ref{0.0};
  double p_ref{0.0};
};

struct PpcState {
  double v_filtered{1.0};
  double q_integrator{0.0};
};

struct CurrentCommand {
  double ip{0.0};
  double iq{0.0};
};

/// Q-priority current limit onto the Imax circle.
CurrentCommand limit_current_q_priority(CurrentCommand cmd, double imax);

CurrentCommand ppc_commands(const PpcParams& params, const PpcRefs& refs, const PpcState& state, double q_meas,
                            double pod_out, PodMode mode);
PpcState ppc_derivatives(const PpcParams& params, const PpcRefs& refs, const PpcState& state, double v_meas,
                         double q_meas);
CurrentCommand ppc_step(double v_meas, double q_meas, double pod_out, PodMode mode, const PpcParams& params,
                        const PpcRefs& refs, PpcState& state, double dt);

struct ConverterParams {
  double tg{0.02};
  double lv_point{0.5};  // Ip ramps to zero below this voltage
  double imax{1.1};
};

struct ConverterState {
  double ip{0.0};
  double iq{0.0};
};

/// Current injected (device base) for tracker state at terminal voltage v, oriented on
/// `angle` (the synchronizing angle).
Complex converter_current(const ConverterParams& params, const ConverterState& state, Complex v, double angle);
ConverterState converter_derivatives(const ConverterParams& params, const ConverterState& state,
                                     const CurrentCommand& cmd);
Complex gfl_converter_step(const CurrentCommand& cmd, Complex v_term, const ConverterParams& params,
                           ConverterState& state, double dt);

struct GflPlantParams {
  std::string name{"CIG"};
  double mva_base{100.0};
  std::optional<PodParams> pod;  // nullopt builds the plant without POD code
  PpcParams ppc;
  ConverterParams converter;
  BusFrequencyMeter meter;
  PllParams pll;
};

/// Converter plant (command trackers, PPC, PLL, optional POD). POD inputs are taken from
/// the monitored bus and tie flow in the snapshot.
class GflPlant final : public Device {
 public:
  GflPlant(GflPlantParams params, std::size_t bus, double base_mva);

  std::string name() const override { return params_.name; }
  std::size_t bus() const override { return bus_; }
  std::vector<std::string> state_names() const override;

  void initialize(Complex v, Complex s_gen, const Snapshot& snapshot, std::span<double> x) override;
  network::NortonSource norton(std::span<const double> x) const override;
  bool has_extra_current() const override { return true; }
  Complex extra_current(std::span<const double> x, Complex v) const override;
  void derivatives(std::span<const double> x, const Snapshot& snapshot, std::span<double> dx) const override;

  double pod_signal(std::span<const double> x, const Snapshot& snapshot) const;
  CurrentCommand commands(std::span<const double> x, const Snapshot& snapshot) const;

 private:
  static constexpr std::size_t kIp = 0, kIq = 1, kVf = 2, kQi = 3, kPll = 4, kPllInt = 5, kMeter = 6, kPod = 7;
  double pod_raw_input(std::span<const double> x, const Snapshot& snapshot) const;
  double reactive_output(std::span<const double> x, Complex v) const;  // device base

  GflPlantParams params_;
  std::size_t bus_;
  double base_mva_;
  double scale_;  // device base / system base
  PpcRefs refs_;
  double pod_reference_{0.0};
};

}  // namespace lfo::gfl
