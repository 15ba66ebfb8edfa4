#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lfo/gfl.hpp"
#include "lfo/gfm.hpp"
#include "lfo/machines.hpp"
#include "lfo/modal.hpp"
#include "lfo/network.hpp"
#include "lfo/simulation.hpp"

namespace lfo::scenarios {

enum class Strategy { NoPss, Pss, GflPodP, GflPodQ, GfmVsm, GfmDroop, Regfm };

/// Config spelling: no_pss, pss, gfl_pod_p, gfl_pod_q, gfm_vsm, gfm_droop, regfm.
Strategy parse_strategy(std::string_view text);
std::string_view config_name(Strategy strategy);
/// Report label: NO_PSS, PSS, GFL_POD_P, GFL_POD_Q, GFM_VSM, GFM_Droop, REGFM.
std::string_view report_name(Strategy strategy);
const std::vector<Strategy>& all_strategies();
bool has_cig(Strategy strategy);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class MarginalNotFound : public std::runtime_error {
 public:
  MarginalNotFound(const std::string& what, std::vector<std::pair<double, double>> curve)
      : std::runtime_error(what), curve_(std::move(curve)) {}
  const std::vector<std::pair<double, double>>& curve() const { return curve_; }

 private:
  std::vector<std::pair<double, double>> curve_;
};

enum class DisturbanceKind { None, Fault, LoadStep };

struct Disturbance {
  DisturbanceKind kind{DisturbanceKind::Fault};
  int bus{2};
  double t_on{1.0};
  double duration{0.015};        // fault
  double fault_conductance{1e5};  // pu
  double delta_mw{-150.0};        // load step
  double delta_mvar{0.0};

  /// Time the disturbance is over (fault cleared or load stepped).
  double end_time() const;
};

struct AnalysisOptions {
  std::string channel{"tie_p"};
  double window_delay{0.5};  // after the disturbance ends
  double window_length{10.0};
  int order{8};
  double sample_interval{0.05};  // decimated Prony sampling
  double f_lo{0.2};
  double f_hi{2.0};
};

/// Two-area network data on the system base unless stated otherwise.
struct TwoAreaData {
  double base_mva{100.0};
  double sg1_mw{925.0};
  double sg1_mw_no_cig{1000.0};
  double sg2_v{1.01};
  double sg1_v{1.03};
  double load2_mw{1000.0};
  double load2_mvar{100.0};
  double load3_mw{1300.0};
  double load3_mvar{100.0};
  double cig_mw{75.0};
  double cig_mvar{0.0};
  double line12_x{0.0175};
  double line_r_over_x{0.1};
  double tie_x{0.03};  // each of the two parallel lines at tie_scale = 1
  double tie_b{0.0};
  double transformer_x{0.15};  // device base
  double low_voltage{0.2};
};

struct ScenarioConfig {
  Strategy strategy{Strategy::NoPss};
  double tie_scale{1.0};
  double dt{1.0 / 240.0};
  double t_end{15.0};
  Disturbance disturbance;
  AnalysisOptions analysis;
  TwoAreaData network;
  machines::GeneratorUnitParams sg1;
  machines::GeneratorUnitParams sg2;
  machines::PssParams pss;
  double cig_mva{100.0};
  gfl::PodParams pod_p;  // tuning used in POD-P mode
  gfl::PodParams pod_q;  // tuning used in POD-Q mode
  std::optional<gfl::PodMode> pod_mode;  // explicit pod.mode
  std::optional<gfl::PodInput> pod_input;
  gfl::PpcParams ppc;
  gfl::ConverterParams converter;
  gfl::BusFrequencyMeter meter;
  PllParams gfl_pll;
  gfm::GfmParams gfm;
  std::optional<gfm::GfmVariant> gfm_variant;  // explicit gfm.variant
  gfm::RegfmParams regfm;

  ScenarioConfig();
  /// Checks ranges and the strategy/pod.mode/gfm.variant consistency.
  void validate() const;
  /// POD settings after applying the strategy: the tuning of the active mode, input
  /// branch_p (P) or branch_q (Q) unless set.
  std::optional<gfl::PodParams> effective_pod() const;
  gfm::GfmParams effective_gfm() const;
};

/// Reads INI text; keys are `section.key`. Unknown sections or keys are errors.
ScenarioConfig parse_config(std::istream& in, ScenarioConfig base = {});
ScenarioConfig load_config(const std::filesystem::path& path);
/// Every key with its current value, in INI form.
std::string dump_config(const ScenarioConfig& config);

/// Bus ids of the two-area system.
inline constexpr int kBusSg1High = 1;
inline constexpr int kBusArea1 = 2;
inline constexpr int kBusArea2 = 3;
inline constexpr int kBusSg1 = 11;
inline constexpr int kBusCig = 12;
inline constexpr int kBusSg2 = 13;

/// Network with solved power flow; ZI reference voltages set to the solved magnitudes.
network::PowerSystem build_two_area(const ScenarioConfig& config);

struct Model {
  std::unique_ptr<sim::DynamicSystem> dynamics;
  std::optional<std::size_t> cig_device;
  std::size_t sg1_device{0};
  std::size_t sg2_device{1};
};

/// Power flow plus initialized devices.
Model build_model(const ScenarioConfig& config);

struct RunResult {
  ScenarioConfig config;
  modal::TimeSeries series;
  std::optional<modal::Mode> dominant;
  std::vector<modal::Mode> modes;
  std::string modal_error;
  bool completed{false};
  std::string reason;  // set when not completed
  double flat_start_derivative{0.0};
  std::string flat_start_state;
  double max_balance_residual{0.0};
  double max_converter_current{0.0};  // device base
  double max_abs_pod_output{0.0};
  double wall_seconds{0.0};  // not part of any written output

  std::string status() const;
};

/// Builds, checks the flat start, applies the disturbance and integrates to t_end.
/// Recorded channels: tie_p, tie_q (MW, MVAr), bus2_v, sg1_speed, sg2_speed and, with a
/// converter plant, cig_p, cig_q, cig_i (device pu), pod_out.
RunResult run_scenario(const ScenarioConfig& config);

/// Modal analysis of a recorded series per `config.analysis`.
std::vector<modal::Mode> analyse(const modal::TimeSeries& series, const ScenarioConfig& config);

struct MarginalResult {
  double tie_scale{1.0};
  double zeta{0.0};
  std::vector<std::pair<double, double>> curve;  // (scale, zeta) in evaluation order
};

/// Bisection on tie_scale in [lo, hi] for the no-PSS dominant damping ratio.
MarginalResult find_marginal_tie_scale(ScenarioConfig base, double target_zeta = 0.05, double lo = 1.0,
                                       double hi = 10.0, double tolerance = 0.0025, int max_iterations = 12);

/// Time after `t_event` at which `channel` last leaves the band of +-band_fraction of the
/// step size around its final value (mean of the last `final_window` seconds).
double settling_time(const modal::TimeSeries& series, const std::string& channel, double t_event,
                     double band_fraction = 0.02, double final_window = 2.0);

struct ComparisonReport {
  std::vector<RunResult> runs;
  std::vector<modal::RankedRow> ranking;
  std::vector<std::string> failures;

  std::string table() const;
  std::string modes_csv() const;
};

ComparisonReport compare_all(const std::vector<Strategy>& strategies, const ScenarioConfig& base);

std::string series_csv(const modal::TimeSeries& series);
void write_run(const RunResult& result, const std::filesystem::path& dir);
void write_report(const ComparisonReport& report, const std::filesystem::path& dir);

}  // namespace lfo::scenarios
