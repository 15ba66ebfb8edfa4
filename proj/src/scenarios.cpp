#include "lfo/scenarios.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

namespace lfo::scenarios {

namespace {

struct StrategyInfo {
  Strategy strategy;
  std::string_view config;
  std::string_view report;
};

constexpr StrategyInfo kStrategies[] = {
    {Strategy::NoPss, "no_pss", "NO_PSS"},          {Strategy::Pss, "pss", "PSS"},
    {Strategy::GflPodP, "gfl_pod_p", "GFL_POD_P"},  {Strategy::GflPodQ, "gfl_pod_q", "GFL_POD_Q"},
    {Strategy::GfmVsm, "gfm_vsm", "GFM_VSM"},       {Strategy::GfmDroop, "gfm_droop", "GFM_Droop"},
    {Strategy::Regfm, "regfm", "REGFM"},
};

const StrategyInfo& info(Strategy s) {
  for (const auto& i : kStrategies) {
    if (i.strategy == s) return i;
  }
  throw std::logic_error("unknown strategy");
}

}  // namespace

Strategy parse_strategy(std::string_view text) {
  for (const auto& i : kStrategies) {
    if (i.config == text || i.report == text) return i.strategy;
  }
  throw ConfigError(fmt::format(
      "unknown strategy \"{}\" (expected no_pss, pss, gfl_pod_p, gfl_pod_q, gfm_vsm, gfm_droop or regfm)", text));
}

std::string_view config_name(Strategy strategy) { return info(strategy).config; }
std::string_view report_name(Strategy strategy) { return info(strategy).report; }

const std::vector<Strategy>& all_strategies() {
  static const std::vector<Strategy> all{Strategy::NoPss,  Strategy::Pss,      Strategy::GflPodP, Strategy::GflPodQ,
                                         Strategy::GfmVsm, Strategy::GfmDroop, Strategy::Regfm};
  return all;
}

bool has_cig(Strategy strategy) { return strategy != Strategy::NoPss && strategy != Strategy::Pss; }

double Disturbance::end_time() const {
  switch (kind) {
    case DisturbanceKind::None: return 0.0;
    case DisturbanceKind::Fault: return t_on + duration;
    case DisturbanceKind::LoadStep: return t_on;
  }
  return 0.0;
}

// --- configuration --------------------------------------------------------

ScenarioConfig::ScenarioConfig() {
  sg1.name = "SG1";
  sg1.machine.mva_base = 1100.0;
  sg1.exciter.kp = 400.0;
  sg2 = sg1;
  sg2.name = "SG2";
  sg2.machine.mva_base = 5000.0;

  pod_p.kw = 0.15;
  pod_p.t1 = 0.1;
  pod_p.t2 = 0.3;
  pod_q.kw = -20.0;
  pod_q.t1 = 0.3;
  pod_q.t2 = 0.1;

  gfm.hv = 10.0;
  gfm.dv = 150.0;
  gfm.mp = 0.005;
}

namespace {
bool is_gfl(Strategy s) { return s == Strategy::GflPodP || s == Strategy::GflPodQ; }
bool is_gfm(Strategy s) { return s == Strategy::GfmVsm || s == Strategy::GfmDroop || s == Strategy::Regfm; }
}  // namespace

std::optional<gfl::PodParams> ScenarioConfig::effective_pod() const {
  if (!is_gfl(strategy)) return std::nullopt;
  const gfl::PodMode forced = strategy == Strategy::GflPodP ? gfl::PodMode::P : gfl::PodMode::Q;
  gfl::PodParams p = forced == gfl::PodMode::P ? pod_p : pod_q;
  p.mode = pod_mode.value_or(forced);
  if (pod_input) {
    p.input = *pod_input;
  } else {
    p.input = forced == gfl::PodMode::P ? gfl::PodInput::BranchP : gfl::PodInput::BranchQ;
  }
  return p;
}

gfm::GfmParams ScenarioConfig::effective_gfm() const {
  gfm::GfmParams p = gfm;
  if (strategy == Strategy::GfmVsm) p.variant = gfm::GfmVariant::Vsm;
  if (strategy == Strategy::GfmDroop) p.variant = gfm::GfmVariant::Droop;
  if (strategy == Strategy::Regfm) p.variant = gfm::GfmVariant::Regfm;
  return p;
}

void ScenarioConfig::validate() const {
  if (!(tie_scale > 0.0)) throw ConfigError("scenario.tie_scale must be > 0");
  if (!(dt > 0.0)) throw ConfigError("scenario.dt must be > 0");
  if (!(t_end > 0.0)) throw ConfigError("scenario.t_end must be > 0");
  if (disturbance.kind == DisturbanceKind::Fault) {
    if (!(disturbance.duration > 0.0)) throw ConfigError("disturbance.duration must be > 0");
    if (!(disturbance.fault_conductance > 0.0)) throw ConfigError("disturbance.fault_conductance must be > 0");
  }
  if (disturbance.kind != DisturbanceKind::None) {
    if (disturbance.t_on < 0.0) throw ConfigError("disturbance.t_on must be >= 0");
    if (!(disturbance.end_time() < t_end)) throw ConfigError("disturbance must end before scenario.t_end");
  }
  if (!(network.tie_x > 0.0 && network.line12_x > 0.0 && network.transformer_x > 0.0)) {
    throw ConfigError("network reactances must be > 0");
  }
  if (!(cig_mva > 0.0)) throw ConfigError("cig.mva_base must be > 0");
  if (analysis.order < 2 || analysis.order % 2 != 0) throw ConfigError("analysis.order must be even and >= 2");
  if (!(analysis.window_length > 0.0 && analysis.sample_interval > 0.0)) {
    throw ConfigError("analysis window and sample interval must be > 0");
  }
  if (!(analysis.f_lo < analysis.f_hi)) throw ConfigError("analysis.f_lo must be below analysis.f_hi");

  if (pod_mode && *pod_mode != gfl::PodMode::Off) {
    const bool ok = (strategy == Strategy::GflPodP && *pod_mode == gfl::PodMode::P) ||
                    (strategy == Strategy::GflPodQ && *pod_mode == gfl::PodMode::Q);
    if (!ok) {
      throw ConfigError(fmt::format("pod.mode = \"{}\" conflicts with strategy {}", gfl::to_string(*pod_mode),
                                    config_name(strategy)));
    }
  }
  if (gfm_variant) {
    const auto forced = effective_gfm().variant;
    if (!is_gfm(strategy) || *gfm_variant != forced) {
      throw ConfigError(fmt::format("gfm.variant = \"{}\" conflicts with strategy {}", gfm::to_string(*gfm_variant),
                                    config_name(strategy)));
    }
  }
  try {
    sg1.machine.validate();
    sg2.machine.validate();
    pss.validate();
    if (auto p = effective_pod()) p->validate();
    if (strategy == Strategy::Regfm) {
      regfm.validate();
    } else if (is_gfm(strategy)) {
      effective_gfm().validate();
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

// --- system construction ----------------------------------------------------

network::PowerSystem build_two_area(const ScenarioConfig& config) {
  config.validate();
  const auto& n = config.network;
  const bool cig = has_cig(config.strategy);
  network::PowerSystem sys;
  sys.base_mva = n.base_mva;
  using network::BusKind;
  sys.buses.push_back({kBusSg1High, BusKind::PQ});
  sys.buses.push_back({kBusArea1, BusKind::PQ});
  sys.buses.push_back({kBusArea2, BusKind::PQ});
  sys.buses.push_back({kBusSg1, BusKind::PV, n.sg1_v, 0.0, 20.0, (cig ? n.sg1_mw : n.sg1_mw_no_cig) / n.base_mva});
  if (cig) sys.buses.push_back({kBusCig, BusKind::PQ, 1.0, 0.0, 0.69, n.cig_mw / n.base_mva, n.cig_mvar / n.base_mva});
  sys.buses.push_back({kBusSg2, BusKind::Slack, n.sg2_v, 0.0, 20.0});

  const double rx = n.line_r_over_x;
  auto transformer = [&](const std::string& name, int from, int to, double mva) {
    sys.branches.push_back({name, from, to, 0.0, n.transformer_x * n.base_mva / mva});
  };
  transformer("T_SG1", kBusSg1, kBusSg1High, config.sg1.machine.mva_base);
  sys.branches.push_back({"L_1_2", kBusSg1High, kBusArea1, rx * n.line12_x, n.line12_x});
  for (const char* name : {"TIE_A", "TIE_B"}) {
    sys.branches.push_back({name, kBusArea1, kBusArea2, rx * n.tie_x, n.tie_x, n.tie_b, true, config.tie_scale});
  }
  transformer("T_SG2", kBusSg2, kBusArea2, config.sg2.machine.mva_base);
  if (cig) transformer("T_CIG", kBusCig, kBusArea1, config.cig_mva);

  sys.loads.push_back({kBusArea1, n.load2_mw, n.load2_mvar, 1.0});
  sys.loads.push_back({kBusArea2, n.load3_mw, n.load3_mvar, 1.0});

  network::solve_power_flow(sys);
  for (auto& ld : sys.loads) ld.v0 = sys.buses[sys.bus_index(ld.bus)].v_mag;
  return sys;
}

Model build_model(const ScenarioConfig& config) {
  auto sys = build_two_area(config);
  const double base = sys.base_mva;
  std::vector<std::unique_ptr<Device>> devices;
  std::vector<Complex> generation;
  auto gen_at = [&](int id) {
    const auto& b = sys.buses[sys.bus_index(id)];
    return Complex(b.p_gen, b.q_gen);
  };

  Model model;
  auto sg1 = config.sg1;
  if (config.strategy == Strategy::Pss) sg1.pss = config.pss;
  devices.push_back(std::make_unique<machines::GeneratorUnit>(sg1, sys.bus_index(kBusSg1), base));
  generation.push_back(gen_at(kBusSg1));
  model.sg1_device = 0;
  devices.push_back(std::make_unique<machines::GeneratorUnit>(config.sg2, sys.bus_index(kBusSg2), base));
  generation.push_back(gen_at(kBusSg2));
  model.sg2_device = 1;

  if (has_cig(config.strategy)) {
    const std::size_t bus = sys.bus_index(kBusCig);
    if (is_gfl(config.strategy)) {
      gfl::GflPlantParams p;
      p.mva_base = config.cig_mva;
      p.pod = config.effective_pod();
      p.ppc = config.ppc;
      p.converter = config.converter;
      p.meter = config.meter;
      p.pll = config.gfl_pll;
      devices.push_back(std::make_unique<gfl::GflPlant>(p, bus, base));
    } else if (config.strategy == Strategy::Regfm) {
      devices.push_back(std::make_unique<gfm::RegfmPlant>(gfm::RegfmPlantParams{"CIG", config.cig_mva, config.regfm},
                                                          bus, base));
    } else {
      devices.push_back(
          std::make_unique<gfm::GfmPlant>(gfm::GfmPlantParams{"CIG", config.cig_mva, config.effective_gfm()}, bus, base));
    }
    generation.push_back(gen_at(kBusCig));
    model.cig_device = 2;
  }

  std::vector<std::size_t> ties;
  for (std::size_t k = 0; k < sys.branches.size(); ++k) {
    if (sys.branches[k].name.rfind("TIE_", 0) == 0) ties.push_back(k);
  }
  const std::size_t monitored = sys.bus_index(kBusArea1);
  network::NetworkSolveOptions opts;
  opts.low_voltage = config.network.low_voltage;
  model.dynamics = std::make_unique<sim::DynamicSystem>(std::move(sys), std::move(devices), ties, monitored, opts);
  model.dynamics->initialize(generation);
  return model;
}

// --- running --------------------------------------------------------------

std::string RunResult::status() const { return completed ? "completed" : fmt::format("diverged({})", reason); }

namespace {

class Recorder {
 public:
  void push(const std::string& name, double value) {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) {
      names_.push_back(name);
      data_.emplace_back();
      data_.back().push_back(value);
    } else {
      data_[static_cast<std::size_t>(it - names_.begin())].push_back(value);
    }
  }
  modal::TimeSeries finish(double dt) {
    modal::TimeSeries ts(0.0, dt);
    for (std::size_t k = 0; k < names_.size(); ++k) ts.add_channel(names_[k], std::move(data_[k]));
    return ts;
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<double>> data_;
};

}  // namespace

RunResult run_scenario(const ScenarioConfig& config) {
  const auto wall_start = std::chrono::steady_clock::now();
  RunResult result;
  result.config = config;
  config.validate();
  Model model = build_model(config);
  auto& dyn = *model.dynamics;
  const double base = dyn.system().base_mva;
  const std::size_t bus2 = dyn.system().bus_index(kBusArea1);

  const auto [d0, label] = dyn.max_derivative();
  result.flat_start_derivative = d0;
  result.flat_start_state = label;
  Recorder rec;
  bool ok = d0 < 1e-6;
  if (!ok) {
    result.reason = fmt::format("initialization: |d/dt| = {:.3g} at {} exceeds 1e-6", d0, label);
  }

  const auto& dist = config.disturbance;
  const long long n_steps = std::llround(config.t_end / config.dt);
  const long long k_on = std::llround(dist.t_on / config.dt);
  const long long k_off = k_on + std::max(1LL, std::llround(dist.duration / config.dt));
  const std::size_t dist_bus = dyn.system().bus_index(dist.bus);
  const gfl::GflPlant* gfl_plant = nullptr;
  if (model.cig_device) gfl_plant = dynamic_cast<const gfl::GflPlant*>(dyn.devices()[*model.cig_device].get());
  const double cig_scale = config.cig_mva / base;

  auto record = [&] {
    const Complex tie = dyn.tie_flow();
    rec.push("tie_p", tie.real() * base);
    rec.push("tie_q", tie.imag() * base);
    rec.push("bus2_v", std::abs(dyn.voltages()[static_cast<Eigen::Index>(bus2)]));
    rec.push("sg1_speed", dyn.device_state(model.sg1_device)[1]);
    rec.push("sg2_speed", dyn.device_state(model.sg2_device)[1]);
    if (model.cig_device) {
      const auto k = *model.cig_device;
      const Complex s = dyn.device_injection(k);
      const auto& dev = *dyn.devices()[k];
      const Complex v = dyn.voltages()[static_cast<Eigen::Index>(dev.bus())];
      const double i_dev = std::abs(dev.terminal_current(dyn.device_state(k), v)) / cig_scale;
      result.max_converter_current = std::max(result.max_converter_current, i_dev);
      rec.push("cig_p", s.real() * base);
      rec.push("cig_q", s.imag() * base);
      rec.push("cig_i", i_dev);
      double pod = 0.0;
      if (gfl_plant) pod = gfl_plant->pod_signal(dyn.device_state(k), {&dyn.voltages(), tie, bus2});
      result.max_abs_pod_output = std::max(result.max_abs_pod_output, std::abs(pod));
      rec.push("pod_out", pod);
    }
    result.max_balance_residual = std::max(result.max_balance_residual, dyn.power_balance_residual());
  };

  if (ok) {
    try {
      for (long long k = 0; k <= n_steps; ++k) {
        if (dist.kind == DisturbanceKind::Fault) {
          if (k == k_on) dyn.apply_fault(dist_bus, Complex(dist.fault_conductance, 0.0));
          if (k == k_off) dyn.clear_fault();
        } else if (dist.kind == DisturbanceKind::LoadStep && k == k_on) {
          dyn.change_load(dist_bus, dist.delta_mw / base, dist.delta_mvar / base);
        }
        record();
        if (k < n_steps) dyn.step(config.dt);
      }
      result.completed = true;
    } catch (const std::exception& e) {
      result.reason = fmt::format("t = {:.4f} s: {}", dyn.time(), e.what());
    }
  }
  result.series = rec.finish(config.dt);

  if (result.completed && result.series.size() > 0) {
    try {
      result.modes = analyse(result.series, config);
      result.dominant = modal::dominant_mode(result.modes, config.analysis.f_lo, config.analysis.f_hi);
    } catch (const std::exception& e) {
      result.modal_error = e.what();
    }
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return result;
}

std::vector<modal::Mode> analyse(const modal::TimeSeries& series, const ScenarioConfig& config) {
  const auto& a = config.analysis;
  const auto& x = series.channel(a.channel);
  const double start_t = config.disturbance.end_time() + a.window_delay;
  const auto first = static_cast<std::size_t>(std::max(0.0, std::ceil((start_t - series.t0()) / series.dt() - 1e-9)));
  const auto count = static_cast<std::size_t>(std::llround(a.window_length / series.dt()));
  if (first >= x.size()) throw modal::NoModeInBand("analysis window starts after the end of the run");
  const std::size_t last = std::min(x.size(), first + count + 1);
  const std::span<const double> window(x.data() + first, last - first);
  const auto factor = static_cast<std::size_t>(std::max(1LL, std::llround(a.sample_interval / series.dt())));
  const auto detrended = modal::detrend_linear(window);
  double peak = 0.0;
  for (double v : detrended) peak = std::max(peak, std::abs(v));
  if (peak < 1e-7) throw modal::NoModeInBand("analysis channel shows no excitation");
  const auto samples = modal::decimate(detrended, factor);
  return modal::prony(samples, series.dt() * static_cast<double>(factor), a.order);
}

MarginalResult find_marginal_tie_scale(ScenarioConfig base, double target_zeta, double lo, double hi,
                                       double tolerance, int max_iterations) {
  base.strategy = Strategy::NoPss;
  base.pod_mode.reset();
  base.gfm_variant.reset();
  MarginalResult out;
  auto zeta_at = [&](double scale) {
    ScenarioConfig cfg = base;
    cfg.tie_scale = scale;
    const auto r = run_scenario(cfg);
    if (!r.dominant) {
      out.curve.emplace_back(scale, std::nan(""));
      throw MarginalNotFound(fmt::format("no dominant mode at tie_scale {:.4f}: {}", scale,
                                         r.completed ? r.modal_error : r.reason),
                             out.curve);
    }
    out.curve.emplace_back(scale, r.dominant->zeta);
    return r.dominant->zeta;
  };
  double z_lo = zeta_at(lo);
  if (std::abs(z_lo - target_zeta) <= tolerance) return {lo, z_lo, out.curve};
  double z_hi = zeta_at(hi);
  if (std::abs(z_hi - target_zeta) <= tolerance) return {hi, z_hi, out.curve};
  if ((z_lo - target_zeta) * (z_hi - target_zeta) > 0.0) {
    throw MarginalNotFound(fmt::format("damping ratio does not straddle {:.4f} on [{}, {}] ({:.4f}, {:.4f})",
                                       target_zeta, lo, hi, z_lo, z_hi),
                           out.curve);
  }
  double best_scale = lo, best_zeta = z_lo;
  for (int it = 0; it < max_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double z_mid = zeta_at(mid);
    if (std::abs(z_mid - target_zeta) < std::abs(best_zeta - target_zeta)) {
      best_scale = mid;
      best_zeta = z_mid;
    }
    if (std::abs(z_mid - target_zeta) <= tolerance) break;
    if ((z_lo - target_zeta) * (z_mid - target_zeta) <= 0.0) {
      hi = mid;
    } else {
      lo = mid;
      z_lo = z_mid;
    }
  }
  out.tie_scale = best_scale;
  out.zeta = best_zeta;
  return out;
}

double settling_time(const modal::TimeSeries& series, const std::string& channel, double t_event, double band_fraction,
                     double final_window) {
  const auto& x = series.channel(channel);
  const auto k_event = static_cast<std::size_t>(std::ceil((t_event - series.t0()) / series.dt() - 1e-9));
  if (k_event == 0 || k_event >= x.size()) throw std::invalid_argument("settling_time: event outside the series");
  const auto tail = static_cast<std::size_t>(std::llround(final_window / series.dt()));
  if (tail == 0 || tail >= x.size() - k_event) throw std::invalid_argument("settling_time: final window too long");
  double final_value = 0.0;
  for (std::size_t k = x.size() - tail; k < x.size(); ++k) final_value += x[k];
  final_value /= static_cast<double>(tail);
  const double band = band_fraction * std::abs(final_value - x[k_event - 1]);
  if (!(band > 0.0)) throw std::invalid_argument("settling_time: no net change across the event");
  std::size_t last_out = k_event;
  bool left_band = false;
  for (std::size_t k = k_event; k < x.size(); ++k) {
    if (std::abs(x[k] - final_value) > band) {
      last_out = k;
      left_band = true;
    }
  }
  return left_band ? series.time(last_out + 1) - t_event : 0.0;
}

// --- comparison and output ------------------------------------------------

ComparisonReport compare_all(const std::vector<Strategy>& strategies, const ScenarioConfig& base) {
  if (strategies.empty()) throw std::invalid_argument("compare_all: no strategies");
  ComparisonReport report;
  std::map<std::string, modal::Mode> modes;
  for (auto s : strategies) {
    ScenarioConfig cfg = base;
    cfg.strategy = s;
    cfg.pod_mode.reset();
    cfg.gfm_variant.reset();
    const std::string name(report_name(s));
    try {
      auto r = run_scenario(cfg);
      if (!r.completed) {
        report.failures.push_back(fmt::format("{}: {}", name, r.status()));
      } else if (!r.dominant) {
        report.failures.push_back(fmt::format("{}: modal analysis failed: {}", name, r.modal_error));
      } else {
        modes[name] = *r.dominant;
      }
      report.runs.push_back(std::move(r));
    } catch (const std::exception& e) {
      report.failures.push_back(fmt::format("{}: {}", name, e.what()));
    }
  }
  if (!modes.empty()) report.ranking = modal::rank_strategies(modes);
  return report;
}

std::string ComparisonReport::table() const {
  std::string out = "Ranked inter-area mode per strategy\n";
  if (!runs.empty()) {
    const auto& c = runs.front().config;
    out += fmt::format("tie_scale = {:.9g}\ndisturbance bus = {}\nanalysis channel = {}\n\n", c.tie_scale,
                       c.disturbance.bus, c.analysis.channel);
  }
  out += fmt::format("{:<5} {:<10} {:>12} {:>14} {:>9}\n", "rank", "strategy", "sigma[1/s]", "omega[rad/s]", "zeta[%]");
  for (std::size_t k = 0; k < ranking.size(); ++k) {
    const auto& r = ranking[k];
    out += fmt::format("{:<5} {:<10} {:>12.6f} {:>14.5f} {:>9.2f}\n", k + 1, r.strategy, r.sigma, r.omega,
                       r.zeta_percent);
  }
  if (!failures.empty()) {
    out += "\nfailed runs\n";
    for (const auto& f : failures) out += "  " + f + "\n";
  }
  return out;
}

std::string ComparisonReport::modes_csv() const {
  std::string out = "strategy,sigma,omega,zeta\n";
  for (const auto& r : ranking) {
    out += fmt::format("{},{:.9g},{:.9g},{:.9g}\n", r.strategy, r.sigma, r.omega, r.zeta_percent / 100.0);
  }
  return out;
}

std::string series_csv(const modal::TimeSeries& series) {
  std::string out = "t";
  for (const auto& n : series.names()) out += "," + n;
  out += "\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    out += fmt::format("{:.9g}", series.time(k));
    for (const auto& n : series.names()) out += fmt::format(",{:.9g}", series.channel(n)[k]);
    out += "\n";
  }
  return out;
}

namespace {
void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  out << text;
}
}  // namespace

void write_run(const RunResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / fmt::format("{}.csv", config_name(result.config.strategy)), series_csv(result.series));
}

void write_report(const ComparisonReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.txt", report.table());
  write_text(dir / "modes.csv", report.modes_csv());
  for (const auto& r : report.runs) write_run(r, dir);
}

}  // namespace lfo::scenarios
