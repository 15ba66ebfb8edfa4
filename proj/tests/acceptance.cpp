// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <unistd.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "lfo/modal.hpp"
#include "lfo/numerics.hpp"
#include "lfo/scenarios.hpp"

using namespace lfo;
using namespace lfo::scenarios;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::printf("%s %d %s: %s\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

struct TableRow {
  const char* name;
  double sigma, omega, zeta_percent;
};

const std::vector<TableRow> kTable{
    {"PSS", -0.781214, 5.84032, 13.3},      {"GFM_VSM", -0.676476, 5.34967, 12.5},
    {"REGFM", -0.637492, 5.36776, 11.8},    {"GFM_Droop", -0.629683, 5.29911, 11.8},
    {"GFL_POD_Q", -0.631767, 5.39000, 11.6}, {"GFL_POD_P", -0.631503, 5.90218, 10.6},
    {"NO_PSS", -0.263220, 5.34158, 4.9},
};

std::vector<double> damped_sum(const std::vector<std::array<double, 4>>& comps, std::size_t n, double dt) {
  std::vector<double> y(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = dt * static_cast<double>(k);
    for (const auto& c : comps) y[k] += c[2] * std::exp(c[0] * t) * std::cos(c[1] * t + c[3]);
  }
  return y;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

void criterion_damping_formula() {
  double worst = 0.0;
  for (const auto& r : kTable) {
    worst = std::max(worst, std::abs(100.0 * modal::damping_ratio(r.sigma, r.omega) - r.zeta_percent));
  }
  report(1, worst <= 0.1, "damping ratio vs reference eigenvalues", fmt::format("max deviation {:.4f} pp", worst));
}

void criterion_prony() {
  const auto t0 = Clock::now();
  const double dt = 0.01;
  const std::vector<std::array<double, 4>> truth{{-0.3, 3.5, 1.0, 0.4}, {-0.8, 8.0, 0.5, -1.1}};
  const auto modes = modal::prony(damped_sum(truth, 1000, dt), dt, 4);
  double worst = modes.size() == 2 ? 0.0 : 1.0;
  for (const auto& c : truth) {
    const modal::Mode* m = nullptr;
    for (const auto& x : modes) {
      if (!m || std::abs(x.omega - c[1]) < std::abs(m->omega - c[1])) m = &x;
    }
    if (!m) continue;
    worst = std::max({worst, rel(m->sigma, c[0]), rel(m->omega, c[1]), rel(m->amplitude, c[2])});
  }

  const std::vector<std::array<double, 4>> one{{-0.3, 4.7, 1.0, 0.3}};
  const double ds = 0.05;
  const auto clean = damped_sum(one, 200, ds);
  double power = 0.0;
  for (double v : clean) power += v * v;
  const double noise_std = std::sqrt(power / static_cast<double>(clean.size()) / 1e4);
  int pass = 0;
  for (unsigned seed = 1; seed <= 50; ++seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_std);
    auto y = clean;
    for (double& v : y) v += noise(rng);
    try {
      const auto m = modal::dominant_mode(modal::prony(modal::detrend_linear(y), ds, 8));
      if (rel(m.sigma, -0.3) <= 0.05 && rel(m.omega, 4.7) <= 0.05) ++pass;
    } catch (const std::exception&) {
    }
  }
  const double elapsed = seconds_since(t0);
  report(2, worst < 1e-6 && pass >= 45 && elapsed < 5.0, "Prony oracle",
         fmt::format("noiseless max rel error {:.2e}, 40 dB trials {}/50 within 5%, {:.2f} s", worst, pass, elapsed));
}

double criterion_marginal() {
  const auto t0 = Clock::now();
  try {
    const auto m = find_marginal_tie_scale(ScenarioConfig{});
    ScenarioConfig cfg;
    cfg.tie_scale = m.tie_scale;
    const auto r = run_scenario(cfg);
    const double f = r.dominant ? r.dominant->frequency_hz() : 0.0;
    const double elapsed = seconds_since(t0);
    const bool ok = m.zeta >= 0.04 && m.zeta <= 0.06 && f >= 0.7 && f <= 1.1 && elapsed < 120.0;
    report(3, ok, "marginal baseline",
           fmt::format("tie_scale {:.4f}, zeta {:.2f}%, {:.3f} Hz, {} runs, {:.2f} s", m.tie_scale, 100.0 * m.zeta, f,
                       m.curve.size(), elapsed));
    return m.tie_scale;
  } catch (const std::exception& e) {
    report(3, false, "marginal baseline", e.what());
    return 1.0;
  }
}

ComparisonReport criterion_ordering(double scale) {
  const auto t0 = Clock::now();
  ScenarioConfig cfg;
  cfg.tie_scale = scale;
  auto rep = compare_all(all_strategies(), cfg);
  const double elapsed = seconds_since(t0);
  std::map<std::string, double> z;
  for (const auto& r : rep.ranking) z[r.strategy] = r.zeta_percent;
  const bool complete = rep.failures.empty() && rep.ranking.size() == 7;
  const bool ok = complete && rep.ranking.front().strategy == "PSS" && rep.ranking.back().strategy == "NO_PSS" &&
                  z["GFM_VSM"] > z["GFL_POD_P"] && z["GFM_VSM"] >= z["GFM_Droop"] && elapsed < 300.0;
  std::string order;
  for (const auto& r : rep.ranking) order += fmt::format("{} {:.2f}%, ", r.strategy, r.zeta_percent);
  for (const auto& f : rep.failures) order += "failed " + f + ", ";
  report(4, ok, "strategy ordering", fmt::format("{}{:.2f} s", order, elapsed));
  return rep;
}

void criterion_fault_shape(const ComparisonReport& rep) {
  bool ok = rep.runs.size() == 7;
  std::string detail;
  for (const auto& run : rep.runs) {
    if (!run.completed) {
      ok = false;
      continue;
    }
    const auto& cfg = run.config;
    const auto& tie = run.series.channel("tie_p");
    const double start = cfg.disturbance.end_time() + cfg.analysis.window_delay;
    const auto first = static_cast<std::size_t>(std::ceil(start / run.series.dt()));
    const auto count = static_cast<std::size_t>(std::llround(cfg.analysis.window_length / run.series.dt()));
    const std::vector<double> window(tie.begin() + static_cast<std::ptrdiff_t>(first),
                                     tie.begin() + static_cast<std::ptrdiff_t>(std::min(tie.size(), first + count)));
    const double slope = modal::log_envelope_slope(window, run.series.dt());
    const auto name = report_name(cfg.strategy);
    if (cfg.strategy == Strategy::NoPss) {
      const double zeta = run.dominant ? run.dominant->zeta : 1.0;
      ok = ok && zeta < 0.06;
      detail += fmt::format("{} zeta {:.2f}% slope {:.3f}, ", name, 100.0 * zeta, slope);
    } else {
      ok = ok && slope < 0.0;
      detail += fmt::format("{} slope {:.3f}, ", name, slope);
    }
  }
  report(5, ok, "fault response shape", detail.substr(0, detail.size() - 2));
}

void criterion_load_step(double scale) {
  std::map<Strategy, double> settle;
  std::string detail;
  bool ok = true;
  for (auto s : {Strategy::NoPss, Strategy::Pss, Strategy::GfmVsm}) {
    ScenarioConfig cfg;
    cfg.strategy = s;
    cfg.tie_scale = scale;
    cfg.t_end = 40.0;
    cfg.disturbance.kind = DisturbanceKind::LoadStep;
    cfg.disturbance.delta_mw = -150.0;
    const auto r = run_scenario(cfg);
    if (!r.completed) {
      ok = false;
      detail += fmt::format("{} {}, ", report_name(s), r.status());
      continue;
    }
    settle[s] = settling_time(r.series, "tie_p", cfg.disturbance.end_time());
    detail += fmt::format("{} {:.2f} s, ", report_name(s), settle[s]);
  }
  if (ok) {
    const double vsm = settle[Strategy::GfmVsm];
    ok = vsm <= 0.5 * settle[Strategy::NoPss] && std::abs(vsm - settle[Strategy::Pss]) <= 0.25 * settle[Strategy::Pss];
  }
  report(6, ok, "load-step settling", detail.substr(0, detail.size() - 2));
}

double heun_error(int steps) {
  std::vector<double> x{1.0};
  const double dt = 1.0 / steps;
  for (int k = 0; k < steps; ++k) {
    x = numerics::heun_step(x, [](std::span<const double> in, std::span<double> d) { d[0] = -2.0 * in[0]; }, dt);
  }
  return std::abs(x[0] - std::exp(-2.0));
}

void criterion_hygiene(const ComparisonReport& rep, double scale) {
  double worst_flat = 0.0;
  std::string worst_label;
  for (auto s : all_strategies()) {
    ScenarioConfig cfg;
    cfg.strategy = s;
    cfg.tie_scale = scale;
    auto model = build_model(cfg);
    for (int k = 0; k < 2400; ++k) {
      const auto [d, label] = model.dynamics->max_derivative();
      if (d > worst_flat) {
        worst_flat = d;
        worst_label = fmt::format("{}:{}", report_name(s), label);
      }
      model.dynamics->step(cfg.dt);
    }
  }
  double residual = 0.0;
  bool limits = true;
  for (const auto& run : rep.runs) {
    residual = std::max(residual, run.max_balance_residual);
    const auto& cfg = run.config;
    if (auto pod = cfg.effective_pod()) {
      for (double u : run.series.channel("pod_out")) limits = limits && u >= pod->out_min && u <= pod->out_max;
    }
    if (has_cig(cfg.strategy)) {
      const double imax = cfg.strategy == Strategy::Regfm                                  ? cfg.regfm.imax
                          : (cfg.strategy == Strategy::GflPodP || cfg.strategy == Strategy::GflPodQ) ? cfg.converter.imax
                                                                                           : cfg.gfm.imax;
      limits = limits && run.max_converter_current <= imax + 1e-9;
    }
  }
  const double ratio = heun_error(50) / heun_error(100);
  const bool ok = worst_flat < 1e-6 && residual < 1e-6 && ratio >= 3.5 && ratio <= 4.5 && limits;
  report(7, ok, "numerical hygiene",
         fmt::format("flat-start max |d/dt| {:.2e}{}, balance residual {:.2e} pu, Heun ratio {:.3f}, limits {}",
                     worst_flat, worst_label.empty() ? "" : " (" + worst_label + ")", residual, ratio,
                     limits ? "held" : "violated"));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void criterion_determinism(const ComparisonReport& first, double scale) {
  ScenarioConfig cfg;
  cfg.tie_scale = scale;
  const auto second = compare_all(all_strategies(), cfg);
  const auto root = std::filesystem::temp_directory_path() / fmt::format("lfo_acceptance_{}", ::getpid());
  write_report(first, root / "a");
  write_report(second, root / "b");
  std::size_t files = 0;
  bool same = true;
  for (const auto& entry : std::filesystem::directory_iterator(root / "a")) {
    ++files;
    same = same && slurp(entry.path()) == slurp(root / "b" / entry.path().filename());
  }
  std::filesystem::remove_all(root);
  report(8, same && files == 9, "determinism", fmt::format("{} output files compared, {}", files,
                                                             same ? "byte-identical" : "differences found"));
}

}  // namespace

int main() {
  criterion_damping_formula();
  criterion_prony();
  const double scale = criterion_marginal();
  const auto rep = criterion_ordering(scale);
  criterion_fault_shape(rep);
  criterion_load_step(scale);
  criterion_hygiene(rep, scale);
  criterion_determinism(rep, scale);
  return failures == 0 ? 0 : 1;
}
