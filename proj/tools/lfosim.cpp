#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "lfo/modal.hpp"
#include "lfo/scenarios.hpp"

namespace fs = std::filesystem;
using namespace lfo;

namespace {

scenarios::ScenarioConfig config_or_default(const std::string& path) {
  return path.empty() ? scenarios::ScenarioConfig{} : scenarios::load_config(path);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

int cmd_simulate(const std::string& config_path, const fs::path& out_dir) {
  const auto cfg = scenarios::load_config(config_path);
  const auto r = scenarios::run_scenario(cfg);
  scenarios::write_run(r, out_dir);
  fmt::print("strategy {}  tie_scale {:.6g}  status {}\n", scenarios::config_name(cfg.strategy), cfg.tie_scale,
             r.status());
  fmt::print("flat start max |dx/dt| {:.3g} ({})\n", r.flat_start_derivative, r.flat_start_state);
  if (r.dominant) {
    fmt::print("dominant mode sigma {:.6f} 1/s  omega {:.5f} rad/s  f {:.4f} Hz  zeta {:.2f} %\n", r.dominant->sigma,
               r.dominant->omega, r.dominant->frequency_hz(), 100.0 * r.dominant->zeta);
  } else if (!r.modal_error.empty()) {
    fmt::print("modal analysis: {}\n", r.modal_error);
  }
  return r.completed ? 0 : 2;
}

int cmd_compare(const std::string& config_path, const std::string& list, double tie_scale, const fs::path& out_dir) {
  auto cfg = config_or_default(config_path);
  if (tie_scale > 0.0) cfg.tie_scale = tie_scale;
  std::vector<scenarios::Strategy> strategies;
  if (list.empty() || list == "all") {
    strategies = scenarios::all_strategies();
  } else {
    for (const auto& s : split_csv_line(list)) strategies.push_back(scenarios::parse_strategy(s));
  }
  const auto report = scenarios::compare_all(strategies, cfg);
  scenarios::write_report(report, out_dir);
  fmt::print("{}", report.table());
  return report.failures.empty() ? 0 : 2;
}

int cmd_marginal(const std::string& config_path, double target) {
  const auto cfg = config_or_default(config_path);
  try {
    const auto m = scenarios::find_marginal_tie_scale(cfg, target);
    for (const auto& [s, z] : m.curve) fmt::print("tie_scale {:.6f}  zeta {:.4f}\n", s, z);
    fmt::print("marginal tie_scale {:.6f} (zeta {:.4f})\n", m.tie_scale, m.zeta);
    return 0;
  } catch (const scenarios::MarginalNotFound& e) {
    for (const auto& [s, z] : e.curve()) fmt::print("tie_scale {:.6f}  zeta {:.4f}\n", s, z);
    fmt::print(stderr, "{}\n", e.what());
    return 2;
  }
}

int cmd_prony(const fs::path& csv, const std::string& channel, int order, double t_start, double t_stop) {
  std::ifstream in(csv);
  if (!in) throw std::runtime_error(fmt::format("cannot open {}", csv.string()));
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  const auto it = std::find(header.begin(), header.end(), channel);
  if (it == header.end()) throw std::runtime_error(fmt::format("no column \"{}\" in {}", channel, csv.string()));
  const auto col = static_cast<std::size_t>(it - header.begin());
  std::vector<double> t, x;
  while (std::getline(in, line)) {
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) continue;
    const double tk = std::stod(cells[0]);
    if (tk < t_start || (t_stop > t_start && tk > t_stop)) continue;
    t.push_back(tk);
    x.push_back(std::stod(cells[col]));
  }
  if (t.size() < 2) throw std::runtime_error("fewer than two samples in the selected window");
  const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  const auto modes = modal::prony(modal::detrend_linear(x), dt, order);
  fmt::print("{:>12} {:>12} {:>10} {:>12} {:>10}\n", "sigma", "omega", "f[Hz]", "amplitude", "zeta[%]");
  for (const auto& m : modes) {
    fmt::print("{:>12.6f} {:>12.5f} {:>10.4f} {:>12.6g} {:>10.2f}\n", m.sigma, m.omega, m.frequency_hz(), m.amplitude,
               100.0 * m.zeta);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phasor-domain two-area oscillation damping simulator"};
  app.require_subcommand(1);

  std::string config_path;
  fs::path out_dir = "out";
  auto* simulate = app.add_subcommand("simulate", "run one scenario from a config file");
  simulate->add_option("--config", config_path, "INI scenario file")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", out_dir, "output directory");

  std::string strategies = "all";
  double tie_scale = 0.0;
  auto* compare = app.add_subcommand("compare", "run several strategies and rank their inter-area modes");
  compare->add_option("--strategies", strategies, "comma-separated list or \"all\"");
  compare->add_option("--config", config_path, "INI file with shared settings")->check(CLI::ExistingFile);
  compare->add_option("--tie-scale", tie_scale, "override scenario.tie_scale");
  compare->add_option("--out", out_dir, "output directory");

  double target = 0.05;
  auto* marginal = app.add_subcommand("marginal", "bisect the tie scale for a target no-PSS damping ratio");
  marginal->add_option("--target-zeta", target, "target damping ratio");
  marginal->add_option("--config", config_path, "INI file with shared settings")->check(CLI::ExistingFile);

  fs::path csv;
  std::string channel = "tie_p";
  int order = 8;
  double t_start = 0.0, t_stop = 0.0;
  auto* prony = app.add_subcommand("prony", "Prony fit of one CSV column");
  prony->add_option("--csv", csv, "time-series CSV")->required()->check(CLI::ExistingFile);
  prony->add_option("--channel", channel, "column name");
  prony->add_option("--order", order, "model order (even)");
  prony->add_option("--from", t_start, "window start, s");
  prony->add_option("--to", t_stop, "window end, s");

  auto* defaults = app.add_subcommand("defaults", "print every config key with its default");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*simulate) return cmd_simulate(config_path, out_dir);
    if (*compare) return cmd_compare(config_path, strategies, tie_scale, out_dir);
    if (*marginal) return cmd_marginal(config_path, target);
    if (*prony) return cmd_prony(csv, channel, order, t_start, t_stop);
    if (*defaults) {
      fmt::print("{}", scenarios::dump_config(scenarios::ScenarioConfig{}));
      return 0;
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
