#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "lfo/scenarios.hpp"

namespace lfo::scenarios {

namespace {

struct Binding {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

using Registry = std::vector<std::pair<std::string, Binding>>;

double to_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  while (used < text.size() && std::isspace(static_cast<unsigned char>(text[used]))) ++used;
  if (used != text.size() || text.empty() || !std::isfinite(value)) {
    throw ConfigError(fmt::format("{}: \"{}\" is not a finite number", key, text));
  }
  return value;
}

int to_int(const std::string& key, const std::string& text) {
  const double v = to_double(key, text);
  if (v != std::floor(v)) throw ConfigError(fmt::format("{}: \"{}\" is not an integer", key, text));
  return static_cast<int>(v);
}

std::string_view to_string(DisturbanceKind kind) {
  switch (kind) {
    case DisturbanceKind::None: return "none";
    case DisturbanceKind::Fault: return "fault";
    case DisturbanceKind::LoadStep: return "load_step";
  }
  return "none";
}

DisturbanceKind parse_disturbance(const std::string& text) {
  if (text == "none") return DisturbanceKind::None;
  if (text == "fault") return DisturbanceKind::Fault;
  if (text == "load_step") return DisturbanceKind::LoadStep;
  throw ConfigError(fmt::format("disturbance.kind must be none, fault or load_step (got \"{}\")", text));
}

class Binder {
 public:
  explicit Binder(Registry& reg) : reg_(reg) {}

  void number(const std::string& key, double& ref) {
    reg_.push_back({key, {[&ref, key](const std::string& s) { ref = to_double(key, s); },
                          [&ref] { return fmt::format("{}", ref); }}});
  }
  void integer(const std::string& key, int& ref) {
    reg_.push_back({key, {[&ref, key](const std::string& s) { ref = to_int(key, s); },
                          [&ref] { return fmt::format("{}", ref); }}});
  }
  void custom(const std::string& key, std::function<void(const std::string&)> set, std::function<std::string()> get) {
    reg_.push_back({key, {std::move(set), std::move(get)}});
  }

 private:
  Registry& reg_;
};

void bind_machine(Binder& b, const std::string& s, machines::SyncMachineParams& m) {
  b.number(s + ".mva_base", m.mva_base);
  b.number(s + ".h", m.h);
  b.number(s + ".d", m.d);
  b.number(s + ".xd", m.xd);
  b.number(s + ".xq", m.xq);
  b.number(s + ".xd1", m.xd1);
  b.number(s + ".xq1", m.xq1);
  b.number(s + ".xd2", m.xd2);
  b.number(s + ".xl", m.xl);
  b.number(s + ".ra", m.ra);
  b.number(s + ".td01", m.td01);
  b.number(s + ".tq01", m.tq01);
  b.number(s + ".td02", m.td02);
  b.number(s + ".tq02", m.tq02);
  b.number(s + ".s10", m.s10);
  b.number(s + ".s12", m.s12);
}

Registry registry(ScenarioConfig& c) {
  Registry reg;
  Binder b(reg);
  b.custom(
      "scenario.strategy", [&c](const std::string& s) { c.strategy = parse_strategy(s); },
      [&c] { return std::string(config_name(c.strategy)); });
  b.number("scenario.tie_scale", c.tie_scale);
  b.number("scenario.dt", c.dt);
  b.number("scenario.t_end", c.t_end);

  auto& d = c.disturbance;
  b.custom(
      "disturbance.kind", [&d](const std::string& s) { d.kind = parse_disturbance(s); },
      [&d] { return std::string(to_string(d.kind)); });
  b.integer("disturbance.bus", d.bus);
  b.number("disturbance.t_on", d.t_on);
  b.number("disturbance.duration", d.duration);
  b.number("disturbance.fault_conductance", d.fault_conductance);
  b.number("disturbance.delta_mw", d.delta_mw);
  b.number("disturbance.delta_mvar", d.delta_mvar);

  auto& a = c.analysis;
  b.custom(
      "analysis.channel", [&a](const std::string& s) { a.channel = s; }, [&a] { return a.channel; });
  b.number("analysis.window_delay", a.window_delay);
  b.number("analysis.window_length", a.window_length);
  b.integer("analysis.order", a.order);
  b.number("analysis.sample_interval", a.sample_interval);
  b.number("analysis.f_lo", a.f_lo);
  b.number("analysis.f_hi", a.f_hi);

  auto& n = c.network;
  b.number("network.base_mva", n.base_mva);
  b.number("network.sg1_mw", n.sg1_mw);
  b.number("network.sg1_mw_no_cig", n.sg1_mw_no_cig);
  b.number("network.sg1_v", n.sg1_v);
  b.number("network.sg2_v", n.sg2_v);
  b.number("network.load2_mw", n.load2_mw);
  b.number("network.load2_mvar", n.load2_mvar);
  b.number("network.load3_mw", n.load3_mw);
  b.number("network.load3_mvar", n.load3_mvar);
  b.number("network.cig_mw", n.cig_mw);
  b.number("network.cig_mvar", n.cig_mvar);
  b.number("network.line12_x", n.line12_x);
  b.number("network.line_r_over_x", n.line_r_over_x);
  b.number("network.tie_x", n.tie_x);
  b.number("network.tie_b", n.tie_b);
  b.number("network.transformer_x", n.transformer_x);
  b.number("network.low_voltage", n.low_voltage);

  bind_machine(b, "sg1", c.sg1.machine);
  bind_machine(b, "sg2", c.sg2.machine);

  // Both units share one exciter and governor setting; sg2 copies sg1's after parsing.
  auto& e = c.sg1.exciter;
  b.number("exciter.tr", e.tr);
  b.number("exciter.kp", e.kp);
  b.number("exciter.ki", e.ki);
  b.number("exciter.efd_min", e.efd_min);
  b.number("exciter.efd_max", e.efd_max);
  auto& g = c.sg1.governor;
  b.number("governor.r", g.r);
  b.number("governor.t1", g.t1);
  b.number("governor.t2", g.t2);
  b.number("governor.t3", g.t3);
  b.number("governor.dt", g.dt);
  b.number("governor.vmin", g.vmin);
  b.number("governor.vmax", g.vmax);

  auto& p = c.pss;
  b.number("pss.ks1", p.ks1);
  b.number("pss.tw1", p.tw1);
  b.number("pss.tw2", p.tw2);
  b.number("pss.tw3", p.tw3);
  b.number("pss.tw4", p.tw4);
  b.number("pss.t7", p.t7);
  b.number("pss.ks2", p.ks2);
  b.number("pss.ks3", p.ks3);
  b.number("pss.t8", p.t8);
  b.number("pss.t9", p.t9);
  b.integer("pss.m", p.m);
  b.number("pss.t1", p.t1);
  b.number("pss.t2", p.t2);
  b.number("pss.t3", p.t3);
  b.number("pss.t4", p.t4);
  b.number("pss.vmin", p.vmin);
  b.number("pss.vmax", p.vmax);

  b.number("cig.mva_base", c.cig_mva);

  b.custom(
      "pod.mode", [&c](const std::string& s) { c.pod_mode = gfl::parse_pod_mode(s); },
      [&c] { return c.pod_mode ? std::string(gfl::to_string(*c.pod_mode)) : std::string("auto"); });
  b.custom(
      "pod.input", [&c](const std::string& s) { c.pod_input = gfl::parse_pod_input(s); },
      [&c] { return c.pod_input ? std::string(gfl::to_string(*c.pod_input)) : std::string("auto"); });
  for (auto* section : {"pod_p", "pod_q"}) {
    auto& pod = std::string_view(section) == "pod_p" ? c.pod_p : c.pod_q;
    const std::string pre = std::string(section) + ".";
    b.number(pre + "deadband", pod.deadband);
    b.number(pre + "tf", pod.tf);
    b.number(pre + "kw", pod.kw);
    b.number(pre + "tw", pod.tw);
    b.number(pre + "t1", pod.t1);
    b.number(pre + "t2", pod.t2);
    b.number(pre + "t3", pod.t3);
    b.number(pre + "t4", pod.t4);
    b.number(pre + "out_min", pod.out_min);
    b.number(pre + "out_max", pod.out_max);
  }

  b.number("ppc.tr", c.ppc.tr);
  b.number("ppc.kp_v", c.ppc.kp_v);
  b.number("ppc.ki_v", c.ppc.ki_v);
  b.number("ppc.kqv", c.ppc.kqv);
  b.number("ppc.imax", c.ppc.imax);
  b.number("converter.tg", c.converter.tg);
  b.number("converter.lv_point", c.converter.lv_point);
  b.number("converter.imax", c.converter.imax);
  b.number("converter.pll_kp", c.gfl_pll.kp);
  b.number("converter.pll_ki", c.gfl_pll.ki);
  b.number("converter.pll_v_freeze", c.gfl_pll.v_freeze);
  b.number("meter.tf", c.meter.tf);

  auto& m = c.gfm;
  b.custom(
      "gfm.variant", [&c](const std::string& s) { c.gfm_variant = gfm::parse_gfm_variant(s); },
      [&c] { return c.gfm_variant ? std::string(gfm::to_string(*c.gfm_variant)) : std::string("auto"); });
  b.number("gfm.hv", m.hv);
  b.number("gfm.dv", m.dv);
  b.number("gfm.tf_vsm", m.tf_vsm);
  b.number("gfm.mp", m.mp);
  b.number("gfm.kvd", m.kvd);
  b.number("gfm.kvq", m.kvq);
  b.number("gfm.kfd", m.kfd);
  b.number("gfm.kfq", m.kfq);
  b.number("gfm.tvdrp", m.tvdrp);
  b.number("gfm.tfdrp", m.tfdrp);
  b.number("gfm.kin", m.kin);
  b.number("gfm.kiv", m.kiv);
  b.number("gfm.kp_ve", m.kp_ve);
  b.number("gfm.ki_ve", m.ki_ve);
  b.number("gfm.mq_ve", m.mq_ve);
  b.number("gfm.tm", m.tm);
  b.number("gfm.e_min", m.e_min);
  b.number("gfm.e_max", m.e_max);
  b.number("gfm.r_int", m.r_int);
  b.number("gfm.x_int", m.x_int);
  b.number("gfm.imax", m.imax);
  b.number("gfm.pll_kp", m.pll.kp);
  b.number("gfm.pll_ki", m.pll.ki);
  b.number("gfm.pll_v_freeze", m.pll.v_freeze);

  auto& r = c.regfm;
  b.number("regfm.mp", r.mp);
  b.number("regfm.mq", r.mq);
  b.number("regfm.tpf", r.tpf);
  b.number("regfm.tqf", r.tqf);
  b.number("regfm.te", r.te);
  b.number("regfm.pmax", r.pmax);
  b.number("regfm.pmin", r.pmin);
  b.number("regfm.qmax", r.qmax);
  b.number("regfm.qmin", r.qmin);
  b.number("regfm.kp_plim", r.kp_plim);
  b.number("regfm.ki_plim", r.ki_plim);
  b.number("regfm.kp_qlim", r.kp_qlim);
  b.number("regfm.ki_qlim", r.ki_qlim);
  b.number("regfm.e_min", r.e_min);
  b.number("regfm.e_max", r.e_max);
  b.number("regfm.r_int", r.r_int);
  b.number("regfm.x_int", r.x_int);
  b.number("regfm.imax", r.imax);
  return reg;
}

}  // namespace

ScenarioConfig parse_config(std::istream& in, ScenarioConfig base) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config syntax error: {}", e.what()));
  }
  ScenarioConfig cfg = std::move(base);
  auto reg = registry(cfg);
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(fmt::format("key \"{}\" is outside a section", section));
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      auto it = std::find_if(reg.begin(), reg.end(), [&](const auto& e) { return e.first == full; });
      if (it == reg.end()) throw ConfigError(fmt::format("unknown config key \"{}\"", full));
      const std::string text = value.get_value<std::string>();
      if (text == "auto" && (full == "pod.mode" || full == "pod.input" || full == "gfm.variant")) {
        if (full == "pod.mode") cfg.pod_mode.reset();
        if (full == "pod.input") cfg.pod_input.reset();
        if (full == "gfm.variant") cfg.gfm_variant.reset();
        continue;
      }
      try {
        it->second.set(text);
      } catch (const ConfigError&) {
        throw;
      } catch (const std::invalid_argument& e) {
        throw ConfigError(fmt::format("{}: {}", full, e.what()));
      }
    }
  }
  cfg.sg2.exciter = cfg.sg1.exciter;
  cfg.sg2.governor = cfg.sg1.governor;
  cfg.validate();
  return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file {}", path.string()));
  return parse_config(in);
}

std::string dump_config(const ScenarioConfig& config) {
  ScenarioConfig copy = config;
  const auto reg = registry(copy);
  std::string out;
  std::string section;
  for (const auto& [key, binding] : reg) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      out += fmt::format("{}[{}]\n", section.empty() ? "" : "\n", sec);
      section = sec;
    }
    out += fmt::format("{} = {}\n", key.substr(dot + 1), binding.get());
  }
  return out;
}

}  // namespace lfo::scenarios
