#include "doctest.h"

#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "lfo/modal.hpp"
#include "lfo/numerics.hpp"

using namespace lfo;
using namespace lfo::modal;

namespace {

struct Component {
  double sigma, omega, amplitude, phase;
};

std::vector<double> synth(const std::vector<Component>& comps, std::size_t n, double dt) {
  std::vector<double> y(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = dt * static_cast<double>(k);
    for (const auto& c : comps) y[k] += c.amplitude * std::exp(c.sigma * t) * std::cos(c.omega * t + c.phase);
  }
  return y;
}

const Mode* find_mode(const std::vector<Mode>& modes, double omega) {
  const Mode* best = nullptr;
  for (const auto& m : modes) {
    if (!best || std::abs(m.omega - omega) < std::abs(best->omega - omega)) best = &m;
  }
  return best;
}

// Reference inter-area eigenvalues with their damping ratios (percent, one decimal).
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

}  // namespace

TEST_CASE("Prony recovers a single damped sinusoid") {
  const double dt = 0.01;
  const auto y = synth({{-0.5, 5.0, 1.0, 0.0}}, 1000, dt);
  const auto modes = prony(y, dt, 2);
  REQUIRE(modes.size() == 1);
  CHECK(modes[0].sigma == doctest::Approx(-0.5).epsilon(1e-6));
  CHECK(modes[0].omega == doctest::Approx(5.0).epsilon(1e-6));
  CHECK(modes[0].amplitude == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(modes[0].zeta == doctest::Approx(damping_ratio(-0.5, 5.0)));
}

TEST_CASE("Prony recovers two damped sinusoids") {
  const double dt = 0.01;
  const auto y = synth({{-0.3, 3.5, 1.0, 0.4}, {-0.8, 8.0, 0.5, -1.1}}, 1000, dt);
  const auto modes = prony(y, dt, 4);
  REQUIRE(modes.size() == 2);
  for (const Component& c : {Component{-0.3, 3.5, 1.0, 0.4}, Component{-0.8, 8.0, 0.5, -1.1}}) {
    const Mode* m = find_mode(modes, c.omega);
    REQUIRE(m != nullptr);
    CHECK(m->sigma == doctest::Approx(c.sigma).epsilon(1e-6));
    CHECK(m->omega == doctest::Approx(c.omega).epsilon(1e-6));
    CHECK(m->amplitude == doctest::Approx(c.amplitude).epsilon(1e-6));
    CHECK(std::abs(numerics::wrap_angle(m->phase - c.phase)) < 1e-6);
  }
  CHECK(modes[0].energy() >= modes[1].energy());
}

TEST_CASE("Prony of a constant is a zero-frequency undamped mode") {
  const std::vector<double> y(300, 2.5);
  const auto modes = prony(y, 0.05, 2);
  REQUIRE(!modes.empty());
  CHECK(std::abs(modes[0].omega) < 1e-9);
  CHECK(std::abs(modes[0].sigma) < 1e-9);
  CHECK(modes[0].amplitude == doctest::Approx(2.5).epsilon(1e-9));
}

TEST_CASE("reported modes reconstruct the noiseless signal") {
  const double dt = 0.05;
  const std::size_t n = 200;
  const auto y = synth({{-0.25, 4.6, 30.0, 1.0}, {-1.2, 7.5, 8.0, -0.3}, {-0.4, 11.0, 3.0, 2.0}}, n, dt);
  const auto modes = prony(y, dt, 6);
  const auto r = reconstruct(modes, n, dt);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    num += (r[k] - y[k]) * (r[k] - y[k]);
    den += y[k] * y[k];
  }
  CHECK(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("Prony tolerates 40 dB white noise on the dominant mode") {
  const double dt = 0.05;
  const std::size_t n = 200;
  const Component truth{-0.3, 4.7, 1.0, 0.3};
  const auto clean = synth({truth}, n, dt);
  double power = 0.0;
  for (double v : clean) power += v * v;
  const double noise_std = std::sqrt(power / static_cast<double>(n) / 1e4);
  int pass = 0;
  for (unsigned seed = 1; seed <= 50; ++seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_std);
    auto y = clean;
    for (double& v : y) v += noise(rng);
    try {
      const Mode m = dominant_mode(prony(detrend_linear(y), dt, 8));
      if (std::abs(m.sigma - truth.sigma) <= 0.05 * std::abs(truth.sigma) &&
          std::abs(m.omega - truth.omega) <= 0.05 * truth.omega) {
        ++pass;
      }
    } catch (const std::exception&) {
    }
  }
  CHECK(pass >= 45);
}

TEST_CASE("Prony input checks") {
  const std::vector<double> y(30, 1.0);
  CHECK_THROWS(prony(y, 0.05, 3));
  CHECK_THROWS(prony(y, 0.05, 12));
  CHECK_THROWS(prony(y, 0.0, 2));
}

TEST_CASE("damping ratio") {
  CHECK(damping_ratio(-0.781214, 5.84032) == doctest::Approx(0.1326).epsilon(1e-3));
  CHECK(damping_ratio(-0.263220, 5.34158) == doctest::Approx(0.0492).epsilon(1e-3));
  CHECK(damping_ratio(-1.0, 0.0) == 1.0);
  for (const auto& row : kTable) {
    CHECK(std::abs(100.0 * damping_ratio(row.sigma, row.omega) - row.zeta_percent) <= 0.1);
  }
  CHECK_THROWS_AS(damping_ratio(0.0, 0.0), UndefinedRatio);
}

TEST_CASE("dominant mode selection") {
  for (const auto& row : kTable) {
    const Mode m{row.sigma, row.omega, 1.0, 0.0, damping_ratio(row.sigma, row.omega)};
    const std::vector<Mode> one{m};
    CHECK(dominant_mode(one).omega == row.omega);
  }
  const std::vector<Mode> fast{{-0.5, 2.0 * kPi * 5.0, 1.0, 0.0, 0.0}};
  CHECK_THROWS_AS(dominant_mode(fast), NoModeInBand);

  // Same decay rate, amplitudes chosen for a 2:1 energy ratio.
  const Mode big{-0.4, 4.0, std::sqrt(2.0), 0.0, damping_ratio(-0.4, 4.0)};
  const Mode small{-0.4, 7.0, 1.0, 0.0, damping_ratio(-0.4, 7.0)};
  CHECK(big.energy() == doctest::Approx(2.0 * small.energy()));
  const std::vector<Mode> pair{small, big};
  CHECK(dominant_mode(pair).omega == 4.0);
  const std::vector<Mode> with_out_of_band{{-0.1, 60.0, 100.0, 0.0, 0.0}, small};
  CHECK(dominant_mode(with_out_of_band).omega == 7.0);
}

TEST_CASE("strategy ranking") {
  std::map<std::string, Mode> results;
  for (const auto& row : kTable) {
    results[row.name] = Mode{row.sigma, row.omega, 1.0, 0.0, damping_ratio(row.sigma, row.omega)};
  }
  const auto ranked = rank_strategies(results);
  const std::vector<std::string> expected{"PSS", "GFM_VSM", "REGFM", "GFM_Droop", "GFL_POD_Q", "GFL_POD_P", "NO_PSS"};
  REQUIRE(ranked.size() == expected.size());
  for (std::size_t k = 0; k < expected.size(); ++k) CHECK(ranked[k].strategy == expected[k]);
  auto tenths = [](double z) { return std::round(10.0 * z); };
  for (std::size_t k = 1; k < ranked.size(); ++k) {
    CHECK(tenths(ranked[k - 1].zeta_percent) >= tenths(ranked[k].zeta_percent));
  }

  const std::map<std::string, Mode> single{{"PSS", results["PSS"]}};
  CHECK(rank_strategies(single).size() == 1);

  const Mode same{-0.5, 5.0, 1.0, 0.0, damping_ratio(-0.5, 5.0)};
  const auto tie = rank_strategies({{"b", same}, {"a", same}});
  CHECK(tie[0].strategy == "a");
  CHECK(tie[1].strategy == "b");
}

TEST_CASE("signal preparation helpers") {
  std::vector<double> line;
  for (int k = 0; k < 50; ++k) line.push_back(3.0 + 0.2 * k);
  for (double v : detrend_linear(line)) CHECK(std::abs(v) < 1e-12);
  const auto d = decimate(line, 12);
  REQUIRE(d.size() == 5);
  CHECK(d[1] == line[12]);

  const double dt = 0.01;
  const auto y = synth({{-0.4, 5.0, 1.0, 0.0}}, 1000, dt);
  CHECK(log_envelope_slope(y, dt) == doctest::Approx(-0.4).epsilon(0.02));
}

TEST_CASE("time series channels") {
  TimeSeries ts(1.0, 0.5);
  ts.add_channel("a", {1.0, 2.0, 3.0});
  CHECK(ts.size() == 3);
  CHECK(ts.time(2) == 2.0);
  CHECK(ts.has_channel("a"));
  CHECK_FALSE(ts.has_channel("b"));
  CHECK_THROWS(ts.add_channel("b", {1.0}));
  CHECK_THROWS(ts.channel("b"));
}
