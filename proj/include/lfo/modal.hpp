#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfo::modal {

class IllConditioned : public std::runtime_error {
 public:
  explicit IllConditioned(const std::string& what) : std::runtime_error(what) {}
};

class RootOutOfRange : public std::runtime_error {
 public:
  explicit RootOutOfRange(const std::string& what) : std::runtime_error(what) {}
};

class UndefinedRatio : public std::invalid_argument {
 public:
  explicit UndefinedRatio(const std::string& what) : std::invalid_argument(what) {}
};

class NoModeInBand : public std::runtime_error {
 public:
  explicit NoModeInBand(const std::string& what) : std::runtime_error(what) {}
};

/// One damped sinusoid A e^(sigma t) cos(omega t + phase).
struct Mode {
  double sigma{0.0};      // 1/s
  double omega{0.0};      // rad/s, >= 0
  double amplitude{0.0};  // signal units
  double phase{0.0};      // rad
  double zeta{0.0};

  double frequency_hz() const;
  /// amplitude^2 / |2 sigma| for decaying modes, amplitude^2 otherwise.
  double energy() const;
};

/// Uniformly sampled channels sharing one time axis.
class TimeSeries {
 public:
  TimeSeries() = default;
  TimeSeries(double t0, double dt);

  double t0() const { return t0_; }
  double dt() const { return dt_; }
  std::size_t size() const;
  const std::vector<std::string>& names() const { return names_; }

  void add_channel(const std::string& name, std::vector<double> samples);
  const std::vector<double>& channel(const std::string& name) const;
  bool has_channel(const std::string& name) const;
  double time(std::size_t k) const { return t0_ + dt_ * static_cast<double>(k); }

 private:
  double t0_{0.0};
  double dt_{1.0};
  std::vector<std::string> names_;
  std::vector<std::vector<double>> channels_;
};

double damping_ratio(double sigma, double omega);

struct PronyOptions {
  double max_abs_sigma{100.0};
  double max_condition{1e12};
};

/// Least-squares Prony fit of `order` exponentials. Conjugate pairs are folded into one
/// mode with omega > 0. Result sorted by descending energy.
std::vector<Mode> prony(std::span<const double> signal, double dt, int order, const PronyOptions& options = {});

/// Sum of the modes' sinusoids at sample k = 0..n-1.
std::vector<double> reconstruct(std::span<const Mode> modes, std::size_t n, double dt);

Mode dominant_mode(std::span<const Mode> modes, double f_lo_hz = 0.2, double f_hi_hz = 2.0);

/// Removes the least-squares straight line.
std::vector<double> detrend_linear(std::span<const double> signal);

/// Keeps every `factor`-th sample starting at the first.
std::vector<double> decimate(std::span<const double> signal, std::size_t factor);

/// Slope of a straight-line fit to log|peak| over the local extrema of `signal` (mean
/// removed); negative for a decaying oscillation. Needs at least three extrema.
double log_envelope_slope(std::span<const double> signal, double dt);

struct RankedRow {
  std::string strategy;
  double sigma;
  double omega;
  double zeta_percent;
};

/// Sorted by damping ratio (to 0.1 percentage point), then by faster decay, then by name.
std::vector<RankedRow> rank_strategies(const std::map<std::string, Mode>& results);

}  // namespace lfo::modal
