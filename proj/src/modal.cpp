#include "lfo/modal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include <Eigen/Dense>
#include <fmt/format.h>

namespace lfo::modal {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double Mode::frequency_hz() const { return omega / (2.0 * kPi); }

double Mode::energy() const {
  const double a2 = amplitude * amplitude;
  return sigma < 0.0 ? a2 / std::abs(2.0 * sigma) : a2;
}

TimeSeries::TimeSeries(double t0, double dt) : t0_(t0), dt_(dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("TimeSeries dt must be > 0");
}

std::size_t TimeSeries::size() const { return channels_.empty() ? 0 : channels_.front().size(); }

void TimeSeries::add_channel(const std::string& name, std::vector<double> samples) {
  if (has_channel(name)) throw std::invalid_argument(fmt::format("duplicate channel \"{}\"", name));
  if (!channels_.empty() && samples.size() != size()) {
    throw std::invalid_argument(fmt::format("channel \"{}\" has {} samples, expected {}", name, samples.size(), size()));
  }
  names_.push_back(name);
  channels_.push_back(std::move(samples));
}

bool TimeSeries::has_channel(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

const std::vector<double>& TimeSeries::channel(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw std::out_of_range(fmt::format("no channel \"{}\"", name));
  return channels_[static_cast<std::size_t>(it - names_.begin())];
}

double damping_ratio(double sigma, double omega) {
  if (sigma == 0.0 && omega == 0.0) throw UndefinedRatio("damping ratio undefined for the eigenvalue 0");
  return -sigma / std::hypot(sigma, omega);
}

std::vector<Mode> prony(std::span<const double> signal, double dt, int order, const PronyOptions& options) {
  const auto n = static_cast<Eigen::Index>(signal.size());
  const Eigen::Index p = order;
  if (!(dt > 0.0)) throw std::invalid_argument("prony: dt must be > 0");
  if (order < 2 || order % 2 != 0) throw std::invalid_argument("prony: order must be even and >= 2");
  if (3 * p > n) throw std::invalid_argument(fmt::format("prony: order {} exceeds a third of {} samples", order, n));

  // Forward linear prediction x[k] = sum_j c_j x[k-j].
  Eigen::MatrixXd a(n - p, p);
  Eigen::VectorXd b(n - p);
  for (Eigen::Index i = 0; i < n - p; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) a(i, j) = signal[static_cast<std::size_t>(p + i - 1 - j)];
    b(i) = signal[static_cast<std::size_t>(p + i)];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(0) == 0.0) throw IllConditioned("prony: signal is identically zero");
  const double rank_tol = static_cast<double>(std::max(n - p, p)) * std::numeric_limits<double>::epsilon() * sv(0);
  svd.setThreshold(rank_tol / sv(0));
  const Eigen::Index rank = svd.rank();
  const double cond = sv(0) / sv(rank - 1);
  if (cond > options.max_condition) {
    throw IllConditioned(fmt::format("prony: prediction matrix condition number {:.3g} exceeds {:.3g}", cond,
                                     options.max_condition));
  }
  const Eigen::VectorXd c = svd.solve(b);

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
  companion.row(0) = c.transpose();
  for (Eigen::Index i = 1; i < p; ++i) companion(i, i - 1) = 1.0;
  const Eigen::VectorXcd roots = Eigen::EigenSolver<Eigen::MatrixXd>(companion, false).eigenvalues();

  std::vector<std::complex<double>> kept;
  for (Eigen::Index k = 0; k < p; ++k) {
    const auto z = roots(k);
    if (std::abs(z) == 0.0) continue;
    const double sigma = std::log(std::abs(z)) / dt;
    if (std::abs(sigma) > options.max_abs_sigma) continue;
    kept.push_back(z);
  }
  if (kept.empty()) throw RootOutOfRange("prony: every root implies |sigma| above the admissible range");

  // Complex amplitudes from the Vandermonde least-squares fit.
  const auto m = static_cast<Eigen::Index>(kept.size());
  Eigen::MatrixXcd vander(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    std::complex<double> zn(1.0, 0.0);
    for (Eigen::Index k = 0; k < n; ++k) {
      vander(k, j) = zn;
      zn *= kept[static_cast<std::size_t>(j)];
    }
  }
  Eigen::VectorXcd x(n);
  for (Eigen::Index k = 0; k < n; ++k) x(k) = signal[static_cast<std::size_t>(k)];
  const Eigen::VectorXcd h = vander.colPivHouseholderQr().solve(x);

  std::vector<Mode> modes;
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto z = kept[static_cast<std::size_t>(j)];
    const bool real_root = std::abs(z.imag()) <= 1e-12 * std::abs(z);
    if (!real_root && z.imag() < 0.0) continue;
    const std::complex<double> s = std::log(z) / dt;
    Mode mode;
    mode.sigma = s.real();
    mode.omega = real_root ? (z.real() < 0.0 ? kPi / dt : 0.0) : s.imag();
    mode.amplitude = (real_root ? 1.0 : 2.0) * std::abs(h(j));
    mode.phase = std::arg(h(j));
    mode.zeta = (mode.sigma == 0.0 && mode.omega == 0.0) ? 0.0 : damping_ratio(mode.sigma, mode.omega);
    modes.push_back(mode);
  }
  std::stable_sort(modes.begin(), modes.end(), [](const Mode& l, const Mode& r) { return l.energy() > r.energy(); });
  return modes;
}

std::vector<double> reconstruct(std::span<const Mode> modes, std::size_t n, double dt) {
  std::vector<double> out(n, 0.0);
  for (const auto& mode : modes) {
    for (std::size_t k = 0; k < n; ++k) {
      const double t = dt * static_cast<double>(k);
      out[k] += mode.amplitude * std::exp(mode.sigma * t) * std::cos(mode.omega * t + mode.phase);
    }
  }
  return out;
}

Mode dominant_mode(std::span<const Mode> modes, double f_lo_hz, double f_hi_hz) {
  if (modes.empty()) throw std::invalid_argument("dominant_mode: no modes");
  const Mode* best = nullptr;
  for (const auto& mode : modes) {
    const double f = mode.frequency_hz();
    if (f < f_lo_hz || f > f_hi_hz) continue;
    if (best == nullptr || mode.energy() > best->energy()) best = &mode;
  }
  if (best == nullptr) throw NoModeInBand(fmt::format("no mode between {} and {} Hz", f_lo_hz, f_hi_hz));
  return *best;
}

std::vector<double> detrend_linear(std::span<const double> signal) {
  const std::size_t n = signal.size();
  std::vector<double> out(signal.begin(), signal.end());
  if (n < 2) {
    for (auto& v : out) v = 0.0;
    return out;
  }
  double st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k);
    st += t;
    sy += signal[k];
    stt += t * t;
    sty += t * signal[k];
  }
  const double dn = static_cast<double>(n);
  const double slope = (dn * sty - st * sy) / (dn * stt - st * st);
  const double intercept = (sy - slope * st) / dn;
  for (std::size_t k = 0; k < n; ++k) out[k] -= intercept + slope * static_cast<double>(k);
  return out;
}

std::vector<double> decimate(std::span<const double> signal, std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("decimation factor must be >= 1");
  std::vector<double> out;
  out.reserve(signal.size() / factor + 1);
  for (std::size_t k = 0; k < signal.size(); k += factor) out.push_back(signal[k]);
  return out;
}

double log_envelope_slope(std::span<const double> signal, double dt) {
  const auto x = detrend_linear(signal);
  std::vector<double> t, y;
  for (std::size_t k = 1; k + 1 < x.size(); ++k) {
    const double left = x[k] - x[k - 1];
    const double right = x[k + 1] - x[k];
    if (left * right < 0.0 && x[k] != 0.0) {
      t.push_back(dt * static_cast<double>(k));
      y.push_back(std::log(std::abs(x[k])));
    }
  }
  if (t.size() < 3) throw std::invalid_argument("log_envelope_slope: fewer than three extrema");
  const double dn = static_cast<double>(t.size());
  double st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    st += t[k];
    sy += y[k];
    stt += t[k] * t[k];
    sty += t[k] * y[k];
  }
  return (dn * sty - st * sy) / (dn * stt - st * st);
}

std::vector<RankedRow> rank_strategies(const std::map<std::string, Mode>& results) {
  if (results.empty()) throw std::invalid_argument("rank_strategies: no results");
  std::vector<RankedRow> rows;
  for (const auto& [name, mode] : results) {
    rows.push_back({name, mode.sigma, mode.omega, 100.0 * damping_ratio(mode.sigma, mode.omega)});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const RankedRow& l, const RankedRow& r) {
    const auto lz = std::llround(l.zeta_percent * 10.0);
    const auto rz = std::llround(r.zeta_percent * 10.0);
    if (lz != rz) return lz > rz;
    if (l.sigma != r.sigma) return l.sigma < r.sigma;
    return l.strategy < r.strategy;
  });
  return rows;
}

}  // namespace lfo::modal
