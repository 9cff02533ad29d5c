#pragma once

// Markov regime-switching return process and OHLCV synthesis.
//
//   o_t = mu[s_t] + phi[s_t] * o_{t-1} + sigma[s_t] * eps_t
//
// with s_t a discrete Markov chain. All functions are pure; generators are
// seeded per call so identical inputs give bit-identical outputs.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace raeid {

struct RegimeParams {
  double mu = 0.0;
  double phi = 0.0;
  double sigma = 1.0;

  bool operator==(const RegimeParams&) const = default;
};

enum class ShockDistribution { Normal, Uniform };

/// Validated regime-switching specification. Construction throws
/// ConfigError on any invariant violation; there is no renormalization.
class RegimeSpec {
 public:
  RegimeSpec(std::vector<RegimeParams> params, Eigen::MatrixXd transition,
             Eigen::VectorXd initial_dist,
             ShockDistribution shocks = ShockDistribution::Normal);

  /// One regime, stationary transition.
  static RegimeSpec single(RegimeParams params);

  int num_regimes() const { return static_cast<int>(params_.size()); }
  const std::vector<RegimeParams>& params() const { return params_; }
  const RegimeParams& params(int s) const { return params_.at(s); }
  const Eigen::MatrixXd& transition() const { return transition_; }
  const Eigen::VectorXd& initial_dist() const { return initial_; }
  ShockDistribution shocks() const { return shocks_; }

  /// Same chain, new per-regime parameters (validated).
  RegimeSpec with_params(std::vector<RegimeParams> params) const;

  /// Stationary distribution of the chain (left eigenvector for eigenvalue 1).
  Eigen::VectorXd stationary_distribution() const;

  /// FNV-1a over a canonical text rendering; used in run manifests.
  std::string content_hash() const;

  bool operator==(const RegimeSpec& other) const;

 private:
  std::vector<RegimeParams> params_;
  Eigen::MatrixXd transition_;
  Eigen::VectorXd initial_;
  ShockDistribution shocks_;
};

struct RegimePath {
  std::vector<int> states;
};

/// Piecewise-constant specification: segment i is active from its start step
/// until the next segment starts. The first segment always starts at 0.
class RegimeSchedule {
 public:
  explicit RegimeSchedule(RegimeSpec base);

  const RegimeSpec& at(std::int64_t step) const;
  const RegimeSpec& base() const { return segments_.front().spec; }
  std::size_t num_segments() const { return segments_.size(); }
  std::int64_t segment_start(std::size_t i) const { return segments_.at(i).start; }
  const RegimeSpec& segment_spec(std::size_t i) const { return segments_.at(i).spec; }

  /// Adds a segment from `at_step` on with the latest spec's chain and the
  /// supplied per-regime parameters. Steps must be strictly increasing.
  RegimeSchedule& add_shift(std::int64_t at_step, std::vector<RegimeParams> new_params);

 private:
  struct Segment {
    std::int64_t start;
    RegimeSpec spec;
  };
  std::vector<Segment> segments_;
};

/// Convenience: schedule with a single shift of every regime's parameters.
RegimeSchedule inject_regime_shift(const RegimeSpec& spec, std::int64_t at_step,
                                   std::vector<RegimeParams> new_params);

RegimePath sample_regime_path(const RegimeSpec& spec, std::int64_t horizon,
                              std::uint64_t seed);
RegimePath sample_regime_path(const RegimeSchedule& schedule, std::int64_t horizon,
                              std::uint64_t seed);

/// Unit-variance iid shocks for `horizon` steps.
std::vector<double> draw_shocks(std::int64_t horizon, std::uint64_t seed,
                                ShockDistribution dist = ShockDistribution::Normal);

/// Runs the recurrence over explicit shocks. `initial_return` is o_{-1}.
std::vector<double> simulate_returns(const RegimeSchedule& schedule,
                                     const RegimePath& path,
                                     std::span<const double> shocks,
                                     double initial_return = 0.0);

std::vector<double> simulate_returns(const RegimeSpec& spec, const RegimePath& path,
                                     std::uint64_t seed, double initial_return = 0.0);
std::vector<double> simulate_returns(const RegimeSchedule& schedule,
                                     const RegimePath& path, std::uint64_t seed,
                                     double initial_return = 0.0);

struct PriceSeries {
  std::vector<std::int64_t> dates;  // day indices, strictly increasing
  std::vector<double> open, high, low, close, adj_close, volume;
  std::vector<double> returns;      // percent; returns[t] moved close[t-1] -> close[t]

  std::size_t size() const { return close.size(); }
  /// Throws DataError describing the first violated invariant.
  void validate() const;
};

struct OhlcvOptions {
  /// Scale of the half-normal high/low spread as a price fraction. Zero means
  /// "use the sample standard deviation of the returns" (floored at 1e-4).
  double range_scale = 0.0;
  double base_volume = 1.0e6;
  double volume_log_sigma = 0.25;
  std::int64_t first_date = 0;
};

/// close_t = close_{t-1} * (1 + o_t / 100), starting from close_{-1} = init_price;
/// open_t = close_{t-1}.
PriceSeries returns_to_ohlcv(std::span<const double> returns, double init_price,
                             std::uint64_t seed, const OhlcvOptions& options = {});

/// ISO-8601 calendar date for a day index counted from 2010-01-04.
std::string day_to_iso(std::int64_t day);
std::int64_t iso_to_day(const std::string& iso);

/// CSV with header `date,open,high,low,close,adj_close,volume,pct_change`.
void write_price_csv(std::ostream& out, const PriceSeries& series);
PriceSeries read_price_csv(std::istream& in);

}  // namespace raeid
