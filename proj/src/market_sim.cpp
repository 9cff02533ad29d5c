#include "raeid/market_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "raeid/common.hpp"
#include "raeid/io.hpp"
#include "raeid/rng.hpp"

namespace raeid {

namespace {

constexpr double kStochasticTol = 1e-12;

void check_distribution(const Eigen::VectorXd& p, const std::string& what) {
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p[i]) || p[i] < 0.0) {
      throw ConfigError(what + ": negative or non-finite probability");
    }
  }
  if (std::abs(p.sum() - 1.0) > kStochasticTol) {
    throw ConfigError(what + ": probabilities sum to " + std::to_string(p.sum()) +
                      ", expected 1");
  }
}

void check_params(const std::vector<RegimeParams>& params) {
  for (std::size_t s = 0; s < params.size(); ++s) {
    const auto& p = params[s];
    const std::string tag = "regime " + std::to_string(s);
    if (!std::isfinite(p.mu) || !std::isfinite(p.phi) || !std::isfinite(p.sigma)) {
      throw ConfigError(tag + ": non-finite parameter");
    }
    if (p.sigma < 0.0) throw ConfigError(tag + ": sigma must be >= 0");
    if (std::abs(p.phi) >= 1.0) throw ConfigError(tag + ": |phi| must be < 1");
  }
}

int draw_categorical(Rng& rng, const Eigen::Ref<const Eigen::VectorXd>& p) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  // u landed in the rounding gap above the last partial sum.
  for (Eigen::Index i = p.size() - 1; i >= 0; --i) {
    if (p[i] > 0.0) return static_cast<int>(i);
  }
  return 0;
}

}  // namespace

RegimeSpec::RegimeSpec(std::vector<RegimeParams> params, Eigen::MatrixXd transition,
                       Eigen::VectorXd initial_dist, ShockDistribution shocks)
    : params_(std::move(params)),
      transition_(std::move(transition)),
      initial_(std::move(initial_dist)),
      shocks_(shocks) {
  const auto k = static_cast<Eigen::Index>(params_.size());
  if (k < 1) throw ConfigError("RegimeSpec: need at least one regime");
  if (transition_.rows() != k || transition_.cols() != k) {
    throw ConfigError("RegimeSpec: transition must be k x k");
  }
  if (initial_.size() != k) throw ConfigError("RegimeSpec: initial_dist must have length k");
  check_params(params_);
  for (Eigen::Index r = 0; r < k; ++r) {
    check_distribution(transition_.row(r).transpose(),
                       "transition row " + std::to_string(r));
  }
  check_distribution(initial_, "initial_dist");
}

RegimeSpec RegimeSpec::single(RegimeParams params) {
  return RegimeSpec({params}, Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Ones(1));
}

RegimeSpec RegimeSpec::with_params(std::vector<RegimeParams> params) const {
  if (params.size() != params_.size()) {
    throw ConfigError("with_params: regime count mismatch");
  }
  return RegimeSpec(std::move(params), transition_, initial_, shocks_);
}

Eigen::VectorXd RegimeSpec::stationary_distribution() const {
  const Eigen::Index k = transition_.rows();
  // Solve pi (P - I) = 0 with sum(pi) = 1 as a least-squares system.
  Eigen::MatrixXd a(k + 1, k);
  a.topRows(k) = (transition_ - Eigen::MatrixXd::Identity(k, k)).transpose();
  a.row(k).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(k + 1);
  b[k] = 1.0;
  return a.colPivHouseholderQr().solve(b);
}

std::string RegimeSpec::content_hash() const {
  std::ostringstream os;
  os.precision(17);
  os << "k=" << params_.size() << ";shocks=" << static_cast<int>(shocks_) << ";";
  for (const auto& p : params_) os << p.mu << "," << p.phi << "," << p.sigma << ";";
  for (Eigen::Index i = 0; i < transition_.size(); ++i) os << transition_.data()[i] << ",";
  for (Eigen::Index i = 0; i < initial_.size(); ++i) os << initial_[i] << ",";
  return fnv1a_hex(os.str());
}

bool RegimeSpec::operator==(const RegimeSpec& other) const {
  return params_ == other.params_ && shocks_ == other.shocks_ &&
         transition_ == other.transition_ && initial_ == other.initial_;
}

RegimeSchedule::RegimeSchedule(RegimeSpec base) { segments_.push_back({0, std::move(base)}); }

const RegimeSpec& RegimeSchedule::at(std::int64_t step) const {
  const Segment* active = &segments_.front();
  for (const auto& seg : segments_) {
    if (seg.start <= step) active = &seg;
  }
  return active->spec;
}

RegimeSchedule& RegimeSchedule::add_shift(std::int64_t at_step,
                                          std::vector<RegimeParams> new_params) {
  if (at_step <= segments_.back().start) {
    throw ConfigError("regime shift steps must be strictly increasing and > 0");
  }
  segments_.push_back({at_step, segments_.back().spec.with_params(std::move(new_params))});
  return *this;
}

RegimeSchedule inject_regime_shift(const RegimeSpec& spec, std::int64_t at_step,
                                   std::vector<RegimeParams> new_params) {
  RegimeSchedule schedule(spec);
  schedule.add_shift(at_step, std::move(new_params));
  return schedule;
}

RegimePath sample_regime_path(const RegimeSchedule& schedule, std::int64_t horizon,
                              std::uint64_t seed) {
  if (horizon < 1) throw ConfigError("sample_regime_path: horizon must be >= 1");
  Rng rng = make_rng(derive_seed(seed, 0x5245474dULL));
  RegimePath path;
  path.states.reserve(static_cast<std::size_t>(horizon));
  int s = draw_categorical(rng, schedule.at(0).initial_dist());
  path.states.push_back(s);
  for (std::int64_t t = 1; t < horizon; ++t) {
    s = draw_categorical(rng, schedule.at(t).transition().row(s).transpose());
    path.states.push_back(s);
  }
  return path;
}

RegimePath sample_regime_path(const RegimeSpec& spec, std::int64_t horizon,
                              std::uint64_t seed) {
  return sample_regime_path(RegimeSchedule(spec), horizon, seed);
}

std::vector<double> draw_shocks(std::int64_t horizon, std::uint64_t seed,
                                ShockDistribution dist) {
  if (horizon < 0) throw ConfigError("draw_shocks: negative horizon");
  Rng rng = make_rng(derive_seed(seed, 0x53484f4bULL));
  std::vector<double> eps(static_cast<std::size_t>(horizon));
  for (auto& e : eps) {
    switch (dist) {
      case ShockDistribution::Normal: e = standard_normal(rng); break;
      // U(-sqrt3, sqrt3) has unit variance.
      case ShockDistribution::Uniform: e = std::sqrt(3.0) * (2.0 * uniform01(rng) - 1.0); break;
    }
  }
  return eps;
}

std::vector<double> simulate_returns(const RegimeSchedule& schedule,
                                     const RegimePath& path,
                                     std::span<const double> shocks,
                                     double initial_return) {
  if (shocks.size() < path.states.size()) {
    throw ConfigError("simulate_returns: fewer shocks than path steps");
  }
  std::vector<double> out(path.states.size());
  double prev = initial_return;
  for (std::size_t t = 0; t < path.states.size(); ++t) {
    const RegimeSpec& spec = schedule.at(static_cast<std::int64_t>(t));
    const int s = path.states[t];
    if (s < 0 || s >= spec.num_regimes()) {
      throw ConfigError("simulate_returns: path state out of range at step " +
                        std::to_string(t));
    }
    const RegimeParams& p = spec.params(s);
    prev = p.mu + p.phi * prev + p.sigma * shocks[t];
    out[t] = prev;
  }
  return out;
}

std::vector<double> simulate_returns(const RegimeSchedule& schedule,
                                     const RegimePath& path, std::uint64_t seed,
                                     double initial_return) {
  const auto shocks = draw_shocks(static_cast<std::int64_t>(path.states.size()), seed,
                                  schedule.base().shocks());
  return simulate_returns(schedule, path, shocks, initial_return);
}

std::vector<double> simulate_returns(const RegimeSpec& spec, const RegimePath& path,
                                     std::uint64_t seed, double initial_return) {
  return simulate_returns(RegimeSchedule(spec), path, seed, initial_return);
}

void PriceSeries::validate() const {
  const std::size_t n = close.size();
  if (dates.size() != n || open.size() != n || high.size() != n || low.size() != n ||
      adj_close.size() != n || volume.size() != n || returns.size() != n) {
    throw DataError("PriceSeries: field lengths differ");
  }
  for (std::size_t t = 0; t < n; ++t) {
    const std::string at = " at row " + std::to_string(t);
    if (t > 0 && dates[t] <= dates[t - 1]) throw DataError("PriceSeries: dates not increasing" + at);
    if (!(open[t] > 0.0 && close[t] > 0.0 && low[t] > 0.0 && adj_close[t] > 0.0)) {
      throw DataError("PriceSeries: non-positive price" + at);
    }
    if (!(low[t] <= std::min(open[t], close[t]) && std::max(open[t], close[t]) <= high[t])) {
      throw DataError("PriceSeries: OHLC ordering violated" + at);
    }
    if (!(volume[t] >= 0.0)) throw DataError("PriceSeries: negative volume" + at);
  }
}

PriceSeries returns_to_ohlcv(std::span<const double> returns, double init_price,
                             std::uint64_t seed, const OhlcvOptions& options) {
  if (!(init_price > 0.0)) throw DataError("returns_to_ohlcv: init_price must be > 0");
  for (std::size_t t = 0; t < returns.size(); ++t) {
    if (!std::isfinite(returns[t]) || returns[t] <= -100.0) {
      throw DataError("returns_to_ohlcv: return <= -100% at step " + std::to_string(t));
    }
  }
  double scale = options.range_scale;
  if (scale <= 0.0) {
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= std::max<std::size_t>(returns.size(), 1);
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    var /= std::max<std::size_t>(returns.size(), 1);
    scale = std::max(std::sqrt(var) / 100.0, 1e-4);
  }

  Rng rng = make_rng(derive_seed(seed, 0x4f484c43ULL));
  PriceSeries s;
  const std::size_t n = returns.size();
  s.dates.resize(n);
  s.open.resize(n);
  s.high.resize(n);
  s.low.resize(n);
  s.close.resize(n);
  s.adj_close.resize(n);
  s.volume.resize(n);
  s.returns.assign(returns.begin(), returns.end());
  double prev_close = init_price;
  for (std::size_t t = 0; t < n; ++t) {
    const double close = prev_close * (1.0 + returns[t] / 100.0);
    const double up = std::min(std::abs(standard_normal(rng)) * scale, 0.5);
    const double down = std::min(std::abs(standard_normal(rng)) * scale, 0.5);
    const double vol_shock = standard_normal(rng);
    s.dates[t] = options.first_date + static_cast<std::int64_t>(t);
    s.open[t] = prev_close;
    s.close[t] = close;
    s.adj_close[t] = close;
    s.high[t] = std::max(prev_close, close) * (1.0 + up);
    s.low[t] = std::min(prev_close, close) * (1.0 - down);
    s.volume[t] = options.base_volume * std::exp(options.volume_log_sigma * vol_shock);
    prev_close = close;
  }
  return s;
}

namespace {

// Days-from-civil and inverse (proleptic Gregorian), epoch 1970-01-01.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

const std::int64_t kEpochDay = days_from_civil(2010, 1, 4);

}  // namespace

std::string day_to_iso(std::int64_t day) {
  std::int64_t y;
  unsigned m, d;
  civil_from_days(kEpochDay + day, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u", static_cast<long long>(y), m, d);
  return buf;
}

std::int64_t iso_to_day(const std::string& iso) {
  long long y;
  unsigned m, d;
  if (std::sscanf(iso.c_str(), "%lld-%u-%u", &y, &m, &d) != 3 || m < 1 || m > 12 ||
      d < 1 || d > 31) {
    throw DataError("invalid ISO date: " + iso);
  }
  return days_from_civil(y, m, d) - kEpochDay;
}

void write_price_csv(std::ostream& out, const PriceSeries& series) {
  out << "date,open,high,low,close,adj_close,volume,pct_change\n";
  for (std::size_t t = 0; t < series.size(); ++t) {
    out << day_to_iso(series.dates[t]) << ',' << fixed6(series.open[t]) << ','
        << fixed6(series.high[t]) << ',' << fixed6(series.low[t]) << ','
        << fixed6(series.close[t]) << ',' << fixed6(series.adj_close[t]) << ','
        << fixed6(series.volume[t]) << ',' << fixed6(series.returns[t]) << '\n';
  }
}

PriceSeries read_price_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) ||
      line != "date,open,high,low,close,adj_close,volume,pct_change") {
    throw DataError("price CSV: unexpected header");
  }
  PriceSeries s;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 8) {
      throw DataError("price CSV line " + std::to_string(lineno) + ": expected 8 fields");
    }
    try {
      s.dates.push_back(iso_to_day(cells[0]));
      s.open.push_back(parse_double(cells[1]));
      s.high.push_back(parse_double(cells[2]));
      s.low.push_back(parse_double(cells[3]));
      s.close.push_back(parse_double(cells[4]));
      s.adj_close.push_back(parse_double(cells[5]));
      s.volume.push_back(parse_double(cells[6]));
      s.returns.push_back(cells[7].empty() ? 0.0 : parse_double(cells[7]));
    } catch (const std::exception& e) {
      throw DataError("price CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  s.validate();
  return s;
}

}  // namespace raeid
