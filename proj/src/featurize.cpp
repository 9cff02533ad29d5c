#include "raeid/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "raeid/common.hpp"
#include "raeid/io.hpp"

namespace raeid {

namespace {

void require_window(int n, const char* what) {
  if (n < 1) throw ConfigError(std::string(what) + ": window must be >= 1");
}

void require_same_length(std::span<const double> a, std::span<const double> b,
                         std::span<const double> c) {
  if (a.size() != b.size() || b.size() != c.size()) {
    throw DataError("indicator inputs have different lengths");
  }
}

// Wilder's running average: first value is the plain mean of x[1..n], then
// avg_t = (avg_{t-1} * (n - 1) + x_t) / n. Index 0 of x is unused.
Column wilder(std::span<const double> x, int n) {
  Column out(x.size());
  if (x.size() <= static_cast<std::size_t>(n)) return out;
  double avg = 0.0;
  for (int i = 1; i <= n; ++i) avg += x[i];
  avg /= n;
  out[n] = avg;
  for (std::size_t i = n + 1; i < x.size(); ++i) {
    avg = (avg * (n - 1) + x[i]) / n;
    out[i] = avg;
  }
  return out;
}

}  // namespace

Column pct_change(std::span<const double> close) {
  if (close.size() < 2) throw DataError("pct_change: need at least two closes");
  for (double c : close) {
    if (!(c > 0.0)) throw DataError("pct_change: non-positive price");
  }
  Column out(close.size());
  for (std::size_t t = 1; t < close.size(); ++t) {
    out[t] = (close[t] - close[t - 1]) / close[t - 1] * 100.0;
  }
  return out;
}

Column sma(std::span<const double> close, int n) {
  require_window(n, "sma");
  Column out(close.size());
  for (std::size_t t = n - 1; t < close.size(); ++t) {
    double sum = 0.0;
    for (std::size_t j = t + 1 - n; j <= t; ++j) sum += close[j];
    out[t] = sum / n;
  }
  return out;
}

Column ema(std::span<const double> close, int n) {
  require_window(n, "ema");
  Column out(close.size());
  if (close.size() < static_cast<std::size_t>(n)) return out;
  const double alpha = 2.0 / (n + 1.0);
  double v = 0.0;
  for (int j = 0; j < n; ++j) v += close[j];
  v /= n;
  out[n - 1] = v;
  for (std::size_t t = n; t < close.size(); ++t) {
    v += alpha * (close[t] - v);
    out[t] = v;
  }
  return out;
}

Column macd(std::span<const double> close, int fast, int slow) {
  if (fast >= slow) throw ConfigError("macd: fast window must be shorter than slow");
  const Column f = ema(close, fast);
  const Column s = ema(close, slow);
  Column out(close.size());
  for (std::size_t t = 0; t < close.size(); ++t) {
    if (f[t] && s[t]) out[t] = *f[t] - *s[t];
  }
  return out;
}

BollingerBands bollinger(std::span<const double> close, int n, double k) {
  require_window(n, "bollinger");
  BollingerBands b{Column(close.size()), sma(close, n), Column(close.size())};
  for (std::size_t t = 0; t < close.size(); ++t) {
    if (!b.mid[t]) continue;
    const double m = *b.mid[t];
    double var = 0.0;
    for (std::size_t j = t + 1 - n; j <= t; ++j) var += (close[j] - m) * (close[j] - m);
    const double width = k * std::sqrt(var / n);
    b.upper[t] = m + width;
    b.lower[t] = m - width;
  }
  return b;
}

Column rsi(std::span<const double> close, int n) {
  require_window(n, "rsi");
  std::vector<double> gain(close.size(), 0.0), loss(close.size(), 0.0);
  for (std::size_t t = 1; t < close.size(); ++t) {
    const double d = close[t] - close[t - 1];
    gain[t] = d > 0.0 ? d : 0.0;
    loss[t] = d < 0.0 ? -d : 0.0;
  }
  const Column g = wilder(gain, n);
  const Column l = wilder(loss, n);
  Column out(close.size());
  for (std::size_t t = 0; t < close.size(); ++t) {
    if (!g[t]) continue;
    if (*l[t] == 0.0) {
      out[t] = *g[t] == 0.0 ? 50.0 : 100.0;
    } else {
      out[t] = 100.0 - 100.0 / (1.0 + *g[t] / *l[t]);
    }
  }
  return out;
}

Column cci(std::span<const double> high, std::span<const double> low,
           std::span<const double> close, int n, double constant) {
  require_window(n, "cci");
  require_same_length(high, low, close);
  std::vector<double> tp(close.size());
  for (std::size_t t = 0; t < close.size(); ++t) tp[t] = (high[t] + low[t] + close[t]) / 3.0;
  const Column mean = sma(tp, n);
  Column out(close.size());
  for (std::size_t t = 0; t < close.size(); ++t) {
    if (!mean[t]) continue;
    double md = 0.0;
    for (std::size_t j = t + 1 - n; j <= t; ++j) md += std::abs(tp[j] - *mean[t]);
    md /= n;
    out[t] = md == 0.0 ? 0.0 : (tp[t] - *mean[t]) / (constant * md);
  }
  return out;
}

Column dx(std::span<const double> high, std::span<const double> low,
          std::span<const double> close, int n) {
  require_window(n, "dx");
  require_same_length(high, low, close);
  const std::size_t len = close.size();
  std::vector<double> plus_dm(len, 0.0), minus_dm(len, 0.0), tr(len, 0.0);
  for (std::size_t t = 1; t < len; ++t) {
    const double up = high[t] - high[t - 1];
    const double down = low[t - 1] - low[t];
    plus_dm[t] = (up > down && up > 0.0) ? up : 0.0;
    minus_dm[t] = (down > up && down > 0.0) ? down : 0.0;
    tr[t] = std::max({high[t] - low[t], std::abs(high[t] - close[t - 1]),
                      std::abs(low[t] - close[t - 1])});
  }
  const Column sp = wilder(plus_dm, n);
  const Column sm = wilder(minus_dm, n);
  const Column st = wilder(tr, n);
  Column out(len);
  for (std::size_t t = 0; t < len; ++t) {
    if (!st[t]) continue;
    if (*st[t] == 0.0) {
      out[t] = 0.0;
      continue;
    }
    const double pdi = 100.0 * *sp[t] / *st[t];
    const double mdi = 100.0 * *sm[t] / *st[t];
    const double denom = pdi + mdi;
    out[t] = denom == 0.0 ? 0.0 : 100.0 * std::abs(pdi - mdi) / denom;
  }
  return out;
}

std::vector<IndicatorRow> compute_indicators(const PriceSeries& series,
                                             const IndicatorConfig& cfg) {
  series.validate();
  const auto& c = series.close;
  const Column pct = pct_change(c);
  const Column m = macd(c, cfg.macd_fast, cfg.macd_slow);
  const BollingerBands bb = bollinger(c, cfg.bollinger_window, cfg.bollinger_k);
  const Column r = rsi(c, cfg.rsi_window);
  const Column cc = cci(series.high, series.low, c, cfg.cci_window, cfg.cci_constant);
  const Column d = dx(series.high, series.low, c, cfg.dx_window);
  const Column s1 = sma(c, cfg.sma_short);
  const Column s2 = sma(c, cfg.sma_long);
  std::vector<IndicatorRow> rows(c.size());
  for (std::size_t t = 0; t < c.size(); ++t) {
    rows[t] = {series.dates[t], pct[t], m[t], bb.upper[t], bb.mid[t], bb.lower[t],
               r[t], cc[t], d[t], s1[t], s2[t]};
  }
  return rows;
}

ContextWindow build_context_window(const PriceSeries& series,
                                   std::span<const IndicatorRow> indicators,
                                   std::int64_t t, int depth) {
  if (depth < 1) throw ConfigError("build_context_window: depth must be >= 1");
  if (indicators.size() != series.size()) {
    throw DataError("build_context_window: indicator table does not match series");
  }
  if (t < 0 || static_cast<std::size_t>(t) >= series.size()) {
    throw DataError("build_context_window: t outside series");
  }
  std::int64_t first = t;
  while (first > 0 && t - first + 1 < depth && indicators[first - 1].pct_change) --first;
  if (!indicators[first].pct_change) {
    throw DataError("build_context_window: no complete row at or before t=" +
                    std::to_string(t));
  }
  ContextWindow w;
  for (std::int64_t i = first; i <= t; ++i) {
    const auto u = static_cast<std::size_t>(i);
    w.rows.push_back({series.dates[u], series.open[u], series.high[u], series.low[u],
                      series.close[u], series.adj_close[u], series.volume[u],
                      indicators[u]});
  }
  return w;
}

void write_indicator_csv(std::ostream& out, std::span<const IndicatorRow> rows) {
  out << "date,pct_change,macd,boll_up,boll_low,rsi30,cci30,dx30,sma30,sma60\n";
  for (const auto& r : rows) {
    out << day_to_iso(r.date) << ',' << fixed6(r.pct_change) << ',' << fixed6(r.macd)
        << ',' << fixed6(r.bollinger_upper) << ',' << fixed6(r.bollinger_lower) << ','
        << fixed6(r.rsi) << ',' << fixed6(r.cci) << ',' << fixed6(r.dx) << ','
        << fixed6(r.sma_short) << ',' << fixed6(r.sma_long) << '\n';
  }
}

}  // namespace raeid
