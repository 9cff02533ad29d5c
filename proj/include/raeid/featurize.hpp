#pragma once

// Technical indicators over daily price series and the trailing context
// window fed into prompts. Values inside an indicator's warm-up period are
// absent (std::nullopt), never back-filled.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "raeid/market_sim.hpp"

namespace raeid {

using Column = std::vector<std::optional<double>>;

struct IndicatorConfig {
  int macd_fast = 12;
  int macd_slow = 26;
  int bollinger_window = 20;
  double bollinger_k = 2.0;
  int rsi_window = 30;
  int cci_window = 30;
  double cci_constant = 0.015;
  int dx_window = 30;
  int sma_short = 30;
  int sma_long = 60;
};

struct IndicatorRow {
  std::int64_t date = 0;
  std::optional<double> pct_change;
  std::optional<double> macd;
  std::optional<double> bollinger_upper;
  std::optional<double> bollinger_mid;
  std::optional<double> bollinger_lower;
  std::optional<double> rsi;
  std::optional<double> cci;
  std::optional<double> dx;
  std::optional<double> sma_short;
  std::optional<double> sma_long;
};

struct BollingerBands {
  Column upper, mid, lower;
};

Column pct_change(std::span<const double> close);
Column sma(std::span<const double> close, int n);
/// EMA seeded with the SMA of the first n values; absent before index n-1.
Column ema(std::span<const double> close, int n);
/// EMA(fast) - EMA(slow); absent until the slow EMA exists.
Column macd(std::span<const double> close, int fast = 12, int slow = 26);
/// Population standard deviation around the n-day SMA.
BollingerBands bollinger(std::span<const double> close, int n = 20, double k = 2.0);
/// Wilder-smoothed RSI. A window with no moves at all reads 50.
Column rsi(std::span<const double> close, int n = 30);
Column cci(std::span<const double> high, std::span<const double> low,
           std::span<const double> close, int n = 30, double constant = 0.015);
/// Wilder-smoothed directional movement index.
Column dx(std::span<const double> high, std::span<const double> low,
          std::span<const double> close, int n = 30);

std::vector<IndicatorRow> compute_indicators(const PriceSeries& series,
                                             const IndicatorConfig& config = {});

/// One day of raw market data plus its indicators.
struct ContextRow {
  std::int64_t date = 0;
  double open = 0, high = 0, low = 0, close = 0, adj_close = 0, volume = 0;
  IndicatorRow indicators;
};

struct ContextWindow {
  std::vector<ContextRow> rows;  // oldest first, most recent last
  int depth() const { return static_cast<int>(rows.size()); }
};

inline constexpr int kDefaultContextDepth = 10;

/// The min(depth, available) most recent complete rows ending at day index t.
/// A row is complete once its percentage change exists (t >= 1).
ContextWindow build_context_window(const PriceSeries& series,
                                   std::span<const IndicatorRow> indicators,
                                   std::int64_t t, int depth = kDefaultContextDepth);

/// CSV with header `date,pct_change,macd,boll_up,boll_low,rsi30,cci30,dx30,sma30,sma60`;
/// absent values are empty fields.
void write_indicator_csv(std::ostream& out, std::span<const IndicatorRow> rows);

}  // namespace raeid
