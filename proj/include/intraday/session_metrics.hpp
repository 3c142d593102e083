#ifndef INTRADAY_SESSION_METRICS_HPP
#define INTRADAY_SESSION_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "intraday/common.hpp"
#include "intraday/market_data.hpp"
#include "intraday/profile_fits.hpp"

namespace intraday {

/// Average daily volume of a semester: sum over minutes of the per-minute mean over days,
/// each minute divided by its own count of days with a quote.
inline double activity(const MinutePanel& panel, const SemesterIndex& index, const std::string& ticker, int s) {
  auto c = panel.company_index(ticker);
  if (!c) throw Error(ErrorKind::NoData, "unknown ticker " + ticker);
  if (index.excluded(ticker, s))
    throw Error(ErrorKind::InvalidArgument, ticker + " is excluded for semester " + std::to_string(s));
  const auto days = index.days_in(s);
  double total = 0.0;
  bool any = false;
  for (int t = kFirstMinute; t <= kLastMinute; ++t) {
    double sum = 0.0;
    std::size_t n = 0;
    for (auto d : days)
      if (panel.present(*c, d, t)) {
        sum += panel.volume(*c, d, t);
        ++n;
      }
    if (n) {
      total += sum / static_cast<double>(n);
      any = true;
    }
  }
  if (!any) throw Error(ErrorKind::NoData, ticker + " has no data in semester " + std::to_string(s));
  return total;
}

/// Continuous analogue of the activity in rescaled time x = t/195 - 1: trapezoid integral of the
/// mean profile over the present minutes. For a quartic profile it approaches 2c0 + 2c2/3 + 2c4/5.
inline double rescaled_activity(const MinuteSeries& mean_profile) {
  double integral = 0.0;
  std::optional<std::pair<double, double>> prev;
  for (int t = kFirstMinute; t <= kLastMinute && t < static_cast<int>(mean_profile.size()); ++t) {
    if (!mean_profile[t]) continue;
    const double x = rescaled_time(t);
    if (prev) integral += 0.5 * (x - prev->first) * (*mean_profile[t] + prev->second);
    prev = {x, *mean_profile[t]};
  }
  return integral;
}

// ---------------------------------------------------------------------------
// Prices

struct DailyOhlc {
  double open = 0.0, high = 0.0, low = 0.0, close = 0.0;
};

/// First present open, extremes over present minutes, last present close.
inline std::optional<DailyOhlc> daily_ohlc(const MinutePanel& panel, std::size_t c, std::size_t d) {
  std::optional<DailyOhlc> out;
  for (int t = kFirstMinute; t <= kLastMinute; ++t) {
    auto cell = panel.cell(c, d, t);
    if (!cell) continue;
    if (!out) {
      out = DailyOhlc{cell->open, cell->high, cell->low, cell->close};
      continue;
    }
    out->high = std::max(out->high, cell->high);
    out->low = std::min(out->low, cell->low);
    out->close = cell->close;
  }
  return out;
}

/// Annualized Garman-Klass volatility:
/// sqrt( (days_per_year / N) * sum_d [ 0.5 ln(H/L)^2 - (2 ln 2 - 1) ln(C/O)^2 ] ).
inline double garman_klass_volatility(std::span<const DailyOhlc> days, double trading_days_per_year = 252.0) {
  if (days.empty()) throw Error(ErrorKind::NoData, "no daily bars");
  const double k = 2.0 * std::numbers::ln2 - 1.0;
  double sum = 0.0;
  for (const auto& b : days) {
    if (!(b.open > 0.0 && b.high > 0.0 && b.low > 0.0 && b.close > 0.0))
      throw Error(ErrorKind::NonPositivePrice, "daily bar with a non-positive price");
    if (b.high < b.low) throw Error(ErrorKind::InvalidArgument, "daily high below low");
    const double hl = std::log(b.high / b.low);
    const double co = std::log(b.close / b.open);
    sum += 0.5 * hl * hl - k * co * co;
  }
  if (sum < 0.0) throw Error(ErrorKind::NegativeVariance, "Garman-Klass sum is negative: " + fmt_double(sum));
  return std::sqrt(trading_days_per_year / static_cast<double>(days.size()) * sum);
}

enum class ReturnConvention { ClosingDenominator, OpenDenominator };

/// Semester price variation in percent. ClosingDenominator: 100 (close - open) / close.
/// OpenDenominator: the conventional 100 (close - open) / open.
inline double semester_return(double first_day_open, double last_day_close,
                              ReturnConvention convention = ReturnConvention::ClosingDenominator) {
  if (!(first_day_open > 0.0) || !(last_day_close > 0.0))
    throw Error(ErrorKind::NonPositivePrice, "semester return needs positive prices");
  const double denom = convention == ReturnConvention::ClosingDenominator ? last_day_close : first_day_open;
  return 100.0 * (last_day_close - first_day_open) / denom;
}

// ---------------------------------------------------------------------------
// Per (ticker, semester) summary

struct SemesterMetrics {
  std::string ticker;
  int semester = 0;
  double activity = 0.0;           // shares per day
  double rescaled_activity = 0.0;  // continuous analogue in rescaled time
  Maybe volatility;                // annualized fraction
  Maybe price_variation;           // percent
  Maybe concavity;
  Maybe symmetry;
};

struct MetricsOptions {
  double trading_days_per_year = 252.0;
  ReturnConvention return_convention = ReturnConvention::ClosingDenominator;
};

/// Activity, volatility and price variation. Concavity/symmetry come from the mean profile's
/// quartic when the caller supplies it.
inline SemesterMetrics semester_metrics(const MinutePanel& panel, const SemesterIndex& index, const std::string& ticker,
                                        int s, const MinuteSeries& mean_profile,
                                        const std::optional<ShapeFunctionals>& shape = std::nullopt,
                                        const MetricsOptions& opt = {}) {
  SemesterMetrics m;
  m.ticker = ticker;
  m.semester = s;
  m.activity = activity(panel, index, ticker, s);
  m.rescaled_activity = rescaled_activity(mean_profile);
  const auto c = *panel.company_index(ticker);
  std::vector<DailyOhlc> bars;
  for (auto d : index.days_in(s))
    if (auto b = daily_ohlc(panel, c, d)) bars.push_back(*b);
  if (!bars.empty()) {
    try {
      m.volatility = garman_klass_volatility(bars, opt.trading_days_per_year);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NegativeVariance) throw;
    }
    m.price_variation = semester_return(bars.front().open, bars.back().close, opt.return_convention);
  }
  if (shape) {
    m.concavity = shape->concavity;
    m.symmetry = shape->symmetry;
  }
  return m;
}

/// OLS of concavity on rescaled activity across one ticker's semesters. Under a quartic profile
/// dominated by c4 the slope is 10.
inline FitResult concavity_activity_regression(std::span<const SemesterMetrics> metrics) {
  std::vector<double> v, c;
  for (const auto& m : metrics)
    if (m.concavity) {
      v.push_back(m.rescaled_activity);
      c.push_back(*m.concavity);
    }
  if (v.size() < 3) throw Error(ErrorKind::TooFewPoints, std::to_string(v.size()) + " semesters with concavity");
  return polynomial_regression(v, c, 1);
}

}  // namespace intraday

#endif  // INTRADAY_SESSION_METRICS_HPP
