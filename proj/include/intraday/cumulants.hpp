#ifndef INTRADAY_CUMULANTS_HPP
#define INTRADAY_CUMULANTS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "intraday/common.hpp"
#include "intraday/market_data.hpp"
#include "intraday/parallel.hpp"

namespace intraday {

/// How the absolute-deviation term of the kurtosis estimator is read.
/// MeanAbsoluteDeviation averages |v - mean| over the sample (Gaussian samples score 0).
/// Literal takes |mean(v) - mean|, which is identically zero; kept for auditing only.
enum class KurtosisReading { MeanAbsoluteDeviation, Literal };

struct CumulantOptions {
  KurtosisReading kurtosis_reading = KurtosisReading::MeanAbsoluteDeviation;
};

/// Robust cumulants of one sample. All fields are absent for samples smaller than two;
/// skewness and kurtosis are absent when the variance vanishes.
struct SampleCumulants {
  std::size_t n = 0;
  Maybe mean, median, variance, skewness, kurtosis;
};

/// Median with even-sized samples resolved to the mean of the two central order statistics.
inline double sample_median(std::vector<double> v) {
  const std::size_t n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  double hi = *mid;
  if (n % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

inline SampleCumulants robust_cumulants(std::span<const double> v, const CumulantOptions& opt = {}) {
  SampleCumulants out;
  out.n = v.size();
  if (v.size() < 2) return out;
  const double n = static_cast<double>(v.size());
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / n;
  double ss = 0.0, abs_dev = 0.0;
  for (double x : v) {
    ss += (x - mean) * (x - mean);
    abs_dev += std::abs(x - mean);
  }
  const double var = std::max(0.0, ss / n);  // population convention
  const double median = sample_median({v.begin(), v.end()});
  out.mean = mean;
  out.median = median;
  out.variance = var;
  const double sigma = std::sqrt(var);
  if (!(sigma > 4.0 * std::numeric_limits<double>::epsilon() * std::abs(mean))) return out;
  const double skew = 6.0 * (mean - median) / sigma;
  double deviation = abs_dev / n;
  if (opt.kurtosis_reading == KurtosisReading::Literal) deviation = std::abs(sum / n - mean);
  out.skewness = skew;
  out.kurtosis = 24.0 * (1.0 - std::sqrt(std::numbers::pi / 2.0) * deviation / sigma) + skew * skew;
  return out;
}

// ---------------------------------------------------------------------------
// Profiles

enum class Axis { OverDays, OverCompanies };

inline const char* to_string(Axis a) { return a == Axis::OverDays ? "over_days" : "over_companies"; }

struct CumulantProfile {
  int semester = 0;
  Axis axis = Axis::OverDays;
  std::string ticker;       // OverDays
  std::optional<Date> day;  // OverCompanies
  MinuteSeries mean = empty_series();
  MinuteSeries median = empty_series();
  MinuteSeries variance = empty_series();
  MinuteSeries skewness = empty_series();
  MinuteSeries kurtosis = empty_series();
  std::vector<std::size_t> sample_count = std::vector<std::size_t>(kSessionMinutes, 0);
};

namespace detail {

inline void store(CumulantProfile& p, int t, const SampleCumulants& c) {
  p.sample_count[t] = c.n;
  p.mean[t] = c.mean;
  p.median[t] = c.median;
  p.variance[t] = c.variance;
  p.skewness[t] = c.skewness;
  p.kurtosis[t] = c.kurtosis;
}

inline bool any_minute_usable(const CumulantProfile& p) {
  return std::any_of(p.sample_count.begin(), p.sample_count.end(), [](std::size_t n) { return n >= 2; });
}

}  // namespace detail

/// Individual analysis: per minute, statistics over the semester's days for one ticker.
/// Each minute's divisor is the count of days with a quote at that minute.
inline CumulantProfile cumulants_over_days(const MinutePanel& panel, const SemesterIndex& index,
                                           const std::string& ticker, int s, const CumulantOptions& opt = {}) {
  auto c = panel.company_index(ticker);
  if (!c) throw Error(ErrorKind::NoData, "unknown ticker " + ticker);
  if (index.excluded(ticker, s))
    throw Error(ErrorKind::InvalidArgument, ticker + " is excluded for semester " + std::to_string(s));
  CumulantProfile p;
  p.semester = s;
  p.axis = Axis::OverDays;
  p.ticker = ticker;
  const auto days = index.days_in(s);
  std::vector<double> sample;
  sample.reserve(days.size());
  for (int t = kFirstMinute; t <= kLastMinute; ++t) {
    sample.clear();
    for (auto d : days)
      if (panel.present(*c, d, t)) sample.push_back(panel.volume(*c, d, t));
    detail::store(p, t, robust_cumulants(sample, opt));
  }
  if (!detail::any_minute_usable(p))
    throw Error(ErrorKind::InsufficientSamples, ticker + " has fewer than 2 days at every minute of semester " +
                                                    std::to_string(s));
  return p;
}

/// Cross-sectional analysis: per minute, statistics over the non-excluded companies on one day.
inline CumulantProfile cumulants_over_companies(const MinutePanel& panel, const SemesterIndex& index, const Date& day,
                                                int s, const CumulantOptions& opt = {}) {
  auto d = panel.day_index(day);
  if (!d) throw Error(ErrorKind::NoData, "day not in panel: " + format_date(day));
  if (index.semester_of(*d) != s)
    throw Error(ErrorKind::InvalidArgument, format_date(day) + " is not in semester " + std::to_string(s));
  std::vector<std::size_t> companies;
  for (std::size_t c = 0; c < panel.num_companies(); ++c)
    if (!index.excluded(panel.companies()[c], s)) companies.push_back(c);
  CumulantProfile p;
  p.semester = s;
  p.axis = Axis::OverCompanies;
  p.day = day;
  std::vector<double> sample;
  sample.reserve(companies.size());
  for (int t = kFirstMinute; t <= kLastMinute; ++t) {
    sample.clear();
    for (auto c : companies)
      if (panel.present(c, *d, t)) sample.push_back(panel.volume(c, *d, t));
    detail::store(p, t, robust_cumulants(sample, opt));
  }
  if (!detail::any_minute_usable(p))
    throw Error(ErrorKind::InsufficientSamples, "fewer than 2 companies at every minute of " + format_date(day));
  return p;
}

// ---------------------------------------------------------------------------
// Aggregation

/// Tilde: per-ticker statistics averaged over companies. Hat: per-day cross-sections averaged over days.
enum class AggregateKind { Tilde, Hat };

inline const char* to_string(AggregateKind k) { return k == AggregateKind::Tilde ? "tilde" : "hat"; }

struct AggregatedProfile {
  int semester = 0;
  AggregateKind kind = AggregateKind::Tilde;
  MinuteSeries mean = empty_series();
  MinuteSeries median = empty_series();
  MinuteSeries variance = empty_series();
  MinuteSeries skewness = empty_series();
  MinuteSeries kurtosis = empty_series();
  std::vector<std::size_t> contributing_count = std::vector<std::size_t>(kSessionMinutes, 0);
};

namespace detail {

inline void average_field(const std::vector<CumulantProfile>& in, MinuteSeries CumulantProfile::*field,
                          MinuteSeries& out, std::vector<std::size_t>* counts) {
  for (int t = kFirstMinute; t <= kLastMinute; ++t) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& p : in) {  // fixed input order keeps the sum bit-stable
      const auto& v = (p.*field)[t];
      if (v) {
        sum += *v;
        ++n;
      }
    }
    out[t] = n ? Maybe(sum / static_cast<double>(n)) : std::nullopt;
    if (counts) (*counts)[t] = n;
  }
}

inline AggregatedProfile aggregate(const std::vector<CumulantProfile>& profiles, int s, AggregateKind kind) {
  if (profiles.empty()) throw Error(ErrorKind::EmptyInput, "no profiles to aggregate");
  const Axis want = kind == AggregateKind::Tilde ? Axis::OverDays : Axis::OverCompanies;
  for (const auto& p : profiles) {
    if (p.semester != s) throw Error(ErrorKind::MixedSemesters, "profile semester " + std::to_string(p.semester) +
                                                                    " != " + std::to_string(s));
    if (p.axis != want)
      throw Error(ErrorKind::InvalidArgument, std::string(to_string(kind)) + " aggregation needs " + to_string(want) +
                                                  " profiles");
  }
  AggregatedProfile out;
  out.semester = s;
  out.kind = kind;
  average_field(profiles, &CumulantProfile::mean, out.mean, &out.contributing_count);
  average_field(profiles, &CumulantProfile::median, out.median, nullptr);
  average_field(profiles, &CumulantProfile::variance, out.variance, nullptr);
  average_field(profiles, &CumulantProfile::skewness, out.skewness, nullptr);
  average_field(profiles, &CumulantProfile::kurtosis, out.kurtosis, nullptr);
  return out;
}

}  // namespace detail

inline AggregatedProfile aggregate_tilde(const std::vector<CumulantProfile>& per_ticker, int s) {
  return detail::aggregate(per_ticker, s, AggregateKind::Tilde);
}

inline AggregatedProfile aggregate_hat(const std::vector<CumulantProfile>& per_day, int s) {
  return detail::aggregate(per_day, s, AggregateKind::Hat);
}

/// All non-excluded tickers of a semester with usable data, in ticker order.
inline std::vector<CumulantProfile> profiles_over_days(const MinutePanel& panel, const SemesterIndex& index, int s,
                                                       const CumulantOptions& opt = {}, unsigned jobs = 1) {
  std::vector<std::string> tickers;
  for (const auto& t : panel.companies())
    if (!index.excluded(t, s)) tickers.push_back(t);
  std::vector<std::optional<CumulantProfile>> slots(tickers.size());
  parallel_for(tickers.size(), jobs, [&](std::size_t i) {
    try {
      slots[i] = cumulants_over_days(panel, index, tickers[i], s, opt);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InsufficientSamples) throw;
    }
  });
  std::vector<CumulantProfile> out;
  for (auto& p : slots)
    if (p) out.push_back(std::move(*p));
  return out;
}

/// Cross-sections of every day of a semester with at least two companies somewhere, in date order.
inline std::vector<CumulantProfile> profiles_over_companies(const MinutePanel& panel, const SemesterIndex& index, int s,
                                                            const CumulantOptions& opt = {}, unsigned jobs = 1) {
  const auto days = index.days_in(s);
  std::vector<std::optional<CumulantProfile>> slots(days.size());
  parallel_for(days.size(), jobs, [&](std::size_t i) {
    try {
      slots[i] = cumulants_over_companies(panel, index, panel.days()[days[i]], s, opt);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InsufficientSamples) throw;
    }
  });
  std::vector<CumulantProfile> out;
  for (auto& p : slots)
    if (p) out.push_back(std::move(*p));
  return out;
}

inline MinuteSeries variance_ratio(const AggregatedProfile& tilde, const AggregatedProfile& hat) {
  if (tilde.semester != hat.semester)
    throw Error(ErrorKind::MixedSemesters, "variance ratio across semesters " + std::to_string(tilde.semester) +
                                               " and " + std::to_string(hat.semester));
  MinuteSeries out = empty_series();
  for (int t = kFirstMinute; t <= kLastMinute; ++t) {
    const auto& num = tilde.variance[t];
    const auto& den = hat.variance[t];
    if (num && den && *den != 0.0) out[t] = *num / *den;
  }
  return out;
}

struct KurtosisTail {
  int t_min = 60;
  std::set<int> excluded;
  std::map<int, Maybe> per_semester;  // time-average of kurtosis over t > t_min, every semester
  MinuteSeries curve = empty_series();  // per-minute average over non-excluded semesters
  std::vector<int> averaged_semesters;
};

inline KurtosisTail mean_kurtosis_tail(const std::map<int, AggregatedProfile>& hat_profiles, int t_min = 60,
                                       const std::set<int>& excluded = {11, 12, 13, 14, 15, 16}) {
  if (t_min < kFirstMinute - 1 || t_min >= kLastMinute)
    throw Error(ErrorKind::InvalidArgument, "t_min outside the session");
  KurtosisTail out;
  out.t_min = t_min;
  out.excluded = excluded;
  for (const auto& [s, prof] : hat_profiles) {
    double sum = 0.0;
    std::size_t n = 0;
    for (int t = t_min + 1; t <= kLastMinute; ++t)
      if (prof.kurtosis[t]) {
        sum += *prof.kurtosis[t];
        ++n;
      }
    out.per_semester[s] = n ? Maybe(sum / static_cast<double>(n)) : std::nullopt;
    if (!excluded.count(s)) out.averaged_semesters.push_back(s);
  }
  if (out.averaged_semesters.empty()) throw Error(ErrorKind::AllExcluded, "every semester is excluded");
  for (int t = kFirstMinute; t <= kLastMinute; ++t) {
    double sum = 0.0;
    std::size_t n = 0;
    for (int s : out.averaged_semesters) {
      const auto& k = hat_profiles.at(s).kurtosis[t];
      if (k) {
        sum += *k;
        ++n;
      }
    }
    if (n) out.curve[t] = sum / static_cast<double>(n);
  }
  return out;
}

}  // namespace intraday

#endif  // INTRADAY_CUMULANTS_HPP
