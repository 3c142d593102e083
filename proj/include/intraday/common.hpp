#ifndef INTRADAY_COMMON_HPP
#define INTRADAY_COMMON_HPP

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace intraday {

/// Session minutes run 0 (09:30) .. 390 (16:00) inclusive.
inline constexpr int kFirstMinute = 0;
inline constexpr int kLastMinute = 390;
inline constexpr int kSessionMinutes = 391;

/// A per-minute value that may be absent. Absent entries never carry a number.
using Maybe = std::optional<double>;
using MinuteSeries = std::vector<Maybe>;

inline MinuteSeries empty_series() { return MinuteSeries(kSessionMinutes); }

inline MinuteSeries to_series(const std::vector<double>& values) {
  MinuteSeries out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i];
  return out;
}

enum class ErrorKind {
  // data errors
  MissingColumn,
  MalformedRow,
  DuplicateCell,
  UncoveredDate,
  OverlappingRanges,
  NoData,
  InvalidSpec,
  InvalidArgument,
  EmptyInput,
  MixedSemesters,
  AllExcluded,
  OutOfSession,
  UnknownFigure,
  MissingUpstream,
  Io,
  // numerical failures
  InsufficientSamples,
  ZeroVariance,
  NonPositiveValue,
  WindowTooSmall,
  InsufficientSpan,
  RankDeficient,
  NoConvergence,
  DegenerateX,
  TooFewPoints,
  TooSmall,
  BothZeroVariance,
  NonPositiveExponent,
  NonPositivePrice,
  NegativeVariance,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::DuplicateCell: return "DuplicateCell";
    case ErrorKind::UncoveredDate: return "UncoveredDate";
    case ErrorKind::OverlappingRanges: return "OverlappingRanges";
    case ErrorKind::NoData: return "NoData";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::MixedSemesters: return "MixedSemesters";
    case ErrorKind::AllExcluded: return "AllExcluded";
    case ErrorKind::OutOfSession: return "OutOfSession";
    case ErrorKind::UnknownFigure: return "UnknownFigure";
    case ErrorKind::MissingUpstream: return "MissingUpstream";
    case ErrorKind::Io: return "Io";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::NonPositiveValue: return "NonPositiveValue";
    case ErrorKind::WindowTooSmall: return "WindowTooSmall";
    case ErrorKind::InsufficientSpan: return "InsufficientSpan";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::DegenerateX: return "DegenerateX";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::TooSmall: return "TooSmall";
    case ErrorKind::BothZeroVariance: return "BothZeroVariance";
    case ErrorKind::NonPositiveExponent: return "NonPositiveExponent";
    case ErrorKind::NonPositivePrice: return "NonPositivePrice";
    case ErrorKind::NegativeVariance: return "NegativeVariance";
  }
  return "Unknown";
}

/// Numerical failures map to CLI exit code 3, everything else to 2.
inline bool is_numerical(ErrorKind k) { return k >= ErrorKind::InsufficientSamples; }

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// ---------------------------------------------------------------------------
// Calendar dates

using Date = std::chrono::year_month_day;

inline std::optional<Date> parse_date(std::string_view s) {
  // YYYY-MM-DD
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0, d = 0;
  auto ok = [](std::string_view part, auto& out) {
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    return ec == std::errc() && p == part.data() + part.size();
  };
  if (!ok(s.substr(0, 4), y) || !ok(s.substr(5, 2), m) || !ok(s.substr(8, 2), d)) return std::nullopt;
  Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) return std::nullopt;
  return date;
}

inline std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

inline Date add_days(const Date& d, int n) {
  return Date{std::chrono::sys_days{d} + std::chrono::days{n}};
}

inline bool is_weekday(const Date& d) {
  std::chrono::weekday wd{std::chrono::sys_days{d}};
  return wd != std::chrono::Saturday && wd != std::chrono::Sunday;
}

// ---------------------------------------------------------------------------
// Text formatting

/// 17 significant digits: enough for an exact double round trip.
inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_maybe(const Maybe& v) { return v ? fmt_double(*v) : std::string(); }

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  // from_chars for double is available in libstdc++ >= 11
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace intraday

#endif  // INTRADAY_COMMON_HPP
