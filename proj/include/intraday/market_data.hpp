#ifndef INTRADAY_MARKET_DATA_HPP
#define INTRADAY_MARKET_DATA_HPP

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "intraday/common.hpp"

namespace intraday {

struct MinuteBar {
  std::string ticker;
  Date date;
  int minute = 0;
  double volume = 0.0;
  double open = 0.0, high = 0.0, low = 0.0, close = 0.0;
};

inline bool valid_bar(const MinuteBar& b) {
  if (b.minute < kFirstMinute || b.minute > kLastMinute) return false;
  if (!(b.volume >= 0.0)) return false;
  if (!(b.open > 0.0 && b.high > 0.0 && b.low > 0.0 && b.close > 0.0)) return false;
  return b.low <= std::min(b.open, b.close) && b.high >= std::max(b.open, b.close) && b.low <= b.high;
}

struct Ohlcv {
  double volume = 0.0;
  double open = 0.0, high = 0.0, low = 0.0, close = 0.0;
  friend bool operator==(const Ohlcv&, const Ohlcv&) = default;
};

/// Dense (company, day, minute) store. Immutable once built; share freely across readers.
class MinutePanel {
 public:
  MinutePanel() = default;

  std::size_t num_companies() const { return companies_.size(); }
  std::size_t num_days() const { return days_.size(); }
  const std::vector<std::string>& companies() const { return companies_; }
  const std::vector<Date>& days() const { return days_; }

  std::optional<std::size_t> company_index(std::string_view ticker) const {
    auto it = std::lower_bound(companies_.begin(), companies_.end(), ticker);
    if (it == companies_.end() || *it != ticker) return std::nullopt;
    return static_cast<std::size_t>(it - companies_.begin());
  }

  std::optional<std::size_t> day_index(const Date& d) const {
    auto it = std::lower_bound(days_.begin(), days_.end(), d);
    if (it == days_.end() || *it != d) return std::nullopt;
    return static_cast<std::size_t>(it - days_.begin());
  }

  bool present(std::size_t c, std::size_t d, int t) const { return present_[offset(c, d, t)] != 0; }

  /// Volume of a present cell; callers check present() first.
  double volume(std::size_t c, std::size_t d, int t) const { return cells_[offset(c, d, t)].volume; }

  std::optional<Ohlcv> cell(std::size_t c, std::size_t d, int t) const {
    auto k = offset(c, d, t);
    if (!present_[k]) return std::nullopt;
    return cells_[k];
  }

  std::size_t present_count() const {
    return static_cast<std::size_t>(std::count(present_.begin(), present_.end(), 1));
  }

  friend bool operator==(const MinutePanel& a, const MinutePanel& b) {
    if (a.companies_ != b.companies_ || a.days_ != b.days_ || a.present_ != b.present_) return false;
    for (std::size_t k = 0; k < a.cells_.size(); ++k)
      if (a.present_[k] && !(a.cells_[k] == b.cells_[k])) return false;
    return true;
  }

 private:
  friend class PanelBuilder;
  friend class DensePanelWriter;

  std::size_t offset(std::size_t c, std::size_t d, int t) const {
    return (c * days_.size() + d) * kSessionMinutes + static_cast<std::size_t>(t);
  }

  std::vector<std::string> companies_;
  std::vector<Date> days_;
  std::vector<Ohlcv> cells_;
  std::vector<std::uint8_t> present_;
};

/// Collects bars, then lays them out densely. Duplicated (ticker, date, minute) triples are rejected.
class PanelBuilder {
 public:
  void reserve(std::size_t n) { bars_.reserve(n); }

  void add(MinuteBar bar) {
    if (!valid_bar(bar))
      throw Error(ErrorKind::MalformedRow, "bar violates OHLCV invariants: " + bar.ticker + " " +
                                               format_date(bar.date) + " minute " + std::to_string(bar.minute));
    bars_.push_back(std::move(bar));
  }

  /// Declares a company/day on the axes even if it carries no bars.
  void add_company(std::string ticker) { extra_companies_.insert(std::move(ticker)); }
  void add_day(Date d) { extra_days_.insert(d); }

  MinutePanel build() && {
    std::set<std::string> tickers = std::move(extra_companies_);
    std::set<Date> dates = std::move(extra_days_);
    for (const auto& b : bars_) {
      tickers.insert(b.ticker);
      dates.insert(b.date);
    }
    MinutePanel p;
    p.companies_.assign(tickers.begin(), tickers.end());
    p.days_.assign(dates.begin(), dates.end());
    const std::size_t n = p.companies_.size() * p.days_.size() * kSessionMinutes;
    p.cells_.assign(n, Ohlcv{});
    p.present_.assign(n, 0);
    for (auto& b : bars_) {
      auto k = p.offset(*p.company_index(b.ticker), *p.day_index(b.date), b.minute);
      if (p.present_[k])
        throw Error(ErrorKind::DuplicateCell,
                    b.ticker + " " + format_date(b.date) + " minute " + std::to_string(b.minute));
      p.present_[k] = 1;
      p.cells_[k] = Ohlcv{b.volume, b.open, b.high, b.low, b.close};
    }
    bars_.clear();
    return p;
  }

 private:
  std::vector<MinuteBar> bars_;
  std::set<std::string> extra_companies_;
  std::set<Date> extra_days_;
};

/// Fills a panel whose axes are known up front (generators, converters). Cells start absent.
class DensePanelWriter {
 public:
  DensePanelWriter(std::vector<std::string> companies, std::vector<Date> days) {
    if (!std::is_sorted(companies.begin(), companies.end()) ||
        std::adjacent_find(companies.begin(), companies.end()) != companies.end())
      throw Error(ErrorKind::InvalidArgument, "company axis must be strictly sorted");
    if (!std::is_sorted(days.begin(), days.end()) || std::adjacent_find(days.begin(), days.end()) != days.end())
      throw Error(ErrorKind::InvalidArgument, "day axis must be strictly sorted");
    panel_.companies_ = std::move(companies);
    panel_.days_ = std::move(days);
    const std::size_t n = panel_.companies_.size() * panel_.days_.size() * kSessionMinutes;
    panel_.cells_.assign(n, Ohlcv{});
    panel_.present_.assign(n, 0);
  }

  void set(std::size_t c, std::size_t d, int t, const Ohlcv& cell) {
    MinuteBar probe{{}, {}, t, cell.volume, cell.open, cell.high, cell.low, cell.close};
    if (!valid_bar(probe)) throw Error(ErrorKind::MalformedRow, "cell violates OHLCV invariants");
    auto k = panel_.offset(c, d, t);
    panel_.cells_[k] = cell;
    panel_.present_[k] = 1;
  }

  MinutePanel finish() && { return std::move(panel_); }

 private:
  MinutePanel panel_;
};

// ---------------------------------------------------------------------------
// CSV ingestion

enum class TimeFormat { Clock, Index };

struct CsvSchema {
  std::string ticker = "ticker";
  std::string date = "date";
  std::string time = "time";
  std::string volume = "volume";
  std::string open = "open";
  std::string high = "high";
  std::string low = "low";
  std::string close = "close";
  TimeFormat time_format = TimeFormat::Clock;
};

struct LoadReport {
  std::size_t files = 0;
  std::size_t rows_read = 0;
  std::size_t rows_loaded = 0;
  std::size_t out_of_session = 0;
  std::size_t unparseable = 0;
  std::vector<std::string> rejected;  // first few rejected rows, for diagnostics
};

struct LoadResult {
  MinutePanel panel;
  LoadReport report;
};

/// "HH:MM" -> minutes since 09:30 (may be negative or > 390; the caller checks the session).
inline std::optional<int> parse_clock(std::string_view s) {
  auto colon = s.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  int h = 0, m = 0;
  auto hs = s.substr(0, colon);
  auto ms = s.substr(colon + 1, 2);
  auto r1 = std::from_chars(hs.data(), hs.data() + hs.size(), h);
  auto r2 = std::from_chars(ms.data(), ms.data() + ms.size(), m);
  if (r1.ec != std::errc() || r2.ec != std::errc() || ms.size() != 2 || h < 0 || h > 23 || m < 0 || m > 59)
    return std::nullopt;
  // tolerate trailing ":SS"
  if (s.size() > colon + 3 && s[colon + 3] != ':') return std::nullopt;
  return h * 60 + m - (9 * 60 + 30);
}

inline std::string format_clock(int minute) {
  int total = 9 * 60 + 30 + minute;
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d:%02d", total / 60, total % 60);
  return buf;
}

namespace detail {

inline void load_one_csv(const std::filesystem::path& path, const CsvSchema& schema, PanelBuilder& builder,
                         LoadReport& report) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::MalformedRow, path.string() + ": missing header row");
  auto header = split_csv_line(line);
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  auto require = [&](const std::string& name) {
    auto c = column(name);
    if (!c) throw Error(ErrorKind::MissingColumn, path.string() + ": no column '" + name + "'");
    return *c;
  };
  // one combined file carries a ticker column; per-ticker files take the ticker from the file name
  auto ticker_col = column(schema.ticker);
  const std::string file_ticker = path.stem().string();
  const auto date_col = require(schema.date), time_col = require(schema.time), vol_col = require(schema.volume),
             open_col = require(schema.open), high_col = require(schema.high), low_col = require(schema.low),
             close_col = require(schema.close);
  const std::size_t width = header.size();
  ++report.files;

  std::size_t line_no = 1;
  auto reject = [&](const std::string& why) {
    if (report.rejected.size() < 20)
      report.rejected.push_back(path.filename().string() + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++report.rows_read;
    auto f = split_csv_line(line);
    if (f.size() != width) throw Error(ErrorKind::MalformedRow, path.string() + ":" + std::to_string(line_no) +
                                                                    ": expected " + std::to_string(width) + " fields");
    auto date = parse_date(f[date_col]);
    std::optional<int> minute;
    if (schema.time_format == TimeFormat::Clock) {
      minute = parse_clock(f[time_col]);
    } else {
      int m = 0;
      const auto& ts = f[time_col];
      auto [p, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), m);
      if (ec == std::errc() && p == ts.data() + ts.size()) minute = m;
    }
    if (!date || !minute) {
      ++report.unparseable;
      reject("unparseable date/time");
      continue;
    }
    if (*minute < kFirstMinute || *minute > kLastMinute) {
      ++report.out_of_session;
      reject("out of session: " + f[time_col]);
      continue;
    }
    auto num = [&](std::size_t col) {
      auto v = parse_double(f[col]);
      if (!v)
        throw Error(ErrorKind::MalformedRow, path.string() + ":" + std::to_string(line_no) + ": non-numeric '" +
                                                 f[col] + "' in column '" + header[col] + "'");
      return *v;
    };
    MinuteBar bar;
    bar.ticker = ticker_col ? f[*ticker_col] : file_ticker;
    bar.date = *date;
    bar.minute = *minute;
    bar.volume = num(vol_col);
    bar.open = num(open_col);
    bar.high = num(high_col);
    bar.low = num(low_col);
    bar.close = num(close_col);
    if (bar.ticker.empty()) throw Error(ErrorKind::MalformedRow, path.string() + ":" + std::to_string(line_no) + ": empty ticker");
    builder.add(std::move(bar));
    ++report.rows_loaded;
  }
}

}  // namespace detail

namespace detail {

inline std::vector<std::filesystem::path> csv_files(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(ErrorKind::NoData, "no CSV files in " + path.string());
  } else if (fs::is_regular_file(path)) {
    files.push_back(path);
  } else {
    throw Error(ErrorKind::Io, "no such file or directory: " + path.string());
  }
  return files;
}

}  // namespace detail

/// Loads CSV files and directories of *.csv files (each directory read in name order) into one panel.
inline LoadResult load_minute_bars(const std::vector<std::filesystem::path>& paths, const CsvSchema& schema = {}) {
  if (paths.empty()) throw Error(ErrorKind::NoData, "no input paths");
  PanelBuilder builder;
  LoadReport report;
  for (const auto& p : paths)
    for (const auto& f : detail::csv_files(p)) detail::load_one_csv(f, schema, builder, report);
  if (report.rows_loaded == 0) throw Error(ErrorKind::NoData, "no in-session rows in the inputs");
  return {std::move(builder).build(), std::move(report)};
}

/// Loads one CSV file, or every *.csv file of a directory (sorted by name).
inline LoadResult load_minute_bars(const std::filesystem::path& path, const CsvSchema& schema = {}) {
  return load_minute_bars(std::vector<std::filesystem::path>{path}, schema);
}

/// Canonical combined layout: ticker,date,time,volume,open,high,low,close with clock times.
inline void write_canonical_csv(const MinutePanel& panel, std::ostream& os) {
  os << "ticker,date,time,volume,open,high,low,close\n";
  for (std::size_t c = 0; c < panel.num_companies(); ++c) {
    for (std::size_t d = 0; d < panel.num_days(); ++d) {
      const std::string date = format_date(panel.days()[d]);
      for (int t = kFirstMinute; t <= kLastMinute; ++t) {
        auto cell = panel.cell(c, d, t);
        if (!cell) continue;
        os << panel.companies()[c] << ',' << date << ',' << format_clock(t) << ',' << fmt_double(cell->volume) << ','
           << fmt_double(cell->open) << ',' << fmt_double(cell->high) << ',' << fmt_double(cell->low) << ','
           << fmt_double(cell->close) << '\n';
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Semesters

struct SemesterRange {
  int label = 0;
  Date first;
  Date last;
};

/// Calendar half-years (Jan 1 - Jun 30, Jul 1 - Dec 31), labelled from 1 at the first half of first_year.
inline std::vector<SemesterRange> default_semester_boundaries(int first_year, int last_year) {
  using namespace std::chrono;
  std::vector<SemesterRange> out;
  int label = 1;
  for (int y = first_year; y <= last_year; ++y) {
    out.push_back({label++, Date{year{y}, January, day{1}}, Date{year{y}, June, day{30}}});
    out.push_back({label++, Date{year{y}, July, day{1}}, Date{year{y}, December, day{31}}});
  }
  return out;
}

/// Calendar-day -> semester mapping plus per-semester ticker exclusions.
class SemesterIndex {
 public:
  SemesterIndex() = default;
  SemesterIndex(std::vector<SemesterRange> ranges, std::vector<int> day_labels)
      : ranges_(std::move(ranges)), day_labels_(std::move(day_labels)) {}

  const std::vector<SemesterRange>& ranges() const { return ranges_; }

  /// Labels of semesters that contain at least one panel day, ascending.
  std::vector<int> semesters() const {
    std::set<int> s(day_labels_.begin(), day_labels_.end());
    return {s.begin(), s.end()};
  }

  int semester_of(std::size_t day_idx) const { return day_labels_.at(day_idx); }

  std::vector<std::size_t> days_in(int s) const {
    std::vector<std::size_t> out;
    for (std::size_t d = 0; d < day_labels_.size(); ++d)
      if (day_labels_[d] == s) out.push_back(d);
    return out;
  }

  std::map<int, std::size_t> day_counts() const {
    std::map<int, std::size_t> out;
    for (int s : day_labels_) ++out[s];
    return out;
  }

  void exclude(const std::string& ticker, int s) { exclusions_[s].insert(ticker); }

  bool excluded(const std::string& ticker, int s) const {
    auto it = exclusions_.find(s);
    return it != exclusions_.end() && it->second.count(ticker) != 0;
  }

  const std::map<int, std::set<std::string>>& exclusions() const { return exclusions_; }

 private:
  std::vector<SemesterRange> ranges_;
  std::vector<int> day_labels_;
  std::map<int, std::set<std::string>> exclusions_;
};

/// Ranges must be sorted, contiguous, disjoint and labelled 1..S; every panel day must be covered.
inline SemesterIndex assign_semesters(const MinutePanel& panel, std::vector<SemesterRange> ranges) {
  if (ranges.empty()) throw Error(ErrorKind::InvalidArgument, "no semester ranges");
  std::sort(ranges.begin(), ranges.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    if (ranges[i].last < ranges[i].first)
      throw Error(ErrorKind::InvalidArgument, "semester range ends before it starts");
    if (ranges[i].label != static_cast<int>(i) + 1)
      throw Error(ErrorKind::InvalidArgument, "semester labels must run 1..S in date order");
    if (i > 0) {
      if (ranges[i].first <= ranges[i - 1].last)
        throw Error(ErrorKind::OverlappingRanges,
                    format_date(ranges[i - 1].last) + " overlaps " + format_date(ranges[i].first));
      if (add_days(ranges[i - 1].last, 1) != ranges[i].first)
        throw Error(ErrorKind::InvalidArgument, "gap between semesters after " + format_date(ranges[i - 1].last));
    }
  }
  std::vector<int> labels;
  labels.reserve(panel.num_days());
  for (const auto& d : panel.days()) {
    auto it = std::find_if(ranges.begin(), ranges.end(), [&](const auto& r) { return r.first <= d && d <= r.last; });
    if (it == ranges.end()) throw Error(ErrorKind::UncoveredDate, format_date(d));
    labels.push_back(it->label);
  }
  return SemesterIndex(std::move(ranges), std::move(labels));
}

/// Default half-year boundaries spanning the panel's years.
inline SemesterIndex assign_default_semesters(const MinutePanel& panel, std::optional<int> first_year = {}) {
  if (panel.num_days() == 0) throw Error(ErrorKind::NoData, "panel has no days");
  int y0 = first_year.value_or(static_cast<int>(panel.days().front().year()));
  int y1 = static_cast<int>(panel.days().back().year());
  return assign_semesters(panel, default_semester_boundaries(y0, std::max(y0, y1)));
}

// ---------------------------------------------------------------------------
// Validation

struct CoverageRecord {
  std::string ticker;
  int semester = 0;
  std::size_t semester_days = 0;
  std::size_t days_with_data = 0;
  double coverage = 0.0;  // present minutes / (semester_days * 391)
  bool included = false;
  std::string reason;
};

struct ValidationReport {
  double min_day_coverage = 0.0;
  std::vector<CoverageRecord> records;
};

inline ValidationReport validate_panel(const MinutePanel& panel, const SemesterIndex& index, double min_day_coverage) {
  ValidationReport rep;
  rep.min_day_coverage = min_day_coverage;
  for (int s : index.semesters()) {
    auto days = index.days_in(s);
    for (std::size_t c = 0; c < panel.num_companies(); ++c) {
      CoverageRecord r;
      r.ticker = panel.companies()[c];
      r.semester = s;
      r.semester_days = days.size();
      std::size_t present = 0;
      for (auto d : days) {
        std::size_t here = 0;
        for (int t = kFirstMinute; t <= kLastMinute; ++t) here += panel.present(c, d, t) ? 1 : 0;
        present += here;
        if (here > 0) ++r.days_with_data;
      }
      r.coverage = days.empty() ? 0.0 : static_cast<double>(present) / static_cast<double>(days.size() * kSessionMinutes);
      if (index.excluded(r.ticker, s)) {
        r.reason = "excluded by configuration";
      } else if (r.coverage < min_day_coverage) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "coverage %.4f below threshold %.4f", r.coverage, min_day_coverage);
        r.reason = buf;
      } else {
        r.included = true;
      }
      rep.records.push_back(std::move(r));
    }
  }
  return rep;
}

/// Copies the index and excludes every pair the report flagged.
inline SemesterIndex apply_validation(SemesterIndex index, const ValidationReport& report) {
  for (const auto& r : report.records)
    if (!r.included) index.exclude(r.ticker, r.semester);
  return index;
}

/// Number of non-excluded companies for a semester.
inline std::size_t included_companies(const MinutePanel& panel, const SemesterIndex& index, int s) {
  std::size_t n = 0;
  for (const auto& t : panel.companies()) n += index.excluded(t, s) ? 0 : 1;
  return n;
}

}  // namespace intraday

#endif  // INTRADAY_MARKET_DATA_HPP
