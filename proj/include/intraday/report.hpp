#ifndef INTRADAY_REPORT_HPP
#define INTRADAY_REPORT_HPP

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "intraday/io.hpp"
#include "intraday/parallel.hpp"

namespace intraday {

// ---------------------------------------------------------------------------
// Configuration

struct PipelineConfig {
  std::vector<std::filesystem::path> inputs;
  CsvSchema schema;
  std::vector<SemesterRange> semesters;  // empty: calendar half-years
  std::optional<int> first_year;         // first year of the default boundaries
  FitWindows windows;
  std::map<int, std::set<std::string>> exclusions;  // semester -> tickers
  double min_day_coverage = 0.5;
  int tail_t_min = 60;
  std::set<int> tail_excluded{11, 12, 13, 14, 15, 16};
  int regime_boundary = 10;  // first semester of the second group
  double confidence = 0.95;
  Tails tails = Tails::Two;
  CumulantOptions cumulants;
  MetricsOptions metrics;
  NonlinearOptions nonlinear;
  std::filesystem::path output_dir;
  unsigned jobs = 1;
};

inline ReturnConvention parse_return_convention(const std::string& s) {
  if (s == "closing-denominator") return ReturnConvention::ClosingDenominator;
  if (s == "open-denominator") return ReturnConvention::OpenDenominator;
  throw Error(ErrorKind::InvalidArgument, "unknown return convention " + s);
}

inline const char* to_string(ReturnConvention c) {
  return c == ReturnConvention::ClosingDenominator ? "closing-denominator" : "open-denominator";
}

inline TimeFormat parse_time_format(const std::string& s) {
  if (s == "clock") return TimeFormat::Clock;
  if (s == "index") return TimeFormat::Index;
  throw Error(ErrorKind::InvalidArgument, "unknown time format " + s);
}

inline KurtosisReading parse_kurtosis_reading(const std::string& s) {
  if (s == "mad") return KurtosisReading::MeanAbsoluteDeviation;
  if (s == "literal") return KurtosisReading::Literal;
  throw Error(ErrorKind::InvalidArgument, "unknown kurtosis reading " + s);
}

namespace detail {

inline Window window_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorKind::InvalidArgument, "window must be [lo, hi]");
  Window w{j[0].get<int>(), j[1].get<int>()};
  check_window(w);
  return w;
}

inline json window_json(const Window& w) { return {w.lo, w.hi}; }

}  // namespace detail

/// Everything that can change the outputs. Jobs and the output directory are left out, so
/// the hash (and the bundle) does not depend on them.
inline json canonical_json(const PipelineConfig& c) {
  json j;
  json in = json::array();
  for (const auto& p : c.inputs) in.push_back(p.generic_string());
  j["inputs"] = in;
  j["schema"] = {{"ticker", c.schema.ticker}, {"date", c.schema.date},   {"time", c.schema.time},
                 {"volume", c.schema.volume}, {"open", c.schema.open},   {"high", c.schema.high},
                 {"low", c.schema.low},       {"close", c.schema.close},
                 {"time_format", c.schema.time_format == TimeFormat::Clock ? "clock" : "index"}};
  json sem = json::array();
  for (const auto& r : c.semesters)
    sem.push_back({{"label", r.label}, {"first", format_date(r.first)}, {"last", format_date(r.last)}});
  j["semesters"] = sem;
  j["first_year"] = c.first_year ? json(*c.first_year) : json(nullptr);
  j["windows"] = {{"opening", detail::window_json(c.windows.opening)},
                  {"closing", detail::window_json(c.windows.closing)},
                  {"kurtosis_morning", detail::window_json(c.windows.kurtosis_morning)},
                  {"kurtosis_afternoon", detail::window_json(c.windows.kurtosis_afternoon)},
                  {"opening_time_offset", num(c.windows.opening_time_offset)}};
  json ex = json::object();
  for (const auto& [s, tickers] : c.exclusions) ex[std::to_string(s)] = std::vector<std::string>(tickers.begin(), tickers.end());
  j["exclusions"] = ex;
  j["min_day_coverage"] = num(c.min_day_coverage);
  j["kurtosis_tail"] = {{"t_min", c.tail_t_min},
                        {"excluded_semesters", std::vector<int>(c.tail_excluded.begin(), c.tail_excluded.end())}};
  j["regime_boundary"] = c.regime_boundary;
  j["confidence"] = num(c.confidence);
  j["tails"] = to_string(c.tails);
  j["kurtosis_reading"] = c.cumulants.kurtosis_reading == KurtosisReading::Literal ? "literal" : "mad";
  j["return_convention"] = to_string(c.metrics.return_convention);
  j["trading_days_per_year"] = num(c.metrics.trading_days_per_year);
  return j;
}

inline PipelineConfig config_from_json(const json& j, const std::filesystem::path& base = {}) {
  PipelineConfig c;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
  };
  if (j.contains("inputs")) {
    if (j["inputs"].is_string()) c.inputs.push_back(resolve(j["inputs"].get<std::string>()));
    else
      for (const auto& p : j["inputs"]) c.inputs.push_back(resolve(p.get<std::string>()));
  }
  if (j.contains("schema")) {
    const auto& s = j["schema"];
    c.schema.ticker = s.value("ticker", c.schema.ticker);
    c.schema.date = s.value("date", c.schema.date);
    c.schema.time = s.value("time", c.schema.time);
    c.schema.volume = s.value("volume", c.schema.volume);
    c.schema.open = s.value("open", c.schema.open);
    c.schema.high = s.value("high", c.schema.high);
    c.schema.low = s.value("low", c.schema.low);
    c.schema.close = s.value("close", c.schema.close);
    if (s.contains("time_format")) c.schema.time_format = parse_time_format(s["time_format"].get<std::string>());
  }
  if (j.contains("semesters"))
    for (const auto& r : j["semesters"]) {
      auto first = parse_date(r.at("first").get<std::string>());
      auto last = parse_date(r.at("last").get<std::string>());
      if (!first || !last) throw Error(ErrorKind::InvalidArgument, "semester dates must be YYYY-MM-DD");
      c.semesters.push_back({r.at("label").get<int>(), *first, *last});
    }
  if (j.contains("first_year") && !j["first_year"].is_null()) c.first_year = j["first_year"].get<int>();
  if (j.contains("windows")) {
    const auto& w = j["windows"];
    if (w.contains("opening")) c.windows.opening = detail::window_from_json(w["opening"]);
    if (w.contains("closing")) c.windows.closing = detail::window_from_json(w["closing"]);
    if (w.contains("kurtosis_morning")) c.windows.kurtosis_morning = detail::window_from_json(w["kurtosis_morning"]);
    if (w.contains("kurtosis_afternoon"))
      c.windows.kurtosis_afternoon = detail::window_from_json(w["kurtosis_afternoon"]);
    c.windows.opening_time_offset = w.value("opening_time_offset", c.windows.opening_time_offset);
  }
  if (j.contains("exclusions"))
    for (const auto& [k, v] : j["exclusions"].items())
      for (const auto& t : v) c.exclusions[std::stoi(k)].insert(t.get<std::string>());
  c.min_day_coverage = j.value("min_day_coverage", c.min_day_coverage);
  if (j.contains("kurtosis_tail")) {
    const auto& k = j["kurtosis_tail"];
    c.tail_t_min = k.value("t_min", c.tail_t_min);
    if (k.contains("excluded_semesters")) {
      c.tail_excluded.clear();
      for (const auto& s : k["excluded_semesters"]) c.tail_excluded.insert(s.get<int>());
    }
  }
  c.regime_boundary = j.value("regime_boundary", c.regime_boundary);
  c.confidence = j.value("confidence", c.confidence);
  if (j.contains("tails")) c.tails = j["tails"].get<std::string>() == "one" ? Tails::One : Tails::Two;
  if (j.contains("kurtosis_reading"))
    c.cumulants.kurtosis_reading = parse_kurtosis_reading(j["kurtosis_reading"].get<std::string>());
  if (j.contains("return_convention"))
    c.metrics.return_convention = parse_return_convention(j["return_convention"].get<std::string>());
  c.metrics.trading_days_per_year = j.value("trading_days_per_year", c.metrics.trading_days_per_year);
  if (j.contains("output_dir")) c.output_dir = resolve(j["output_dir"].get<std::string>());
  c.jobs = j.value("jobs", c.jobs);
  if (!(c.confidence > 0.0 && c.confidence < 1.0)) throw Error(ErrorKind::InvalidArgument, "confidence must lie in (0, 1)");
  if (c.min_day_coverage < 0.0 || c.min_day_coverage > 1.0)
    throw Error(ErrorKind::InvalidArgument, "min_day_coverage must lie in [0, 1]");
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Hashing

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::Io, "SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bundle

struct TickerSemesterResult {
  std::string ticker;
  int semester = 0;
  std::optional<FitResult> opening, closing, quartic;
  std::optional<ShapeFunctionals> shape;
  std::optional<SemesterMetrics> metrics;
};

struct SemesterResult {
  int semester = 0;
  std::optional<AggregatedProfile> tilde, hat;
  MinuteSeries variance_ratio = empty_series();
  std::map<std::string, FitResult> fits;  // label -> fit, labels in fit_labels order
  std::optional<ShapeFunctionals> shape_mean, shape_variance_tilde, shape_variance_hat;
  std::size_t companies = 0;
};

struct ReportBundle {
  json config;  // canonical
  std::string config_hash;
  ValidationReport validation;
  std::vector<int> semesters;
  std::map<int, SemesterResult> per_semester;
  std::vector<TickerSemesterResult> per_ticker;  // ticker-major, then semester
  std::map<std::string, FitResult> concavity_activity;
  std::optional<KurtosisTail> tail;
  std::optional<TestResult> welch, mww;
  std::vector<int> test_groups[2];
  int regime_boundary = 10;
  std::vector<std::string> failures;
  std::map<std::string, int> normalizers;  // figure -> semester used to normalize
  std::map<std::string, std::string> files;  // relative path -> content
};

inline const std::vector<std::string>& figure_ids() {
  static const std::vector<std::string> ids = {"fig1",  "fig2",  "fig3",  "fig4",  "fig5",  "fig6",
                                               "fig7",  "fig8",  "fig9",  "fig10", "fig11", "fig12",
                                               "fig13", "fig14", "fig15", "fig16"};
  return ids;
}

namespace detail {

inline std::string failure(const std::string& where, const Error& e) { return where + ": " + e.what(); }

template <typename Fn>
void attempt(std::vector<std::string>& failures, const std::string& where, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    failures.push_back(failure(where, e));
  }
}

inline MinuteSeries time_axis() {
  MinuteSeries x = empty_series();
  for (int t = kFirstMinute; t <= kLastMinute; ++t) x[t] = t;
  return x;
}

inline std::string semester_tag(int s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%02d", s);
  return buf;
}

inline void fit_row(std::ostream& os, const std::string& scope, const std::string& ticker, const std::string& semester,
                    const std::string& label, const FitResult& f) {
  os << scope << ',' << ticker << ',' << semester << ',' << label << ',' << to_string(f.model) << ',';
  if (f.window) os << f.window->lo << ',' << f.window->hi;
  else os << ',';
  os << ',' << f.n_points << ',' << fmt_double(f.r) << ',' << fmt_double(f.rss);
  for (std::size_t i = 0; i < 5; ++i) {
    if (i < f.names.size()) os << ',' << f.names[i] << ',' << fmt_double(f.coefficients[i]) << ',' << fmt_double(f.standard_errors[i]);
    else os << ",,,";
  }
  os << '\n';
}

inline std::string fits_header() {
  std::string h = "scope,ticker,semester,label,model,window_lo,window_hi,n_points,r,rss";
  for (int i = 0; i < 5; ++i) {
    auto k = std::to_string(i);
    h += ",name" + k + ",value" + k + ",se" + k;
  }
  return h + "\n";
}

}  // namespace detail

/// Semester-level fit labels in output order.
inline const std::vector<std::string>& fit_labels() {
  static const std::vector<std::string> labels = {
      "opening",  "closing", "quartic", "variance_quartic_tilde", "variance_quartic_hat", "kurtosis_morning",
      "kurtosis_afternoon", "variance_vs_mean_morning", "variance_vs_mean_afternoon", "skewness_vs_time_morning",
      "skewness_vs_time_afternoon", "kurtosis_vs_mean_tilde_morning", "kurtosis_vs_mean_tilde_afternoon",
      "kurtosis_vs_mean_hat_morning", "kurtosis_vs_mean_hat_afternoon"};
  return labels;
}

// ---------------------------------------------------------------------------
// Figure series

namespace detail {

inline const FitResult* semester_fit(const ReportBundle& b, int s, const std::string& label) {
  auto it = b.per_semester.find(s);
  if (it == b.per_semester.end()) return nullptr;
  auto f = it->second.fits.find(label);
  return f == it->second.fits.end() ? nullptr : &f->second;
}

inline std::string long_series(const ReportBundle& b, const char* column,
                               const std::function<const MinuteSeries*(const SemesterResult&)>& pick) {
  std::ostringstream os;
  os << "semester,t," << column << '\n';
  bool any = false;
  for (int s : b.semesters) {
    const auto* series = pick(b.per_semester.at(s));
    if (!series) continue;
    for (int t = kFirstMinute; t <= kLastMinute; ++t)
      if ((*series)[t]) {
        os << s << ',' << t << ',' << fmt_double(*(*series)[t]) << '\n';
        any = true;
      }
  }
  if (!any) throw Error(ErrorKind::MissingUpstream, std::string("no ") + column + " profiles in the bundle");
  return os.str();
}

struct MeanSd {
  std::size_t n = 0;
  double mean = 0.0, sd = 0.0;
};

inline MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd m;
  m.n = v.size();
  if (v.empty()) return m;
  auto s = summarize(v);
  m.mean = s.mean;
  m.sd = std::sqrt(s.variance);
  return m;
}

/// Semester series divided by the earliest available value; the normalizer is recorded.
inline std::string normalized_series(ReportBundle& b, const std::string& fig, const std::vector<std::string>& columns,
                                     const std::vector<std::map<int, double>>& values) {
  std::ostringstream os;
  os << "semester";
  for (const auto& c : columns) os << ',' << c << ',' << c << "_normalized";
  os << '\n';
  std::optional<int> norm;
  for (int s : b.semesters) {
    bool all = true;
    for (const auto& v : values) all = all && v.count(s);
    if (all) {
      norm = s;
      break;
    }
  }
  if (!norm) throw Error(ErrorKind::MissingUpstream, fig + ": no semester carries every series");
  b.normalizers[fig] = *norm;
  for (int s : b.semesters) {
    bool all = true;
    for (const auto& v : values) all = all && v.count(s);
    if (!all) continue;
    os << s;
    for (const auto& v : values) {
      const double base = v.at(*norm);
      os << ',' << fmt_double(v.at(s)) << ',' << (base != 0.0 ? fmt_double(v.at(s) / std::fabs(base)) : std::string());
    }
    os << '\n';
  }
  return os.str();
}

inline std::string scatter_fit_rows(const ReportBundle& b, const std::string& stem) {
  std::ostringstream os;
  os << "semester,split,n_points,r,c0,c0_se,c1,c1_se,c2,c2_se\n";
  bool any = false;
  for (int s : b.semesters)
    for (const char* split : {"morning", "afternoon"}) {
      const auto* f = semester_fit(b, s, stem + "_" + split);
      if (!f) continue;
      any = true;
      os << s << ',' << split << ',' << f->n_points << ',' << fmt_double(f->r);
      for (std::size_t i = 0; i < 3; ++i) {
        if (i < f->coefficients.size()) os << ',' << fmt_double(f->coefficients[i]) << ',' << fmt_double(f->standard_errors[i]);
        else os << ",,";
      }
      os << '\n';
    }
  if (!any) throw Error(ErrorKind::MissingUpstream, "no " + stem + " fits in the bundle");
  return os.str();
}

}  // namespace detail

/// Plot-ready CSV for one figure id. Normalized figures record their normalizer in the bundle.
inline std::string emit_figure_series(ReportBundle& b, const std::string& id) {
  using namespace detail;
  if (id == "fig1") return long_series(b, "mean", [](const SemesterResult& r) { return r.tilde ? &r.tilde->mean : nullptr; });
  if (id == "fig7")
    return long_series(b, "variance", [](const SemesterResult& r) { return r.tilde ? &r.tilde->variance : nullptr; });
  if (id == "fig9")
    return long_series(b, "skewness", [](const SemesterResult& r) { return r.tilde ? &r.tilde->skewness : nullptr; });
  if (id == "fig10")
    return long_series(b, "kurtosis", [](const SemesterResult& r) { return r.tilde ? &r.tilde->kurtosis : nullptr; });
  if (id == "fig2") {
    std::vector<double> groups[2];
    std::map<int, const FitResult*> fits;
    for (int s : b.semesters)
      if (const auto* f = semester_fit(b, s, "opening")) {
        fits[s] = f;
        groups[s >= b.regime_boundary ? 1 : 0].push_back(f->coefficient("exponent"));
      }
    if (fits.empty()) throw Error(ErrorKind::MissingUpstream, "fig2: no opening fits in the bundle");
    const auto m0 = mean_sd(groups[0]), m1 = mean_sd(groups[1]);
    std::ostringstream os;
    os << "semester,alpha,alpha_se,r,branch,branch_mean\n";
    for (const auto& [s, f] : fits) {
      const bool late = s >= b.regime_boundary;
      os << s << ',' << fmt_double(f->coefficient("exponent")) << ',' << fmt_double(f->standard_error("exponent")) << ','
         << fmt_double(f->r) << ',' << (late ? "after" : "before") << ',' << fmt_double(late ? m1.mean : m0.mean) << '\n';
    }
    return os.str();
  }
  if (id == "fig3") {
    std::ostringstream os;
    os << "semester,alpha_close_mean,alpha_close_sd,companies,alpha_close_of_mean_profile\n";
    bool any = false;
    for (int s : b.semesters) {
      std::vector<double> v;
      for (const auto& r : b.per_ticker)
        if (r.semester == s && r.closing) v.push_back(r.closing->coefficient("exponent"));
      const auto* f = semester_fit(b, s, "closing");
      if (v.empty() && !f) continue;
      any = true;
      const auto m = mean_sd(v);
      os << s << ',' << (m.n ? fmt_double(m.mean) : "") << ',' << (m.n ? fmt_double(m.sd) : "") << ',' << m.n << ','
         << (f ? fmt_double(f->coefficient("exponent")) : "") << '\n';
    }
    if (!any) throw Error(ErrorKind::MissingUpstream, "fig3: no closing fits in the bundle");
    return os.str();
  }
  if (id == "fig4" || id == "fig5") {
    std::map<int, double> avg;
    for (int s : b.semesters) {
      std::vector<double> v;
      for (const auto& r : b.per_ticker)
        if (r.semester == s && r.shape) v.push_back(id == "fig4" ? r.shape->concavity : r.shape->symmetry);
      if (!v.empty()) avg[s] = mean_sd(v).mean;
    }
    return normalized_series(b, id, {id == "fig4" ? "concavity_mean" : "symmetry_mean"}, {avg});
  }
  if (id == "fig6") {
    std::ostringstream os;
    os << "ticker,semester,activity,rescaled_activity,concavity\n";
    bool any = false;
    for (const auto& r : b.per_ticker)
      if (r.metrics && r.metrics->concavity) {
        any = true;
        os << r.ticker << ',' << r.semester << ',' << fmt_double(r.metrics->activity) << ','
           << fmt_double(r.metrics->rescaled_activity) << ',' << fmt_double(*r.metrics->concavity) << '\n';
      }
    if (!any) throw Error(ErrorKind::MissingUpstream, "fig6: no per-ticker metrics in the bundle");
    return os.str();
  }
  if (id == "fig8") return scatter_fit_rows(b, "variance_vs_mean");
  if (id == "fig11") {
    std::ostringstream os;
    os << "semester,beta_morning,beta_morning_se,beta_afternoon,beta_afternoon_se,A,B\n";
    bool any = false;
    for (int s : b.semesters) {
      const auto* m = semester_fit(b, s, "kurtosis_morning");
      const auto* a = semester_fit(b, s, "kurtosis_afternoon");
      if (!m && !a) continue;
      any = true;
      os << s << ',' << (m ? fmt_double(m->coefficient("exponent")) : "") << ','
         << (m ? fmt_double(m->standard_error("exponent")) : "") << ','
         << (a ? fmt_double(a->coefficient("beta_a")) : "") << ',' << (a ? fmt_double(a->standard_error("beta_a")) : "")
         << ',' << (a ? fmt_double(a->coefficient("A")) : "") << ',' << (a ? fmt_double(a->coefficient("B")) : "")
         << '\n';
    }
    if (!any) throw Error(ErrorKind::MissingUpstream, "fig11: no kurtosis fits in the bundle");
    return os.str();
  }
  if (id == "fig12") return scatter_fit_rows(b, "kurtosis_vs_mean_hat");
  if (id == "fig13") {
    std::ostringstream os;
    os << "semester,t,variance_hat,variance_tilde,ratio\n";
    bool any = false;
    for (int s : b.semesters) {
      const auto& r = b.per_semester.at(s);
      if (!r.hat || !r.tilde) continue;
      for (int t = kFirstMinute; t <= kLastMinute; ++t) {
        if (!r.hat->variance[t] && !r.tilde->variance[t]) continue;
        any = true;
        os << s << ',' << t << ',' << fmt_maybe(r.hat->variance[t]) << ',' << fmt_maybe(r.tilde->variance[t]) << ','
           << fmt_maybe(r.variance_ratio[t]) << '\n';
      }
    }
    if (!any) throw Error(ErrorKind::MissingUpstream, "fig13: no variance profiles in the bundle");
    return os.str();
  }
  if (id == "fig14") {
    std::map<int, double> ch, ct, sh, st;
    for (int s : b.semesters) {
      const auto& r = b.per_semester.at(s);
      if (r.shape_variance_hat) {
        ch[s] = r.shape_variance_hat->concavity;
        sh[s] = r.shape_variance_hat->symmetry;
      }
      if (r.shape_variance_tilde) {
        ct[s] = r.shape_variance_tilde->concavity;
        st[s] = r.shape_variance_tilde->symmetry;
      }
    }
    return normalized_series(b, id, {"concavity_hat", "concavity_tilde", "symmetry_hat", "symmetry_tilde"},
                             {ch, ct, sh, st});
  }
  if (id == "fig15") {
    if (!b.tail) throw Error(ErrorKind::MissingUpstream, "fig15: no kurtosis tail in the bundle");
    std::ostringstream os;
    os << "semester,kurtosis_tail_mean,excluded\n";
    for (const auto& [s, v] : b.tail->per_semester)
      os << s << ',' << fmt_maybe(v) << ',' << (b.tail->excluded.count(s) ? 1 : 0) << '\n';
    return os.str();
  }
  if (id == "fig16") {
    if (!b.tail) throw Error(ErrorKind::MissingUpstream, "fig16: no kurtosis tail in the bundle");
    std::ostringstream os;
    os << "t,kurtosis\n";
    for (int t = kFirstMinute; t <= kLastMinute; ++t)
      if (b.tail->curve[t]) os << t << ',' << fmt_double(*b.tail->curve[t]) << '\n';
    return os.str();
  }
  throw Error(ErrorKind::UnknownFigure, id);
}

// ---------------------------------------------------------------------------
// Pipeline

namespace detail {

inline void semester_stage(const MinutePanel& panel, const SemesterIndex& index, const PipelineConfig& cfg,
                           const std::vector<CumulantProfile>& per_ticker_profiles, SemesterResult& out,
                           std::vector<std::string>& failures) {
  const int s = out.semester;
  const std::string where = "semester " + std::to_string(s);
  out.companies = included_companies(panel, index, s);
  attempt(failures, where + " tilde", [&] { out.tilde = aggregate_tilde(per_ticker_profiles, s); });
  attempt(failures, where + " hat", [&] {
    out.hat = aggregate_hat(profiles_over_companies(panel, index, s, cfg.cumulants), s);
  });
  auto fit = [&](const std::string& label, auto&& fn) {
    attempt(failures, where + " " + label, [&] { out.fits.emplace(label, fn()); });
  };
  if (out.tilde) {
    const auto& p = *out.tilde;
    fit("opening", [&] { return fit_opening_powerlaw(p.mean, cfg.windows.opening, cfg.windows.opening_time_offset); });
    fit("closing", [&] { return fit_closing_powerlaw(p.mean, cfg.windows.closing); });
    fit("quartic", [&] { return fit_quartic(p.mean); });
    fit("variance_quartic_tilde", [&] { return fit_quartic(p.variance); });
    fit("kurtosis_morning", [&] { return fit_kurtosis_morning(p.kurtosis, cfg.windows.kurtosis_morning); });
    fit("kurtosis_afternoon",
        [&] { return fit_kurtosis_afternoon(p.kurtosis, cfg.windows.kurtosis_afternoon, cfg.nonlinear); });
    const auto time = time_axis();
    for (auto [split, name] : {std::pair{SessionSplit::Morning, "morning"}, std::pair{SessionSplit::Afternoon, "afternoon"}}) {
      const std::string tag(name);
      fit("variance_vs_mean_" + tag, [&] { return scatter_relation(p.mean, p.variance, split, 2); });
      fit("skewness_vs_time_" + tag, [&] { return scatter_relation(time, p.skewness, split, 1); });
      fit("kurtosis_vs_mean_tilde_" + tag, [&] { return scatter_relation(p.mean, p.kurtosis, split, 2); });
    }
  }
  if (out.hat) {
    const auto& h = *out.hat;
    fit("variance_quartic_hat", [&] { return fit_quartic(h.variance); });
    for (auto [split, name] : {std::pair{SessionSplit::Morning, "morning"}, std::pair{SessionSplit::Afternoon, "afternoon"}})
      fit("kurtosis_vs_mean_hat_" + std::string(name), [&] { return scatter_relation(h.mean, h.kurtosis, split, 2); });
  }
  if (out.tilde && out.hat) out.variance_ratio = variance_ratio(*out.tilde, *out.hat);
  if (auto it = out.fits.find("quartic"); it != out.fits.end()) out.shape_mean = shape_functionals(it->second);
  if (auto it = out.fits.find("variance_quartic_tilde"); it != out.fits.end())
    out.shape_variance_tilde = shape_functionals(it->second);
  if (auto it = out.fits.find("variance_quartic_hat"); it != out.fits.end())
    out.shape_variance_hat = shape_functionals(it->second);
}

inline void assemble_files(ReportBundle& b, const CumulantOptions& copt) {
  auto& files = b.files;
  files["validation.json"] = dump(to_json(b.validation));
  for (int s : b.semesters) {
    const auto& r = b.per_semester.at(s);
    const auto tag = semester_tag(s);
    if (r.tilde) {
      files["profiles/tilde_" + tag + ".csv"] = profile_csv(*r.tilde);
      files["profiles/tilde_" + tag + ".json"] = dump(to_json(*r.tilde, copt));
    }
    if (r.hat) {
      files["profiles/hat_" + tag + ".csv"] = profile_csv(*r.hat);
      files["profiles/hat_" + tag + ".json"] = dump(to_json(*r.hat, copt));
    }
  }

  std::ostringstream fits_csv;
  fits_csv << fits_header();
  json fits_json;
  json sem_fits = json::array();
  for (int s : b.semesters) {
    const auto& r = b.per_semester.at(s);
    json e = {{"semester", s}, {"companies", r.companies}};
    json fj = json::object();
    for (const auto& label : fit_labels()) {
      auto it = r.fits.find(label);
      if (it == r.fits.end()) continue;
      fit_row(fits_csv, "semester", "", std::to_string(s), label, it->second);
      fj[label] = to_json(it->second);
    }
    e["fits"] = fj;
    if (r.shape_mean) e["shape_mean"] = to_json(*r.shape_mean);
    if (r.shape_variance_tilde) e["shape_variance_tilde"] = to_json(*r.shape_variance_tilde);
    if (r.shape_variance_hat) e["shape_variance_hat"] = to_json(*r.shape_variance_hat);
    sem_fits.push_back(e);
  }
  json tick_fits = json::array();
  for (const auto& r : b.per_ticker) {
    json e = {{"ticker", r.ticker}, {"semester", r.semester}};
    auto put = [&](const char* label, const std::optional<FitResult>& f) {
      if (!f) return;
      fit_row(fits_csv, "ticker", r.ticker, std::to_string(r.semester), label, *f);
      e[label] = to_json(*f);
    };
    put("opening", r.opening);
    put("closing", r.closing);
    put("quartic", r.quartic);
    if (r.shape) e["shape"] = to_json(*r.shape);
    tick_fits.push_back(e);
  }
  json reg = json::object();
  for (const auto& [ticker, f] : b.concavity_activity) {
    fit_row(fits_csv, "ticker", ticker, "", "concavity_vs_activity", f);
    reg[ticker] = to_json(f);
  }
  fits_json["semesters"] = sem_fits;
  fits_json["tickers"] = tick_fits;
  fits_json["concavity_vs_activity"] = reg;
  files["fits.csv"] = fits_csv.str();
  files["fits.json"] = dump(fits_json);

  std::vector<SemesterMetrics> rows;
  for (const auto& r : b.per_ticker)
    if (r.metrics) rows.push_back(*r.metrics);
  files["metrics.csv"] = metrics_csv(rows);

  std::ostringstream vr;
  vr << "semester,t,ratio\n";
  for (int s : b.semesters)
    for (int t = kFirstMinute; t <= kLastMinute; ++t)
      if (const auto& v = b.per_semester.at(s).variance_ratio[t]) vr << s << ',' << t << ',' << fmt_double(*v) << '\n';
  files["variance_ratio.csv"] = vr.str();

  if (b.tail) {
    json per = json::object();
    for (const auto& [s, v] : b.tail->per_semester) per[std::to_string(s)] = num(v);
    files["kurtosis_tail.json"] = dump({{"t_min", b.tail->t_min},
                                        {"excluded_semesters", std::vector<int>(b.tail->excluded.begin(), b.tail->excluded.end())},
                                        {"averaged_semesters", b.tail->averaged_semesters},
                                        {"per_semester", per},
                                        {"curve", series_json(b.tail->curve)}});
  }

  json tests;
  tests["series"] = "opening exponent of the tilde mean profile";
  tests["regime_boundary"] = b.regime_boundary;
  tests["groups"] = {b.test_groups[0], b.test_groups[1]};
  tests["welch"] = b.welch ? to_json(*b.welch) : json(nullptr);
  tests["mww"] = b.mww ? to_json(*b.mww) : json(nullptr);
  files["tests.json"] = dump(tests);

  for (const auto& id : figure_ids()) {
    try {
      files["figures/" + id + ".csv"] = emit_figure_series(b, id);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::MissingUpstream) throw;
      b.failures.push_back(failure(id, e));
    }
  }

  json manifest;
  manifest["config_hash"] = b.config_hash;
  manifest["config"] = b.config;
  manifest["semesters"] = b.semesters;
  json norm = json::object();
  for (const auto& [fig, s] : b.normalizers) norm[fig] = s;
  manifest["normalizers"] = norm;
  manifest["conventions"] = {{"symmetry_midpoint", "minute 195 belongs to the second half"},
                             {"median_even_count", "mean of the two central order statistics"},
                             {"normalization", "value divided by the absolute value at the normalizer semester"},
                             {"float_format", "17 significant digits"}};
  manifest["failures"] = b.failures;
  json list = json::array();
  for (const auto& [path, content] : files)
    list.push_back({{"path", path}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
  manifest["files"] = list;
  files["manifest.json"] = dump(manifest);
}

}  // namespace detail

/// Runs every stage on an already built panel and index. Exclusions from the config and
/// the coverage validation are applied to the index first.
inline ReportBundle analyze(const MinutePanel& panel, SemesterIndex index, const PipelineConfig& cfg) {
  ReportBundle b;
  b.config = canonical_json(cfg);
  b.config_hash = sha256_hex(b.config.dump());
  b.regime_boundary = cfg.regime_boundary;
  for (const auto& [s, tickers] : cfg.exclusions)
    for (const auto& t : tickers) index.exclude(t, s);
  b.validation = validate_panel(panel, index, cfg.min_day_coverage);
  index = apply_validation(std::move(index), b.validation);
  b.semesters = index.semesters();
  if (b.semesters.empty()) throw Error(ErrorKind::NoData, "panel has no semesters");

  // per (ticker, semester)
  struct Task {
    std::size_t company;
    int semester;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < panel.num_companies(); ++c)
    for (int s : b.semesters)
      if (!index.excluded(panel.companies()[c], s)) tasks.push_back({c, s});
  struct TaskOut {
    std::optional<CumulantProfile> profile;
    TickerSemesterResult result;
    std::vector<std::string> failures;
    bool ok = false;
  };
  std::vector<TaskOut> outs(tasks.size());
  parallel_for(tasks.size(), cfg.jobs, [&](std::size_t i) {
    const auto& ticker = panel.companies()[tasks[i].company];
    const int s = tasks[i].semester;
    auto& o = outs[i];
    o.result.ticker = ticker;
    o.result.semester = s;
    const std::string where = ticker + " semester " + std::to_string(s);
    try {
      o.profile = cumulants_over_days(panel, index, ticker, s, cfg.cumulants);
    } catch (const Error& e) {
      o.failures.push_back(detail::failure(where, e));
      return;
    }
    const auto& mean = o.profile->mean;
    detail::attempt(o.failures, where + " opening", [&] {
      o.result.opening = fit_opening_powerlaw(mean, cfg.windows.opening, cfg.windows.opening_time_offset);
    });
    detail::attempt(o.failures, where + " closing",
                    [&] { o.result.closing = fit_closing_powerlaw(mean, cfg.windows.closing); });
    detail::attempt(o.failures, where + " quartic", [&] {
      o.result.quartic = fit_quartic(mean);
      o.result.shape = shape_functionals(*o.result.quartic);
    });
    detail::attempt(o.failures, where + " metrics", [&] {
      o.result.metrics = semester_metrics(panel, index, ticker, s, mean, o.result.shape, cfg.metrics);
    });
    o.ok = true;
  });
  std::map<int, std::vector<CumulantProfile>> by_semester;
  std::set<std::string> ok_tickers, seen_tickers;
  std::optional<ErrorKind> first_kind;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    auto& o = outs[i];
    seen_tickers.insert(o.result.ticker);
    b.failures.insert(b.failures.end(), o.failures.begin(), o.failures.end());
    if (!o.ok) continue;
    ok_tickers.insert(o.result.ticker);
    by_semester[o.result.semester].push_back(std::move(*o.profile));
    b.per_ticker.push_back(std::move(o.result));
  }
  if (ok_tickers.empty())
    throw Error(ErrorKind::InsufficientSamples,
                "every ticker failed" + (b.failures.empty() ? std::string() : " (first: " + b.failures.front() + ")"));

  // per semester
  std::vector<SemesterResult> sem(b.semesters.size());
  std::vector<std::vector<std::string>> sem_fail(b.semesters.size());
  parallel_for(b.semesters.size(), cfg.jobs, [&](std::size_t i) {
    sem[i].semester = b.semesters[i];
    detail::semester_stage(panel, index, cfg, by_semester[b.semesters[i]], sem[i], sem_fail[i]);
  });
  for (std::size_t i = 0; i < sem.size(); ++i) {
    b.failures.insert(b.failures.end(), sem_fail[i].begin(), sem_fail[i].end());
    b.per_semester.emplace(sem[i].semester, std::move(sem[i]));
  }

  // concavity-activity per ticker
  std::map<std::string, std::vector<SemesterMetrics>> per_ticker_metrics;
  for (const auto& r : b.per_ticker)
    if (r.metrics) per_ticker_metrics[r.ticker].push_back(*r.metrics);
  for (const auto& [ticker, rows] : per_ticker_metrics)
    detail::attempt(b.failures, ticker + " concavity_vs_activity",
                    [&] { b.concavity_activity.emplace(ticker, concavity_activity_regression(rows)); });

  // cross-sectional kurtosis tail
  std::map<int, AggregatedProfile> hats;
  for (const auto& [s, r] : b.per_semester)
    if (r.hat) hats.emplace(s, *r.hat);
  detail::attempt(b.failures, "kurtosis tail", [&] {
    if (hats.empty()) throw Error(ErrorKind::MissingUpstream, "no cross-sectional profiles");
    b.tail = mean_kurtosis_tail(hats, cfg.tail_t_min, cfg.tail_excluded);
  });

  // regime tests on the opening exponent
  std::vector<double> groups[2];
  for (int s : b.semesters)
    if (const auto* f = detail::semester_fit(b, s, "opening")) {
      const int g = s >= cfg.regime_boundary ? 1 : 0;
      b.test_groups[g].push_back(s);
      groups[g].push_back(f->coefficient("exponent"));
    }
  if (b.semesters.size() > 1 &&
      (cfg.regime_boundary <= b.semesters.front() || cfg.regime_boundary > b.semesters.back()))
    b.failures.push_back("tests: regime boundary " + std::to_string(cfg.regime_boundary) +
                         " leaves one group empty");
  detail::attempt(b.failures, "welch test", [&] { b.welch = welch_test(groups[0], groups[1], cfg.confidence, cfg.tails); });
  detail::attempt(b.failures, "mww test", [&] { b.mww = mww_test(groups[0], groups[1], cfg.confidence, cfg.tails); });

  detail::assemble_files(b, cfg.cumulants);
  return b;
}

inline SemesterIndex build_index(const MinutePanel& panel, const PipelineConfig& cfg) {
  if (!cfg.semesters.empty()) return assign_semesters(panel, cfg.semesters);
  return assign_default_semesters(panel, cfg.first_year);
}

inline ReportBundle run_pipeline(const PipelineConfig& cfg) {
  auto loaded = load_minute_bars(cfg.inputs, cfg.schema);
  auto index = build_index(loaded.panel, cfg);
  auto b = analyze(loaded.panel, std::move(index), cfg);
  return b;
}

/// Writes every bundle file under dir. Nothing is written unless the whole bundle was built.
inline void write_bundle(const ReportBundle& b, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (dir.empty()) throw Error(ErrorKind::InvalidArgument, "no output directory");
  for (const auto& [rel, content] : b.files) {
    const auto path = dir / rel;
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << content;
    if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
  }
}

}  // namespace intraday

#endif  // INTRADAY_REPORT_HPP
