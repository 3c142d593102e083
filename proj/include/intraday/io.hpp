#ifndef INTRADAY_IO_HPP
#define INTRADAY_IO_HPP

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "intraday/common.hpp"
#include "intraday/cumulants.hpp"
#include "intraday/hypothesis_tests.hpp"
#include "intraday/market_data.hpp"
#include "intraday/profile_fits.hpp"
#include "intraday/session_metrics.hpp"
#include "intraday/synth.hpp"

namespace intraday {

using json = nlohmann::ordered_json;

// Doubles go through fmt_double (17 significant digits) and are embedded as raw JSON numbers,
// so text output is stable and round-trips exactly.
inline json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return json::parse(fmt_double(v));
}

inline json num(const Maybe& v) { return v ? num(*v) : json(nullptr); }

inline json series_json(const MinuteSeries& s) {
  json a = json::array();
  for (const auto& v : s) a.push_back(num(v));
  return a;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Profiles: CSV rows t, mean, median, variance, skewness, kurtosis, n

inline void write_profile_csv(std::ostream& os, const MinuteSeries& mean, const MinuteSeries& median,
                              const MinuteSeries& variance, const MinuteSeries& skewness, const MinuteSeries& kurtosis,
                              const std::vector<std::size_t>& counts) {
  os << "t,mean,median,variance,skewness,kurtosis,n\n";
  for (int t = kFirstMinute; t <= kLastMinute; ++t)
    os << t << ',' << fmt_maybe(mean[t]) << ',' << fmt_maybe(median[t]) << ',' << fmt_maybe(variance[t]) << ','
       << fmt_maybe(skewness[t]) << ',' << fmt_maybe(kurtosis[t]) << ',' << counts[t] << '\n';
}

inline std::string profile_csv(const CumulantProfile& p) {
  std::ostringstream os;
  write_profile_csv(os, p.mean, p.median, p.variance, p.skewness, p.kurtosis, p.sample_count);
  return os.str();
}

inline std::string profile_csv(const AggregatedProfile& p) {
  std::ostringstream os;
  write_profile_csv(os, p.mean, p.median, p.variance, p.skewness, p.kurtosis, p.contributing_count);
  return os.str();
}

inline json profile_metadata(const CumulantOptions& opt) {
  return {{"median_convention", "even counts average the two central order statistics"},
          {"variance_divisor", "n"},
          {"kurtosis_reading", opt.kurtosis_reading == KurtosisReading::Literal ? "literal" : "mean-absolute-deviation"}};
}

inline json to_json(const CumulantProfile& p, const CumulantOptions& opt = {}) {
  json j;
  j["semester"] = p.semester;
  j["axis"] = to_string(p.axis);
  if (p.axis == Axis::OverDays) j["ticker"] = p.ticker;
  if (p.day) j["day"] = format_date(*p.day);
  j["metadata"] = profile_metadata(opt);
  j["mean"] = series_json(p.mean);
  j["median"] = series_json(p.median);
  j["variance"] = series_json(p.variance);
  j["skewness"] = series_json(p.skewness);
  j["kurtosis"] = series_json(p.kurtosis);
  j["n"] = p.sample_count;
  return j;
}

inline json to_json(const AggregatedProfile& p, const CumulantOptions& opt = {}) {
  json j;
  j["semester"] = p.semester;
  j["kind"] = to_string(p.kind);
  j["metadata"] = profile_metadata(opt);
  j["mean"] = series_json(p.mean);
  j["median"] = series_json(p.median);
  j["variance"] = series_json(p.variance);
  j["skewness"] = series_json(p.skewness);
  j["kurtosis"] = series_json(p.kurtosis);
  j["contributing_count"] = p.contributing_count;
  return j;
}

/// Reads the mean column (or another named column) of a profile CSV back into a series.
inline MinuteSeries read_profile_column(std::istream& is, const std::string& column = "mean") {
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorKind::MalformedRow, "empty profile CSV");
  auto header = split_csv_line(line);
  auto it = std::find(header.begin(), header.end(), column);
  if (it == header.end()) throw Error(ErrorKind::MissingColumn, column);
  const auto col = static_cast<std::size_t>(it - header.begin());
  MinuteSeries out = empty_series();
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != header.size()) throw Error(ErrorKind::MalformedRow, "profile row width");
    int t = std::stoi(f[0]);
    if (t < kFirstMinute || t > kLastMinute) throw Error(ErrorKind::OutOfSession, f[0]);
    if (!f[col].empty()) {
      auto v = parse_double(f[col]);
      if (!v) throw Error(ErrorKind::MalformedRow, "non-numeric '" + f[col] + "'");
      out[t] = *v;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fits and tests

inline json to_json(const FitResult& f) {
  json j;
  j["model"] = to_string(f.model);
  if (f.window) j["window"] = {f.window->lo, f.window->hi};
  else j["window"] = nullptr;
  json coef = json::object(), err = json::object();
  for (std::size_t i = 0; i < f.names.size(); ++i) {
    coef[f.names[i]] = num(f.coefficients[i]);
    err[f.names[i]] = num(f.standard_errors[i]);
  }
  j["coefficients"] = coef;
  j["standard_errors"] = err;
  j["r"] = num(f.r);
  j["n_points"] = f.n_points;
  j["residual_sum_squares"] = num(f.rss);
  if (!f.extras.empty()) {
    json e = json::object();
    for (const auto& [k, v] : f.extras) e[k] = num(v);
    j["extras"] = e;
  }
  return j;
}

inline json to_json(const ShapeFunctionals& s) {
  return {{"concavity", num(s.concavity)},
          {"symmetry", num(s.symmetry)},
          {"coefficients", {num(s.coefficients[0]), num(s.coefficients[1]), num(s.coefficients[2]),
                            num(s.coefficients[3]), num(s.coefficients[4])}},
          {"midpoint_minute_195", "second half"}};
}

inline json to_json(const TestResult& r) {
  json j;
  j["test"] = to_string(r.test);
  j["statistic"] = num(r.statistic);
  j["dof"] = r.dof ? num(*r.dof) : json(nullptr);
  j["critical_value"] = num(r.critical_value);
  j["confidence"] = num(r.confidence);
  j["tails"] = to_string(r.tails);
  j["reject_null"] = r.reject_null;
  j["sample_sizes"] = {r.n1, r.n2};
  j["method"] = r.method;
  json d = json::object();
  for (const auto& [k, v] : r.details) d[k] = num(v);
  j["details"] = d;
  return j;
}

// ---------------------------------------------------------------------------
// Market data reports

inline json to_json(const LoadReport& r) {
  return {{"files", r.files},
          {"rows_read", r.rows_read},
          {"rows_loaded", r.rows_loaded},
          {"out_of_session", r.out_of_session},
          {"unparseable", r.unparseable},
          {"rejected_examples", r.rejected}};
}

inline json to_json(const ValidationReport& rep) {
  json recs = json::array();
  for (const auto& r : rep.records)
    recs.push_back({{"ticker", r.ticker},
                    {"semester", r.semester},
                    {"semester_days", r.semester_days},
                    {"days_with_data", r.days_with_data},
                    {"coverage", num(r.coverage)},
                    {"included", r.included},
                    {"reason", r.reason}});
  return {{"min_day_coverage", num(rep.min_day_coverage)}, {"records", recs}};
}

inline std::string metrics_csv(const std::vector<SemesterMetrics>& rows) {
  std::ostringstream os;
  os << "ticker,semester,activity,rescaled_activity,volatility,price_variation,concavity,symmetry\n";
  for (const auto& m : rows)
    os << m.ticker << ',' << m.semester << ',' << fmt_double(m.activity) << ',' << fmt_double(m.rescaled_activity)
       << ',' << fmt_maybe(m.volatility) << ',' << fmt_maybe(m.price_variation) << ',' << fmt_maybe(m.concavity) << ','
       << fmt_maybe(m.symmetry) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Generator spec and ground truth

inline NoiseLaw parse_noise_law(const std::string& s) {
  if (s == "lognormal") return NoiseLaw::LogNormal;
  if (s == "gamma") return NoiseLaw::Gamma;
  if (s == "constant") return NoiseLaw::Constant;
  throw Error(ErrorKind::InvalidSpec, "unknown noise law " + s);
}

inline json to_json(const Intensity& in) {
  return {{"a", num(in.a)},         {"alpha", num(in.alpha)}, {"b", num(in.b)}, {"alpha_close", num(in.alpha_close)},
          {"c", num(in.c)},         {"bump", num(in.bump)},   {"bump_width", num(in.bump_width)}};
}

inline json to_json(const GeneratorSpec& s) {
  json j;
  j["n_companies"] = s.n_companies;
  j["n_days"] = s.n_days;
  j["n_semesters"] = s.n_semesters;
  j["first_year"] = s.first_year;
  j["seed"] = s.seed;
  j["intensity"] = to_json(s.intensity);
  j["noise"] = {{"law", to_string(s.noise.law)}, {"sigma_log", num(s.noise.sigma_log)}, {"shape", num(s.noise.shape)}};
  j["day_factor_sigma_log"] = num(s.day_factor_sigma_log);
  j["missing_fraction"] = num(s.missing_fraction);
  json ov = json::array();
  for (const auto& o : s.overrides) {
    json e = {{"semester", o.semester}};
    if (o.a) e["a"] = num(*o.a);
    if (o.alpha) e["alpha"] = num(*o.alpha);
    if (o.b) e["b"] = num(*o.b);
    if (o.alpha_close) e["alpha_close"] = num(*o.alpha_close);
    if (o.c) e["c"] = num(*o.c);
    ov.push_back(e);
  }
  j["overrides"] = ov;
  json ab = json::array();
  for (const auto& a : s.absences) ab.push_back({{"company", a.company}, {"semester", a.semester}});
  j["absences"] = ab;
  j["prices"] = {{"enabled", s.prices.enabled},
                 {"initial_price", num(s.prices.initial_price)},
                 {"daily_log_vol", num(s.prices.daily_log_vol)},
                 {"substeps", s.prices.substeps}};
  return j;
}

inline GeneratorSpec generator_spec_from_json(const json& j) {
  GeneratorSpec s;
  s.n_companies = j.value("n_companies", s.n_companies);
  s.n_days = j.value("n_days", s.n_days);
  s.n_semesters = j.value("n_semesters", s.n_semesters);
  s.first_year = j.value("first_year", s.first_year);
  s.seed = j.value("seed", s.seed);
  if (j.contains("intensity")) {
    const auto& in = j["intensity"];
    s.intensity.a = in.value("a", s.intensity.a);
    s.intensity.alpha = in.value("alpha", s.intensity.alpha);
    s.intensity.b = in.value("b", s.intensity.b);
    s.intensity.alpha_close = in.value("alpha_close", s.intensity.alpha_close);
    s.intensity.c = in.value("c", s.intensity.c);
    s.intensity.bump = in.value("bump", s.intensity.bump);
    s.intensity.bump_width = in.value("bump_width", s.intensity.bump_width);
  }
  if (j.contains("noise")) {
    const auto& n = j["noise"];
    if (n.contains("law")) s.noise.law = parse_noise_law(n["law"].get<std::string>());
    s.noise.sigma_log = n.value("sigma_log", s.noise.sigma_log);
    s.noise.shape = n.value("shape", s.noise.shape);
  }
  s.day_factor_sigma_log = j.value("day_factor_sigma_log", s.day_factor_sigma_log);
  s.missing_fraction = j.value("missing_fraction", s.missing_fraction);
  if (j.contains("overrides"))
    for (const auto& o : j["overrides"]) {
      SemesterOverride ov;
      ov.semester = o.at("semester").get<int>();
      if (o.contains("a")) ov.a = o["a"].get<double>();
      if (o.contains("alpha")) ov.alpha = o["alpha"].get<double>();
      if (o.contains("b")) ov.b = o["b"].get<double>();
      if (o.contains("alpha_close")) ov.alpha_close = o["alpha_close"].get<double>();
      if (o.contains("c")) ov.c = o["c"].get<double>();
      s.overrides.push_back(ov);
    }
  if (j.contains("absences"))
    for (const auto& a : j["absences"])
      s.absences.push_back({a.at("company").get<std::size_t>(), a.at("semester").get<int>()});
  if (j.contains("prices")) {
    const auto& p = j["prices"];
    s.prices.enabled = p.value("enabled", s.prices.enabled);
    s.prices.initial_price = p.value("initial_price", s.prices.initial_price);
    s.prices.daily_log_vol = p.value("daily_log_vol", s.prices.daily_log_vol);
    s.prices.substeps = p.value("substeps", s.prices.substeps);
  }
  return s;
}

inline json to_json(const GroundTruth& t) {
  json j;
  j["spec"] = to_json(t.spec);
  j["tickers"] = t.tickers;
  json sem = json::array();
  for (const auto& r : t.semesters) {
    const auto& st = t.shape.at(r.label);
    std::vector<double> lam = t.lambda.at(r.label);
    json l = json::array();
    for (double v : lam) l.push_back(num(v));
    sem.push_back({{"semester", r.label},
                   {"first", format_date(r.first)},
                   {"last", format_date(r.last)},
                   {"intensity", to_json(t.intensity.at(r.label))},
                   {"half_volume_time", num(half_volume_time(t.intensity.at(r.label).alpha))},
                   {"activity", num(st.activity)},
                   {"rescaled_activity", num(st.rescaled_activity)},
                   {"concavity", num(st.concavity)},
                   {"symmetry", num(st.symmetry)},
                   {"lambda", l}});
  }
  j["semesters"] = sem;
  json df = json::array();
  for (double v : t.day_factor) df.push_back(num(v));
  j["day_factors"] = df;
  return j;
}

// ---------------------------------------------------------------------------
// Plain value lists for the test subcommand: numbers separated by commas, whitespace or newlines

inline std::vector<double> parse_value_list(std::string_view text) {
  std::vector<double> out;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    auto v = parse_double(token);
    if (!v) throw Error(ErrorKind::MalformedRow, "not a number: '" + token + "'");
    out.push_back(*v);
    token.clear();
  };
  for (char ch : text) {
    if (ch == ',' || ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == ';') flush();
    else token.push_back(ch);
  }
  flush();
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace intraday

#endif  // INTRADAY_IO_HPP
