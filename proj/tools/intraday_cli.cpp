#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include "CLI11.hpp"
#include "intraday/report.hpp"

namespace fs = std::filesystem;
using namespace intraday;

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::string time_format;
  std::string return_convention;
  std::string kurtosis_reading;
  unsigned jobs = 0;
};

PipelineConfig make_config(const Globals& g, const std::vector<std::string>& inputs) {
  PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : load_config(g.config);
  if (!inputs.empty()) {
    cfg.inputs.clear();
    for (const auto& p : inputs) cfg.inputs.emplace_back(p);
  }
  if (!g.time_format.empty()) cfg.schema.time_format = parse_time_format(g.time_format);
  if (!g.return_convention.empty()) cfg.metrics.return_convention = parse_return_convention(g.return_convention);
  if (!g.kurtosis_reading.empty()) cfg.cumulants.kurtosis_reading = parse_kurtosis_reading(g.kurtosis_reading);
  if (g.jobs) cfg.jobs = g.jobs;
  if (!g.out.empty()) cfg.output_dir = g.out;
  if (cfg.inputs.empty()) throw Error(ErrorKind::InvalidArgument, "no input paths (give them on the command line or in the config)");
  return cfg;
}

struct Prepared {
  MinutePanel panel;
  SemesterIndex index;
  LoadReport load;
  ValidationReport validation;
};

Prepared prepare(const PipelineConfig& cfg) {
  auto loaded = load_minute_bars(cfg.inputs, cfg.schema);
  Prepared p{std::move(loaded.panel), {}, loaded.report, {}};
  p.index = build_index(p.panel, cfg);
  for (const auto& [s, tickers] : cfg.exclusions)
    for (const auto& t : tickers) p.index.exclude(t, s);
  p.validation = validate_panel(p.panel, p.index, cfg.min_day_coverage);
  p.index = apply_validation(std::move(p.index), p.validation);
  return p;
}

// writes to --out when given, stdout otherwise
void emit(const Globals& g, const std::string& default_name, const std::string& content) {
  if (g.out.empty()) {
    std::cout << content;
    return;
  }
  fs::path path(g.out);
  if (fs::is_directory(path) || g.out.back() == '/') {
    fs::create_directories(path);
    path /= default_name;
  } else if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  os << content;
}

MinuteSeries read_series(const std::string& path, const std::string& column) {
  if (path == "-") return read_profile_column(std::cin, column);
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Io, "cannot open " + path);
  return read_profile_column(is, column);
}

std::vector<double> read_values(const std::string& arg) {
  if (arg == "-") {
    std::string text((std::istreambuf_iterator<char>(std::cin)), std::istreambuf_iterator<char>());
    return parse_value_list(text);
  }
  std::error_code ec;
  if (fs::is_regular_file(arg, ec)) return parse_value_list(read_file(arg));
  return parse_value_list(arg);
}

Window window_arg(const std::vector<int>& w, Window fallback) {
  if (w.empty()) return fallback;
  return {w.at(0), w.at(1)};
}

int exit_code(ErrorKind k) { return is_numerical(k) ? 3 : 2; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Intraday volume seasonality: cumulant profiles, fits, tests and figure data"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "pipeline config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "output file or directory");
  app.add_option("--time-format", g.time_format, "clock (HH:MM) or index (0..390)")
      ->check(CLI::IsMember({"clock", "index"}));
  app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::Range(1u, 1024u));
  app.add_option("--return-convention", g.return_convention, "closing-denominator or open-denominator")
      ->check(CLI::IsMember({"closing-denominator", "open-denominator"}));
  app.add_option("--kurtosis-reading", g.kurtosis_reading, "mad or literal")
      ->check(CLI::IsMember({"mad", "literal"}));

  std::vector<std::string> inputs;

  auto* ingest = app.add_subcommand("ingest", "load minute bars and write the canonical CSV");
  ingest->add_option("inputs", inputs, "CSV files or directories");

  auto* validate = app.add_subcommand("validate", "check semester coverage and print the validation report");
  validate->add_option("inputs", inputs, "CSV files or directories");

  auto* profile = app.add_subcommand("profile", "cumulant profile of one ticker, one day, or a semester aggregate");
  profile->add_option("inputs", inputs, "CSV files or directories");
  int semester = 0;
  std::string ticker, day, aggregate;
  profile->add_option("--semester", semester, "semester label")->required();
  auto* by_ticker = profile->add_option("--ticker", ticker, "over-days profile of this ticker");
  auto* by_day = profile->add_option("--date", day, "over-companies profile of this day (YYYY-MM-DD)");
  auto* by_agg = profile->add_option("--aggregate", aggregate, "tilde or hat semester aggregate")
                     ->check(CLI::IsMember({"tilde", "hat"}));
  by_ticker->excludes(by_day)->excludes(by_agg);
  by_day->excludes(by_agg);

  auto* fit = app.add_subcommand("fit", "fit a model to one column of a profile CSV");
  std::string profile_path, column = "mean", model;
  std::vector<int> window;
  double offset = 0.0;
  fit->add_option("profile", profile_path, "profile CSV ('-' for stdin)")->required();
  fit->add_option("--model", model, "opening, closing, quartic, kurtosis-morning or kurtosis-afternoon")
      ->required()
      ->check(CLI::IsMember({"opening", "closing", "quartic", "kurtosis-morning", "kurtosis-afternoon"}));
  fit->add_option("--column", column, "profile column");
  fit->add_option("--window", window, "first and last minute")->expected(2);
  fit->add_option("--time-offset", offset, "opening fit uses log(t + offset)");

  auto* shapes = app.add_subcommand("shapes", "quartic fit, concavity and symmetry of a profile");
  shapes->add_option("profile", profile_path, "profile CSV ('-' for stdin)")->required();
  shapes->add_option("--column", column, "profile column");

  auto* metrics = app.add_subcommand("metrics", "activity, volatility and price variation per ticker and semester");
  metrics->add_option("inputs", inputs, "CSV files or directories");

  auto* tests = app.add_subcommand("tests", "Welch and Mann-Whitney-Wilcoxon tests on two samples");
  std::string sample1, sample2;
  double confidence = 0.95;
  bool one_tailed = false;
  tests->add_option("sample1", sample1, "values, a file of values, or '-' for stdin")->required();
  tests->add_option("sample2", sample2, "values, a file of values, or '-' for stdin")->required();
  tests->add_option("--confidence", confidence, "confidence level")->check(CLI::Range(0.0, 1.0));
  tests->add_flag("--one-tailed", one_tailed, "one-tailed critical values");

  auto* xsection = app.add_subcommand("xsection", "cross-sectional variance ratio and kurtosis tail");
  xsection->add_option("inputs", inputs, "CSV files or directories");

  auto* synth = app.add_subcommand("synth", "generate a synthetic panel with known ground truth");
  std::string spec_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> companies, days;
  std::optional<int> semesters;
  synth->add_option("--spec", spec_path, "generator spec (JSON)")->check(CLI::ExistingFile);
  synth->add_option("--seed", seed, "random seed");
  synth->add_option("--companies", companies, "number of companies");
  synth->add_option("--days", days, "days per semester");
  synth->add_option("--semesters", semesters, "number of semesters");

  auto* report = app.add_subcommand("report", "run the full pipeline and write the report bundle");
  report->add_option("inputs", inputs, "CSV files or directories");

  auto* figure = app.add_subcommand("figure", "run the pipeline and print one figure's data series");
  std::string figure_id;
  figure->add_option("id", figure_id, "fig1 .. fig16")->required();
  figure->add_option("inputs", inputs, "CSV files or directories");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*ingest) {
      auto cfg = make_config(g, inputs);
      auto loaded = load_minute_bars(cfg.inputs, cfg.schema);
      std::ostringstream csv;
      write_canonical_csv(loaded.panel, csv);
      emit(g, "panel.csv", csv.str());
      std::cerr << dump(to_json(loaded.report));
    } else if (*validate) {
      auto p = prepare(make_config(g, inputs));
      json j;
      j["load"] = to_json(p.load);
      j["validation"] = to_json(p.validation);
      emit(g, "validation.json", dump(j));
    } else if (*profile) {
      auto cfg = make_config(g, inputs);
      auto p = prepare(cfg);
      if (!ticker.empty()) {
        emit(g, "profile.csv", profile_csv(cumulants_over_days(p.panel, p.index, ticker, semester, cfg.cumulants)));
      } else if (!day.empty()) {
        auto d = parse_date(day);
        if (!d) throw Error(ErrorKind::InvalidArgument, "bad date " + day);
        emit(g, "profile.csv", profile_csv(cumulants_over_companies(p.panel, p.index, *d, semester, cfg.cumulants)));
      } else {
        const bool hat = aggregate == "hat";
        auto agg = hat ? aggregate_hat(profiles_over_companies(p.panel, p.index, semester, cfg.cumulants, cfg.jobs), semester)
                       : aggregate_tilde(profiles_over_days(p.panel, p.index, semester, cfg.cumulants, cfg.jobs), semester);
        emit(g, "profile.csv", profile_csv(agg));
      }
    } else if (*fit) {
      const auto series = read_series(profile_path, column);
      const FitWindows w;
      FitResult f;
      if (model == "opening") f = fit_opening_powerlaw(series, window_arg(window, w.opening), offset);
      else if (model == "closing") f = fit_closing_powerlaw(series, window_arg(window, w.closing));
      else if (model == "quartic") f = fit_quartic(series);
      else if (model == "kurtosis-morning") f = fit_kurtosis_morning(series, window_arg(window, w.kurtosis_morning));
      else f = fit_kurtosis_afternoon(series, window_arg(window, w.kurtosis_afternoon));
      emit(g, "fit.json", dump(to_json(f)));
    } else if (*shapes) {
      auto q = fit_quartic(read_series(profile_path, column));
      json j;
      j["quartic"] = to_json(q);
      j["shape"] = to_json(shape_functionals(q));
      emit(g, "shapes.json", dump(j));
    } else if (*metrics) {
      auto cfg = make_config(g, inputs);
      auto p = prepare(cfg);
      std::vector<SemesterMetrics> rows;
      for (const auto& t : p.panel.companies())
        for (int s : p.index.semesters()) {
          if (p.index.excluded(t, s)) continue;
          auto prof = cumulants_over_days(p.panel, p.index, t, s, cfg.cumulants);
          std::optional<ShapeFunctionals> shape;
          try {
            shape = shape_functionals(fit_quartic(prof.mean));
          } catch (const Error& e) {
            std::cerr << t << " semester " << s << ": " << e.what() << '\n';
          }
          rows.push_back(semester_metrics(p.panel, p.index, t, s, prof.mean, shape, cfg.metrics));
        }
      emit(g, "metrics.csv", metrics_csv(rows));
    } else if (*tests) {
      if (sample1 == "-" && sample2 == "-") throw Error(ErrorKind::InvalidArgument, "only one sample can come from stdin");
      const auto a = read_values(sample1), b = read_values(sample2);
      const Tails tails = one_tailed ? Tails::One : Tails::Two;
      json j;
      j["welch"] = to_json(welch_test(a, b, confidence, tails));
      j["mww"] = to_json(mww_test(a, b, confidence, tails));
      emit(g, "tests.json", dump(j));
    } else if (*xsection) {
      auto cfg = make_config(g, inputs);
      auto p = prepare(cfg);
      json sem = json::array();
      std::map<int, AggregatedProfile> hats;
      for (int s : p.index.semesters()) {
        auto tilde = aggregate_tilde(profiles_over_days(p.panel, p.index, s, cfg.cumulants, cfg.jobs), s);
        auto hat = aggregate_hat(profiles_over_companies(p.panel, p.index, s, cfg.cumulants, cfg.jobs), s);
        sem.push_back({{"semester", s},
                       {"companies", included_companies(p.panel, p.index, s)},
                       {"variance_ratio", series_json(variance_ratio(tilde, hat))}});
        hats.emplace(s, std::move(hat));
      }
      const auto tail = mean_kurtosis_tail(hats, cfg.tail_t_min, cfg.tail_excluded);
      json per = json::object();
      for (const auto& [s, v] : tail.per_semester) per[std::to_string(s)] = num(v);
      json j;
      j["semesters"] = sem;
      j["kurtosis_tail"] = {{"t_min", tail.t_min},
                            {"excluded", std::vector<int>(tail.excluded.begin(), tail.excluded.end())},
                            {"averaged_semesters", tail.averaged_semesters},
                            {"per_semester", per},
                            {"curve", series_json(tail.curve)}};
      emit(g, "xsection.json", dump(j));
    } else if (*synth) {
      GeneratorSpec spec;
      if (!spec_path.empty()) {
        try {
          spec = generator_spec_from_json(json::parse(read_file(spec_path)));
        } catch (const json::exception& e) {
          throw Error(ErrorKind::InvalidSpec, spec_path + ": " + e.what());
        }
      }
      if (seed) spec.seed = *seed;
      if (companies) spec.n_companies = *companies;
      if (days) spec.n_days = *days;
      if (semesters) spec.n_semesters = *semesters;
      if (g.out.empty()) throw Error(ErrorKind::InvalidArgument, "synth needs --out <dir>");
      auto syn = generate_panel(spec, g.jobs ? g.jobs : 1);
      std::ostringstream csv;
      write_canonical_csv(syn.panel, csv);
      const std::string truth = dump(to_json(syn.truth));
      fs::create_directories(g.out);
      std::ofstream(fs::path(g.out) / "panel.csv", std::ios::binary) << csv.str();
      std::ofstream(fs::path(g.out) / "truth.json", std::ios::binary) << truth;
    } else if (*report) {
      auto cfg = make_config(g, inputs);
      if (cfg.output_dir.empty()) throw Error(ErrorKind::InvalidArgument, "report needs --out <dir> or output_dir in the config");
      auto b = run_pipeline(cfg);
      write_bundle(b, cfg.output_dir);
      for (const auto& f : b.failures) std::cerr << "warning: " << f << '\n';
      std::cerr << "wrote " << b.files.size() << " files to " << cfg.output_dir.string() << " (config " << b.config_hash
                << ")\n";
    } else if (*figure) {
      const auto& ids = figure_ids();
      if (std::find(ids.begin(), ids.end(), figure_id) == ids.end())
        throw Error(ErrorKind::UnknownFigure, "unknown figure " + figure_id);
      auto cfg = make_config(g, inputs);
      cfg.output_dir.clear();
      auto b = run_pipeline(cfg);
      emit(g, figure_id + ".csv", emit_figure_series(b, figure_id));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
