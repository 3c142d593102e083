// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "intraday/report.hpp"
#include "intraday/synth.hpp"
#include "oracles.hpp"

using namespace intraday;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const char* name, bool ok, double ms, double budget_ms, const std::string& detail) {
  const bool in_time = budget_ms <= 0.0 || ms < budget_ms;
  const bool pass = ok && in_time;
  if (!pass) ++failures;
  std::printf("criterion %d %s: %s | %s | %.3f ms", id, pass ? "PASS" : "FAIL", name, detail.c_str(), ms);
  if (budget_ms > 0.0) std::printf(" (budget %.0f ms%s)", budget_ms, in_time ? "" : ", exceeded");
  std::printf("\n");
  std::fflush(stdout);
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

MinuteSeries series_of(const std::function<double(int)>& f, int lo = kFirstMinute, int hi = kLastMinute) {
  auto s = empty_series();
  for (int t = lo; t <= hi; ++t) s[t] = f(t);
  return s;
}

// Pure opening power law with a +1 offset, lognormal noise of CV 0.3, prices off.
GeneratorSpec power_law_spec(double alpha, std::uint64_t seed) {
  GeneratorSpec spec;
  spec.n_companies = 30;
  spec.n_days = 126;
  spec.seed = seed;
  spec.intensity.a = 2000.0;
  spec.intensity.alpha = alpha;
  spec.intensity.b = 0.0;
  spec.intensity.c = 0.0;
  spec.noise.law = NoiseLaw::LogNormal;
  spec.noise.sigma_log = std::sqrt(std::log1p(0.09));
  spec.prices.enabled = false;
  return spec;
}

double tilde_opening_exponent(const GeneratorSpec& spec) {
  auto syn = generate_panel(spec);
  const auto tilde = aggregate_tilde(profiles_over_days(syn.panel, syn.index, 1), 1);
  return fit_opening_powerlaw(tilde.mean, {1, 100}, 1.0).coefficient("exponent");
}

// 19 semesters, opening exponent 0.29 before semester 10 and 0.37 from it on
GeneratorSpec two_regime_spec() {
  GeneratorSpec spec;
  spec.n_companies = 8;
  spec.n_days = 30;
  spec.n_semesters = 19;
  spec.seed = 2024;
  spec.intensity.a = 2000.0;
  spec.intensity.alpha = 0.29;
  spec.intensity.b = 1000.0;
  spec.intensity.alpha_close = 0.40;
  spec.intensity.c = 0.0;
  spec.noise.sigma_log = std::sqrt(std::log1p(0.09));
  spec.day_factor_sigma_log = 0.2;
  for (int s = 10; s <= 19; ++s) {
    SemesterOverride o;
    o.semester = s;
    o.alpha = 0.37;
    spec.overrides.push_back(o);
  }
  return spec;
}

PipelineConfig two_regime_config() {
  PipelineConfig cfg;
  cfg.regime_boundary = 10;
  cfg.windows.opening_time_offset = 1.0;
  return cfg;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) {
      std::ifstream is(e.path(), std::ios::binary);
      std::ostringstream os;
      os << is.rdbuf();
      out[fs::relative(e.path(), root).generic_string()] = os.str();
    }
  return out;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(INTRADAY_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void criterion1() {
  const auto t0 = Clock::now();
  const auto r = welch_test(SampleSummary{9, 0.29, 1.09e-4}, SampleSummary{10, 0.37, 1.11e-3}, 0.95, Tails::Two);
  const double ms = ms_since(t0);
  const double t = std::fabs(r.statistic);
  const bool ok = t >= 7.0 && t <= 7.4 && *r.dof >= 10.0 && *r.dof <= 12.0 && r.reject_null;
  report(1, "Welch on the published summary inputs", ok, ms, 1.0,
         fmt("|t| = %.4f in [7.0, 7.4], dof = %.3f in [10, 12], critical %.4f, reject = %d", t, *r.dof,
             r.critical_value, int(r.reject_null)));
}

void criterion2() {
  const auto t0 = Clock::now();
  std::vector<double> a, b;
  for (int i = 0; i < 9; ++i) a.push_back(0.20 + 0.01 * i);
  for (int i = 0; i < 10; ++i) b.push_back(0.50 + 0.01 * i);
  const auto sep = mww_test(a, b);
  bool ok = sep.statistic == 0.0 && sep.critical_value == 20.0 && sep.reject_null;

  std::mt19937_64 eng(20);
  std::uniform_int_distribution<int> size(1, 12), value(0, 9);
  int mismatches = 0, tied_samples = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> x(size(eng)), y(size(eng));
    for (auto& v : x) v = value(eng);
    for (auto& v : y) v = value(eng);
    const auto r = mww_test(x, y);
    const auto p = oracle::pairwise_u(x, y);
    if (r.details.at("U1") != p.below || r.details.at("U2") != p.above || r.statistic != std::min(p.below, p.above))
      ++mismatches;
    std::vector<double> all(x);
    all.insert(all.end(), y.begin(), y.end());
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end()) ++tied_samples;
  }
  ok = ok && mismatches == 0;
  report(2, "MWW separated 9 vs 10 and pairwise oracle", ok, ms_since(t0), 1000.0,
         fmt("U_min = %g, critical = %g, reject = %d; %d of 1000 random samples disagree (%d contain ties)",
             sep.statistic, sep.critical_value, int(sep.reject_null), mismatches, tied_samples));
}

void criterion3() {
  const auto t0 = Clock::now();
  // noiseless planted laws
  const double a = 0.29, ac = 0.37, bm = 0.8;
  const auto open = series_of([&](int t) { return 2000.0 * std::pow(t + 1.0, -a); });
  const auto close = series_of([&](int t) { return 700.0 * std::pow(391.0 - t, -ac); });
  const auto kappa = series_of([&](int t) { return 3.0 * std::pow(static_cast<double>(t), -bm); }, 1, 99);
  const double e1 = std::fabs(fit_opening_powerlaw(open, {1, 100}, 1.0).coefficient("exponent") - a);
  const double e2 = std::fabs(fit_closing_powerlaw(close).coefficient("exponent") - ac);
  const double e3 = std::fabs(fit_kurtosis_morning(kappa).coefficient("exponent") - bm);
  const double noiseless = std::max({e1, e2, e3});
  bool ok = noiseless <= 1e-8;

  // noisy panels: 200 seeds per planted exponent
  std::vector<double> low, high;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    low.push_back(tilde_opening_exponent(power_law_spec(0.29, seed)));
    high.push_back(tilde_opening_exponent(power_law_spec(0.37, 1000 + seed)));
  }
  const double l0 = oracle::percentile(low, 0.005), l1 = oracle::percentile(low, 0.995);
  const double h0 = oracle::percentile(high, 0.005), h1 = oracle::percentile(high, 0.995);
  ok = ok && l0 <= 0.29 && 0.29 <= l1 && h0 <= 0.37 && 0.37 <= h1;

  // nine semesters at 0.29 against ten at 0.37
  const std::vector<double> g1(low.begin(), low.begin() + 9), g2(high.begin(), high.begin() + 10);
  const auto w = welch_test(g1, g2);
  const auto m = mww_test(g1, g2);
  ok = ok && w.reject_null && m.reject_null;

  // the same protocol through the full pipeline on a 19-semester panel
  const auto syn = generate_panel(two_regime_spec());
  const auto b = analyze(syn.panel, syn.index, two_regime_config());
  const bool pipeline = b.welch && b.mww && b.welch->reject_null && b.mww->reject_null &&
                        b.test_groups[0].size() == 9 && b.test_groups[1].size() == 10;
  ok = ok && pipeline;

  report(3, "exponent recovery and two-regime tests", ok, ms_since(t0), 120000.0,
         fmt("noiseless max error %.2e; envelope(0.29) = [%.4f, %.4f]; envelope(0.37) = [%.4f, %.4f]", noiseless, l0,
             l1, h0, h1) +
             fmt("; seeds: Welch t = %.2f reject %d, MWW U = %g reject %d", w.statistic, int(w.reject_null),
                 m.statistic, int(m.reject_null)) +
             (pipeline ? fmt("; pipeline: Welch t = %.2f, MWW U = %g, both reject", b.welch->statistic, b.mww->statistic)
                       : std::string("; pipeline tests did not both reject")));
}

void criterion4() {
  const auto t0 = Clock::now();
  const double h1 = half_volume_time(0.29), h2 = half_volume_time(0.37);
  const double ms = ms_since(t0);
  const bool ok = h1 >= 10.5 && h1 <= 11.5 && h2 >= 6.0 && h2 <= 7.0;
  report(4, "half-volume times", ok, ms, 1.0, fmt("2^(1/0.29) = %.4f in [10.5, 11.5], 2^(1/0.37) = %.4f in [6, 7]", h1, h2));
}

void criterion5() {
  const auto t0 = Clock::now();
  const std::vector<std::array<double, 5>> family{
      {1.0, 0.3, 2.0, -0.2, 1.5}, {5.0, -1.0, 3.0, 0.5, 0.5}, {2.0, 0.0, 0.5, 0.0, 4.0}, {10.0, 2.0, 6.0, -1.0, -0.5}};
  double worst_c = 0.0, worst_v = 0.0;
  for (const auto& c : family) {
    const auto profile = series_of([&](int t) { return quartic_value(c, rescaled_time(t)); });
    const double conc = shape_functionals(fit_quartic(profile)).concavity;
    const double c_exact = 2 * c[2] + 4 * c[4];
    const double v = rescaled_activity(profile);
    const double v_exact = 2 * c[0] + 2 * c[2] / 3 + 2 * c[4] / 5;
    worst_c = std::max(worst_c, std::fabs(conc - c_exact) / std::fabs(c_exact));
    worst_v = std::max(worst_v, std::fabs(v - v_exact) / std::fabs(v_exact));
  }
  std::vector<SemesterMetrics> ms;
  for (int s = 1; s <= 12; ++s) {
    const std::array<double, 5> c{3.0, 0.2, -1.5, -0.1, 0.5 * s};
    const auto profile = series_of([&](int t) { return quartic_value(c, rescaled_time(t)); });
    SemesterMetrics m;
    m.semester = s;
    m.rescaled_activity = rescaled_activity(profile);
    m.concavity = shape_functionals(fit_quartic(profile)).concavity;
    ms.push_back(m);
  }
  const double slope = concavity_activity_regression(ms).coefficients[1];
  const bool ok = worst_c <= 0.01 && worst_v <= 0.01 && std::fabs(slope - 10.0) <= 0.2;
  report(5, "quartic identities and concavity-activity slope", ok, ms_since(t0), 1000.0,
         fmt("max rel error C %.2e, V %.2e (limit 1e-2); slope %.4f in 10 +- 0.2", worst_c, worst_v, slope));
}

void criterion6() {
  const auto t0 = Clock::now();
  constexpr int n = 10000;
  const double bound = 5.0 * std::sqrt(24.0 / n);
  int inside = 0;
  std::vector<double> v(n);
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    for (auto& x : v) x = g(eng);
    const auto c = robust_cumulants(v);
    if (std::fabs(*c.skewness) <= bound && std::fabs(*c.kurtosis) <= bound) ++inside;
  }
  bool ok = inside >= 990;

  std::mt19937_64 eng(66);
  std::lognormal_distribution<double> ln(1.0, 0.8);
  std::uniform_int_distribution<int> len(2, 400);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> x(len(eng));
    for (auto& e : x) e = std::round(100 * ln(eng));
    const auto c = robust_cumulants(x);
    const auto o = oracle::brute_cumulants(x);
    auto err = [](double got, double want) { return std::fabs(got - want) / std::max(1.0, std::fabs(want)); };
    worst = std::max({worst, err(*c.mean, o.mean), err(*c.median, o.median), err(*c.variance, o.variance)});
    if (c.skewness) worst = std::max({worst, err(*c.skewness, o.skewness), err(*c.kurtosis, o.kurtosis)});
  }
  ok = ok && worst <= 1e-12;

  GeneratorSpec spec;
  spec.n_companies = 12;
  spec.n_days = 60;
  spec.n_semesters = 2;
  spec.seed = 6;
  spec.day_factor_sigma_log = 0.3;
  const auto syn = generate_panel(spec);
  double mean_gap = 0.0;
  for (int s = 1; s <= 2; ++s) {
    const auto tilde = aggregate_tilde(profiles_over_days(syn.panel, syn.index, s), s);
    const auto hat = aggregate_hat(profiles_over_companies(syn.panel, syn.index, s), s);
    for (int t = kFirstMinute; t <= kLastMinute; ++t)
      mean_gap = std::max(mean_gap, std::fabs(*tilde.mean[t] - *hat.mean[t]) / std::fabs(*hat.mean[t]));
  }
  ok = ok && mean_gap <= 1e-10;
  report(6, "cumulant estimators", ok, ms_since(t0), 30000.0,
         fmt("%d of 1000 Gaussian seeds inside +-%.4f (need 990); brute-force max error %.2e; tilde vs hat mean %.2e",
             inside, bound, worst, mean_gap));
}

void criterion7() {
  const auto t0 = Clock::now();
  const std::vector<DailyOhlc> flat{{50, 50, 50, 50}, {80, 80, 80, 80}};
  const double zero = garman_klass_volatility(flat);
  GeneratorSpec spec;
  spec.n_companies = 25;
  spec.n_days = 126;
  spec.noise.law = NoiseLaw::Constant;
  spec.prices.daily_log_vol = 0.01;
  std::vector<double> sigmas;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    spec.seed = seed;
    const auto syn = generate_panel(spec);
    for (const auto& ticker : syn.panel.companies())
      if (const auto m = semester_metrics(syn.panel, syn.index, ticker, 1, empty_series()); m.volatility)
        sigmas.push_back(*m.volatility);
  }
  const double planted = 0.01 * std::sqrt(252.0);
  const double lo = oracle::percentile(sigmas, 0.005), hi = oracle::percentile(sigmas, 0.995);
  const bool ok = zero == 0.0 && sigmas.size() == 100 && lo <= planted && planted <= hi;
  report(7, "Garman-Klass volatility", ok, ms_since(t0), 10000.0,
         fmt("flat bars give %g; 99%% envelope over %zu company-semesters [%.4f, %.4f] contains 0.01 sqrt(252) = %.4f",
             zero, sigmas.size(), lo, hi, planted));
}

void criterion8() {
  const auto t0 = Clock::now();
  fixtures::TempDir dir("acceptance");
  const auto csv = dir.path() / "panel.csv";
  {
    const auto syn = generate_panel(two_regime_spec());
    std::ofstream os(csv, std::ios::binary);
    write_canonical_csv(syn.panel, os);
  }
  auto cfg = two_regime_config();
  cfg.inputs = {csv};
  const auto a = run_pipeline(cfg);
  const auto b = run_pipeline(cfg);
  cfg.jobs = 8;
  const auto c = run_pipeline(cfg);
  const bool library = a.files == b.files && a.files == c.files;

  fixtures::write_text(dir.path() / "cfg.json", R"({"inputs": ["panel.csv"], "regime_boundary": 10,
    "windows": {"opening_time_offset": 1.0}})");
  const auto cfg_path = (dir.path() / "cfg.json").string();
  int rc = 0;
  rc |= run_cli("--config " + cfg_path + " --jobs 1 --out " + (dir.path() / "j1a").string() + " report");
  rc |= run_cli("--config " + cfg_path + " --jobs 1 --out " + (dir.path() / "j1b").string() + " report");
  rc |= run_cli("--config " + cfg_path + " --jobs 8 --out " + (dir.path() / "j8").string() + " report");
  const auto t1a = read_tree(dir.path() / "j1a"), t1b = read_tree(dir.path() / "j1b"), t8 = read_tree(dir.path() / "j8");
  const bool cli = rc == 0 && !t1a.empty() && t1a == t1b && t1a == t8 && t1a == a.files;
  report(8, "determinism", library && cli, ms_since(t0), 0.0,
         fmt("library bundles identical: %d (%zu files); CLI --jobs 1 twice and --jobs 8 identical: %d (%zu files)",
             int(library), a.files.size(), int(cli), t1a.size()));
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria{criterion1, criterion2, criterion3, criterion4,
                                                    criterion5, criterion6, criterion7, criterion8};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      ++failures;
      std::printf("criterion %zu FAIL: exception: %s\n", i + 1, e.what());
    }
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures ? 1 : 0;
}
