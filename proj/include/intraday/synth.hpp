#ifndef INTRADAY_SYNTH_HPP
#define INTRADAY_SYNTH_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "intraday/common.hpp"
#include "intraday/market_data.hpp"
#include "intraday/parallel.hpp"
#include "intraday/profile_fits.hpp"

namespace intraday {

// Synthetic minute-bar panels with planted ground truth.
//
// Volumes are v(i, d, t) = round(Lambda(t) * D(d) * eps(i, d, t)) with
//   Lambda(t) = a (t + 1)^(-alpha) + b (391 - t)^(-alpha') + c + h exp(-(t - 270)^2 / (2 w^2)),
// eps i.i.d. with mean 1 and D(d) an optional day factor shared by every company (mean 1).
//
// Random streams: std::mt19937_64, one engine per (company, global day index) seeded with
// SplitMix64(seed, company, day). Streams never depend on generation order, so generating
// companies in parallel gives the same panel as generating them sequentially. The day factor
// uses its own per-day stream (company slot 2^32 - 1).

struct Intensity {
  double a = 2000.0;          // opening amplitude
  double alpha = 0.30;        // opening exponent
  double b = 1000.0;          // closing amplitude
  double alpha_close = 0.40;  // closing exponent
  double c = 50.0;            // baseline
  double bump = 0.0;          // midday bump height at t = 270
  double bump_width = 5.0;    // minutes
};

enum class NoiseLaw { LogNormal, Gamma, Constant };

inline const char* to_string(NoiseLaw n) {
  switch (n) {
    case NoiseLaw::LogNormal: return "lognormal";
    case NoiseLaw::Gamma: return "gamma";
    case NoiseLaw::Constant: return "constant";
  }
  return "?";
}

struct NoiseSpec {
  NoiseLaw law = NoiseLaw::LogNormal;
  double sigma_log = 0.3;  // LogNormal: sd of log eps
  double shape = 11.0;     // Gamma: shape k (scale 1/k)

  /// Variance of eps (mean is 1 for every law).
  double variance() const {
    switch (law) {
      case NoiseLaw::LogNormal: return std::expm1(sigma_log * sigma_log);
      case NoiseLaw::Gamma: return 1.0 / shape;
      case NoiseLaw::Constant: return 0.0;
    }
    return 0.0;
  }
};

struct SemesterOverride {
  int semester = 0;
  std::optional<double> a, alpha, b, alpha_close, c;
};

struct PriceModel {
  bool enabled = true;
  double initial_price = 100.0;
  double daily_log_vol = 0.01;  // sigma_d
  int substeps = 4;             // random-walk steps per minute; high/low are taken over them
};

struct Absence {
  std::size_t company = 0;
  int semester = 0;
};

struct GeneratorSpec {
  std::size_t n_companies = 30;
  std::size_t n_days = 126;  // per semester
  int n_semesters = 1;
  int first_year = 2004;
  std::uint64_t seed = 1;
  Intensity intensity;
  NoiseSpec noise;
  double day_factor_sigma_log = 0.0;  // 0 disables the shared day factor
  double missing_fraction = 0.0;      // probability that a cell is dropped
  std::vector<SemesterOverride> overrides;
  std::vector<Absence> absences;      // (company, semester) pairs with no bars at all
  PriceModel prices;
};

inline std::string synthetic_ticker(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "SYN%03zu", i);
  return buf;
}

/// Effective intensity of a semester after overrides.
inline Intensity semester_intensity(const GeneratorSpec& spec, int s) {
  Intensity in = spec.intensity;
  for (const auto& o : spec.overrides)
    if (o.semester == s) {
      in.a = o.a.value_or(in.a);
      in.alpha = o.alpha.value_or(in.alpha);
      in.b = o.b.value_or(in.b);
      in.alpha_close = o.alpha_close.value_or(in.alpha_close);
      in.c = o.c.value_or(in.c);
    }
  return in;
}

inline void validate_spec(const GeneratorSpec& spec) {
  auto bad = [](const std::string& why) { throw Error(ErrorKind::InvalidSpec, why); };
  if (spec.n_companies < 1) bad("n_companies must be positive");
  if (spec.n_days < 2) bad("n_days must be at least 2");
  if (spec.n_semesters < 1) bad("n_semesters must be positive");
  if (spec.noise.law == NoiseLaw::LogNormal && !(spec.noise.sigma_log >= 0.0)) bad("sigma_log must be >= 0");
  if (spec.noise.law == NoiseLaw::Gamma && !(spec.noise.shape > 0.0)) bad("gamma shape must be positive");
  if (!(spec.day_factor_sigma_log >= 0.0)) bad("day factor sigma must be >= 0");
  if (!(spec.missing_fraction >= 0.0 && spec.missing_fraction < 1.0)) bad("missing_fraction must lie in [0, 1)");
  if (spec.prices.enabled && (!(spec.prices.initial_price > 0.0) || !(spec.prices.daily_log_vol >= 0.0) ||
                              spec.prices.substeps < 1))
    bad("invalid price model");
  for (const auto& o : spec.overrides)
    if (o.semester < 1 || o.semester > spec.n_semesters) bad("override for unknown semester");
  for (const auto& a : spec.absences)
    if (a.company >= spec.n_companies || a.semester < 1 || a.semester > spec.n_semesters) bad("invalid absence");
  for (int s = 1; s <= spec.n_semesters; ++s) {
    const Intensity in = semester_intensity(spec, s);
    if (in.a < 0 || in.b < 0 || in.c < 0 || in.bump < 0) bad("amplitudes must be non-negative");
    if (in.a == 0 && in.b == 0 && in.c == 0 && in.bump == 0) bad("intensity is identically zero");
    if (!(in.alpha > 0.0) || !(in.alpha_close > 0.0)) bad("exponents must be positive");
    if (!(in.bump_width > 0.0)) bad("bump width must be positive");
  }
}

inline double intensity_at(const Intensity& in, double t) {
  double v = in.a * std::pow(t + 1.0, -in.alpha) + in.b * std::pow(391.0 - t, -in.alpha_close) + in.c;
  if (in.bump > 0.0) v += in.bump * std::exp(-(t - 270.0) * (t - 270.0) / (2.0 * in.bump_width * in.bump_width));
  return v;
}

/// Expected shares per minute at session minute t in semester s.
inline double analytic_profile(const GeneratorSpec& spec, int t, int s = 1) {
  if (t < kFirstMinute || t > kLastMinute) throw Error(ErrorKind::OutOfSession, "minute " + std::to_string(t));
  return intensity_at(semester_intensity(spec, s), t);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t company, std::uint64_t day) {
  return std::mt19937_64(splitmix64(splitmix64(splitmix64(seed) ^ company) ^ (day * 0x2545f4914f6cdd1dULL)));
}

/// The first n weekdays of semester s (1 = first half of first_year).
inline std::vector<Date> semester_business_days(int first_year, int s, std::size_t n) {
  using namespace std::chrono;
  const int y = first_year + (s - 1) / 2;
  const bool second_half = (s - 1) % 2 == 1;
  Date d{year{y}, second_half ? July : January, day{1}};
  const Date end{year{y}, second_half ? December : June, second_half ? day{31} : day{30}};
  std::vector<Date> out;
  while (out.size() < n && d <= end) {
    if (is_weekday(d)) out.push_back(d);
    d = add_days(d, 1);
  }
  if (out.size() < n)
    throw Error(ErrorKind::InvalidSpec, "semester " + std::to_string(s) + " has only " + std::to_string(out.size()) +
                                            " weekdays");
  return out;
}

struct ShapeTruth {
  double activity = 0.0;            // sum over the 391 minutes of Lambda
  double rescaled_activity = 0.0;   // integral of Lambda over x in [-1, 1]
  double concavity = 0.0;           // mean of d2 Lambda / dx2 over x in [-1, 1]
  double symmetry = 0.0;            // (second-half sum - first-half sum) / 391
};

struct GroundTruth {
  GeneratorSpec spec;
  std::vector<std::string> tickers;
  std::map<int, Intensity> intensity;       // per semester
  std::map<int, std::vector<double>> lambda;  // per semester, 391 values
  std::map<int, ShapeTruth> shape;
  std::vector<SemesterRange> semesters;
  std::vector<double> day_factor;  // realized shared day factors, one per panel day
};

inline ShapeTruth shape_truth(const Intensity& in) {
  ShapeTruth st;
  double early = 0.0, late = 0.0;
  for (int t = kFirstMinute; t <= kLastMinute; ++t) {
    const double v = intensity_at(in, t);
    st.activity += v;
    (t < 195 ? early : late) += v;
  }
  st.symmetry = (late - early) / kSessionMinutes;
  // composite Simpson on a fine grid in rescaled time
  constexpr int kPanels = 39100;
  const double h = 2.0 / kPanels;
  double acc = 0.0;
  for (int k = 0; k <= kPanels; ++k) {
    const double x = -1.0 + k * h;
    const double w = (k == 0 || k == kPanels) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    acc += w * intensity_at(in, 195.0 * (x + 1.0));
  }
  st.rescaled_activity = acc * h / 3.0;
  // mean second derivative over [-1, 1] = (f'(1) - f'(-1)) / 2, with d/dx = 195 d/dt
  auto dt = [&](double t) {
    double g = -in.a * in.alpha * std::pow(t + 1.0, -in.alpha - 1.0) +
               in.b * in.alpha_close * std::pow(391.0 - t, -in.alpha_close - 1.0);
    if (in.bump > 0.0) {
      const double w2 = in.bump_width * in.bump_width;
      g += -in.bump * (t - 270.0) / w2 * std::exp(-(t - 270.0) * (t - 270.0) / (2.0 * w2));
    }
    return g;
  };
  st.concavity = 195.0 * (dt(390.0) - dt(0.0)) / 2.0;
  return st;
}

struct SyntheticPanel {
  MinutePanel panel;
  SemesterIndex index;
  GroundTruth truth;
};

/// Deterministic for a given spec; `jobs` only changes the schedule.
inline SyntheticPanel generate_panel(const GeneratorSpec& spec, unsigned jobs = 1) {
  validate_spec(spec);
  GroundTruth truth;
  truth.spec = spec;
  std::vector<Date> days;
  std::vector<int> day_semester;
  for (int s = 1; s <= spec.n_semesters; ++s) {
    for (const auto& d : semester_business_days(spec.first_year, s, spec.n_days)) {
      days.push_back(d);
      day_semester.push_back(s);
    }
    const auto in = semester_intensity(spec, s);
    truth.intensity[s] = in;
    std::vector<double> lam(kSessionMinutes);
    for (int t = kFirstMinute; t <= kLastMinute; ++t) lam[t] = intensity_at(in, t);
    truth.lambda[s] = std::move(lam);
    truth.shape[s] = shape_truth(in);
  }
  for (std::size_t i = 0; i < spec.n_companies; ++i) truth.tickers.push_back(synthetic_ticker(i));
  std::set<std::pair<std::size_t, int>> absent;
  for (const auto& a : spec.absences) absent.insert({a.company, a.semester});

  // shared day factors, drawn per day from their own stream
  std::vector<double> day_factor(days.size(), 1.0);
  if (spec.day_factor_sigma_log > 0.0) {
    const double sd = spec.day_factor_sigma_log;
    for (std::size_t d = 0; d < days.size(); ++d) {
      auto eng = substream(spec.seed, 0xffffffffULL, d);
      std::normal_distribution<double> z;
      day_factor[d] = std::exp(sd * z(eng) - 0.5 * sd * sd);
    }
  }

  DensePanelWriter writer(truth.tickers, days);
  const auto& lambda = truth.lambda;
  parallel_for(spec.n_companies, jobs, [&](std::size_t c) {
    double price = spec.prices.initial_price;
    const double step_sd =
        spec.prices.daily_log_vol / std::sqrt(static_cast<double>(kSessionMinutes * spec.prices.substeps));
    for (std::size_t d = 0; d < days.size(); ++d) {
      const int s = day_semester[d];
      if (absent.count({c, s})) continue;
      auto eng = substream(spec.seed, c, d);
      std::normal_distribution<double> gauss;
      std::gamma_distribution<double> gamma(spec.noise.law == NoiseLaw::Gamma ? spec.noise.shape : 1.0,
                                            spec.noise.law == NoiseLaw::Gamma ? 1.0 / spec.noise.shape : 1.0);
      std::uniform_real_distribution<double> unif;
      const auto& lam = lambda.at(s);
      for (int t = kFirstMinute; t <= kLastMinute; ++t) {
        double eps = 1.0;
        switch (spec.noise.law) {
          case NoiseLaw::LogNormal: {
            const double sl = spec.noise.sigma_log;
            eps = std::exp(sl * gauss(eng) - 0.5 * sl * sl);
            break;
          }
          case NoiseLaw::Gamma: eps = gamma(eng); break;
          case NoiseLaw::Constant: break;
        }
        Ohlcv cell;
        cell.volume = std::round(lam[t] * day_factor[d] * eps);
        if (spec.prices.enabled) {
          cell.open = cell.high = cell.low = price;
          for (int k = 0; k < spec.prices.substeps; ++k) {
            price *= std::exp(step_sd * gauss(eng));
            cell.high = std::max(cell.high, price);
            cell.low = std::min(cell.low, price);
          }
          cell.close = price;
        } else {
          cell.open = cell.high = cell.low = cell.close = spec.prices.initial_price;
        }
        // drawn for every cell so streams stay aligned whatever missing_fraction is
        const bool drop = unif(eng) < spec.missing_fraction;
        if (!drop) writer.set(c, d, t, cell);
      }
    }
  });
  SyntheticPanel out;
  out.panel = std::move(writer).finish();
  truth.day_factor = std::move(day_factor);
  // label days by generator semester
  std::vector<SemesterRange> ranges = default_semester_boundaries(spec.first_year,
                                                                  spec.first_year + (spec.n_semesters - 1) / 2);
  ranges.resize(static_cast<std::size_t>(spec.n_semesters));
  truth.semesters = ranges;
  out.index = assign_semesters(out.panel, ranges);
  for (const auto& a : spec.absences) out.index.exclude(truth.tickers[a.company], a.semester);
  out.truth = std::move(truth);
  return out;
}

}  // namespace intraday

#endif  // INTRADAY_SYNTH_HPP
