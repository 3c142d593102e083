#ifndef INTRADAY_PROFILE_FITS_HPP
#define INTRADAY_PROFILE_FITS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "intraday/common.hpp"
#include "intraday/least_squares.hpp"

namespace intraday {

enum class Model { OpeningPowerLaw, ClosingPowerLaw, Quartic, KurtosisMorning, KurtosisAfternoon, Linear, Parabola };

inline const char* to_string(Model m) {
  switch (m) {
    case Model::OpeningPowerLaw: return "OpeningPowerLaw";
    case Model::ClosingPowerLaw: return "ClosingPowerLaw";
    case Model::Quartic: return "Quartic";
    case Model::KurtosisMorning: return "KurtosisMorning";
    case Model::KurtosisAfternoon: return "KurtosisAfternoon";
    case Model::Linear: return "Linear";
    case Model::Parabola: return "Parabola";
  }
  return "Unknown";
}

struct Window {
  int lo = kFirstMinute;
  int hi = kLastMinute;
  friend bool operator==(const Window&, const Window&) = default;
};

struct FitResult {
  Model model = Model::Linear;
  std::vector<std::string> names;
  std::vector<double> coefficients;
  std::vector<double> standard_errors;
  double r = 0.0;                // correlation coefficient
  std::optional<Window> window;  // absent for fits that are not over session minutes
  std::size_t n_points = 0;
  double rss = 0.0;
  std::map<std::string, double> extras;  // model-specific diagnostics (raw slope, starts tried, ...)

  double coefficient(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return coefficients[i];
    throw Error(ErrorKind::InvalidArgument, "no coefficient named " + std::string(name));
  }
  double standard_error(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return standard_errors[i];
    throw Error(ErrorKind::InvalidArgument, "no coefficient named " + std::string(name));
  }
};

struct FitWindows {
  Window opening{1, 100};
  Window closing{331, 390};
  Window kurtosis_morning{1, 99};
  Window kurtosis_afternoon{291, 390};
  double opening_time_offset = 0.0;  // fit log(t + offset) instead of log t
};

inline void check_window(const Window& w) {
  if (w.lo < kFirstMinute || w.hi > kLastMinute || w.lo >= w.hi)
    throw Error(ErrorKind::InvalidArgument,
                "window [" + std::to_string(w.lo) + ", " + std::to_string(w.hi) + "] outside the session");
}

// ---------------------------------------------------------------------------
// Power laws

namespace detail {

/// log y = intercept + slope * log(abscissa(t)); exponent reported as -slope.
template <typename Abscissa>
FitResult log_log_fit(const MinuteSeries& profile, Window w, Model model, Abscissa abscissa) {
  check_window(w);
  std::vector<double> lx, ly;
  std::vector<int> bad;
  for (int t = w.lo; t <= w.hi; ++t) {
    if (t >= static_cast<int>(profile.size()) || !profile[t]) continue;
    const double v = *profile[t];
    const double x = abscissa(t);
    if (!(v > 0.0) || !(x > 0.0)) {
      bad.push_back(t);
      continue;
    }
    lx.push_back(std::log(x));
    ly.push_back(std::log(v));
  }
  if (!bad.empty()) {
    std::string list;
    for (std::size_t i = 0; i < bad.size() && i < 10; ++i) list += (i ? "," : "") + std::to_string(bad[i]);
    if (bad.size() > 10) list += ",...";
    throw Error(ErrorKind::NonPositiveValue, "non-positive values at minutes " + list);
  }
  if (lx.size() < 5) throw Error(ErrorKind::WindowTooSmall, std::to_string(lx.size()) + " usable points in window");
  auto sol = polynomial_fit(lx, ly, 1);
  FitResult f;
  f.model = model;
  f.names = {"exponent", "log_amplitude"};
  f.coefficients = {-sol.coefficients[1], sol.coefficients[0]};
  f.standard_errors = {sol.standard_errors[1], sol.standard_errors[0]};
  f.r = pearson(lx, ly);
  f.window = w;
  f.n_points = lx.size();
  f.rss = sol.rss;
  f.extras["slope"] = sol.coefficients[1];
  return f;
}

}  // namespace detail

/// mean ~ t^(-alpha) after the open; alpha > 0 for a decaying profile.
inline FitResult fit_opening_powerlaw(const MinuteSeries& profile, Window w = {1, 100}, double time_offset = 0.0) {
  auto f = detail::log_log_fit(profile, w, Model::OpeningPowerLaw, [&](int t) { return t + time_offset; });
  f.extras["time_offset"] = time_offset;
  return f;
}

/// mean ~ (391 - t)^(-alpha') into the close; alpha' > 0 for a profile rising towards the bell.
inline FitResult fit_closing_powerlaw(const MinuteSeries& profile, Window w = {331, 390}) {
  return detail::log_log_fit(profile, w, Model::ClosingPowerLaw, [](int t) { return 391.0 - t; });
}

/// Minutes for mean ~ t^(-alpha) to fall to half its first-minute value.
inline double half_volume_time(double alpha) {
  if (!(alpha > 0.0)) throw Error(ErrorKind::NonPositiveExponent, "alpha must be positive");
  return std::pow(2.0, 1.0 / alpha);
}

// ---------------------------------------------------------------------------
// Quartic profile and shape functionals

/// Rescaled session time in [-1, 1].
inline double rescaled_time(double t) { return t / 195.0 - 1.0; }

inline double quartic_value(const std::array<double, 5>& c, double x) {
  return c[0] + x * (c[1] + x * (c[2] + x * (c[3] + x * c[4])));
}

inline double quartic_second_derivative(const std::array<double, 5>& c, double x) {
  return 2.0 * c[2] + 6.0 * c[3] * x + 12.0 * c[4] * x * x;
}

inline FitResult fit_polynomial_profile(const MinuteSeries& profile, int order, Model model) {
  std::vector<double> xs, ys;
  int lo = kLastMinute, hi = kFirstMinute;
  bool first_half = false, second_half = false;
  for (int t = kFirstMinute; t <= kLastMinute && t < static_cast<int>(profile.size()); ++t) {
    if (!profile[t]) continue;
    xs.push_back(rescaled_time(t));
    ys.push_back(*profile[t]);
    lo = std::min(lo, t);
    hi = std::max(hi, t);
    (t < 195 ? first_half : second_half) = true;
  }
  if (xs.size() < static_cast<std::size_t>(order) + 2)
    throw Error(ErrorKind::TooFewPoints, std::to_string(xs.size()) + " present minutes");
  if (!first_half || !second_half) throw Error(ErrorKind::InsufficientSpan, "all present minutes lie in one half");
  auto sol = polynomial_fit(xs, ys, order);
  FitResult f;
  f.model = model;
  for (int k = 0; k <= order; ++k) f.names.push_back("c" + std::to_string(k));
  f.coefficients = sol.coefficients;
  f.standard_errors = sol.standard_errors;
  f.r = pearson(sol.fitted, ys);
  f.window = Window{lo, hi};
  f.n_points = xs.size();
  f.rss = sol.rss;
  return f;
}

/// Least-squares quartic in x = t/195 - 1; coefficients c0..c4 are in rescaled-time units.
inline FitResult fit_quartic(const MinuteSeries& profile) {
  return fit_polynomial_profile(profile, 4, Model::Quartic);
}

struct ShapeFunctionals {
  double concavity = 0.0;
  double symmetry = 0.0;
  std::array<double, 5> coefficients{};
};

inline std::array<double, 5> quartic_coefficients(const FitResult& fit) {
  if (fit.model != Model::Quartic || fit.coefficients.size() != 5)
    throw Error(ErrorKind::InvalidArgument, "shape functionals need a quartic fit");
  std::array<double, 5> c{};
  std::copy(fit.coefficients.begin(), fit.coefficients.end(), c.begin());
  return c;
}

/// Concavity: mean second derivative (rescaled time) over the 391 session minutes.
/// Symmetry: (second-half sum - first-half sum) / 391, minute 195 counted in the second half.
inline ShapeFunctionals shape_functionals(const std::array<double, 5>& c) {
  ShapeFunctionals out;
  out.coefficients = c;
  double curv = 0.0, early = 0.0, late = 0.0;
  for (int t = kFirstMinute; t <= kLastMinute; ++t) {
    const double x = rescaled_time(t);
    curv += quartic_second_derivative(c, x);
    (t < 195 ? early : late) += quartic_value(c, x);
  }
  out.concavity = curv / kSessionMinutes;
  out.symmetry = (late - early) / kSessionMinutes;
  return out;
}

inline ShapeFunctionals shape_functionals(const FitResult& quartic) {
  return shape_functionals(quartic_coefficients(quartic));
}

// ---------------------------------------------------------------------------
// Kurtosis relaxation

inline FitResult fit_kurtosis_morning(const MinuteSeries& kappa, Window w = {1, 99}) {
  return detail::log_log_fit(kappa, w, Model::KurtosisMorning, [](int t) { return static_cast<double>(t); });
}

struct NonlinearOptions {
  std::vector<double> exponent_starts{0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
  int max_iterations = 200;
  double relative_tolerance = 1e-10;
};

/// kappa(t) = A - B (t - 290)^beta over the afternoon window, by multi-start Gauss-Newton with step halving.
/// Each exponent start is tried with the linear least-squares (A, B) for that exponent and with B's sign flipped.
inline FitResult fit_kurtosis_afternoon(const MinuteSeries& kappa, Window w = {291, 390},
                                        const NonlinearOptions& opt = {}) {
  check_window(w);
  constexpr int origin = 290;
  if (w.lo <= origin) throw Error(ErrorKind::InvalidArgument, "afternoon window must start after minute 290");
  std::vector<double> u, y;
  for (int t = w.lo; t <= w.hi && t < static_cast<int>(kappa.size()); ++t) {
    if (!kappa[t]) continue;
    u.push_back(static_cast<double>(t - origin));
    y.push_back(*kappa[t]);
  }
  const std::size_t n = u.size();
  if (n < 8) throw Error(ErrorKind::TooFewPoints, std::to_string(n) + " afternoon points (need 8)");
  std::vector<double> logu(n);
  for (std::size_t i = 0; i < n; ++i) logu[i] = std::log(u[i]);

  auto residual_ss = [&](const std::array<double, 3>& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = y[i] - (p[0] - p[1] * std::exp(p[2] * logu[i]));
      s += e * e;
    }
    return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
  };
  auto jacobian = [&](const std::array<double, 3>& p) {
    Matrix j(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
      const double pw = std::exp(p[2] * logu[i]);
      j(i, 0) = 1.0;
      j(i, 1) = -pw;
      j(i, 2) = -p[1] * pw * logu[i];
    }
    return j;
  };
  double y_scale = 0.0;
  for (double v : y) y_scale += v * v;

  struct Run {
    std::array<double, 3> p{};
    double rss = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
  };
  auto refine = [&](std::array<double, 3> p) {
    Run run;
    run.p = p;
    run.rss = residual_ss(p);
    if (!std::isfinite(run.rss)) return run;
    for (int it = 0; it < opt.max_iterations; ++it) {
      run.iterations = it + 1;
      if (run.rss <= 1e-28 * y_scale) {
        run.converged = true;
        break;
      }
      std::vector<double> res(n);
      for (std::size_t i = 0; i < n; ++i) res[i] = y[i] - (run.p[0] - run.p[1] * std::exp(run.p[2] * logu[i]));
      std::vector<double> step;
      try {
        step = solve_least_squares(jacobian(run.p), res).coefficients;
      } catch (const Error&) {
        break;  // singular Jacobian (B ~ 0): this start is done
      }
      double lambda = 1.0;
      bool improved = false;
      for (int h = 0; h < 40; ++h, lambda *= 0.5) {
        std::array<double, 3> trial{run.p[0] + lambda * step[0], run.p[1] + lambda * step[1],
                                    run.p[2] + lambda * step[2]};
        const double r = residual_ss(trial);
        if (r < run.rss) {
          const double change = (run.rss - r) / run.rss;
          run.p = trial;
          run.rss = r;
          improved = true;
          if (change < opt.relative_tolerance) run.converged = true;
          break;
        }
      }
      if (!improved) {
        run.converged = true;  // no descent along the Gauss-Newton direction: stationary point
        break;
      }
      if (run.converged) break;
    }
    return run;
  };

  Run best;
  int starts = 0;
  for (double beta0 : opt.exponent_starts) {
    // linear in (A, B) for a fixed exponent
    Matrix a(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      a(i, 0) = 1.0;
      a(i, 1) = -std::exp(beta0 * logu[i]);
    }
    std::array<double, 2> ab{0.0, 0.0};
    try {
      auto sol = solve_least_squares(std::move(a), y);
      ab = {sol.coefficients[0], sol.coefficients[1]};
    } catch (const Error&) {
    }
    for (double sign : {1.0, -1.0}) {
      ++starts;
      const double b0 = ab[1] != 0.0 ? sign * ab[1] : sign * 1e-3;
      Run run = refine({ab[0], b0, beta0});
      if (run.rss < best.rss) best = run;
    }
  }
  if (!std::isfinite(best.rss) || !best.converged)
    throw Error(ErrorKind::NoConvergence, "afternoon kurtosis fit: best rss " + fmt_double(best.rss) + " after " +
                                              std::to_string(starts) + " starts");

  FitResult f;
  f.model = Model::KurtosisAfternoon;
  f.names = {"A", "B", "beta_a"};
  f.coefficients = {best.p[0], best.p[1], best.p[2]};
  f.window = w;
  f.n_points = n;
  f.rss = best.rss;
  std::vector<double> fitted(n);
  for (std::size_t i = 0; i < n; ++i) fitted[i] = best.p[0] - best.p[1] * std::exp(best.p[2] * logu[i]);
  f.r = pearson(fitted, y);
  // asymptotic errors from the Jacobian at the optimum
  f.standard_errors.assign(3, std::numeric_limits<double>::quiet_NaN());
  try {
    const auto gram = inverse_gram_diagonal(jacobian(best.p));
    const double s2 = best.rss / static_cast<double>(n - 3);
    for (std::size_t k = 0; k < 3; ++k) f.standard_errors[k] = std::sqrt(s2 * gram[k]);
  } catch (const Error&) {
  }
  f.extras["starts_tried"] = starts;
  f.extras["iterations"] = best.iterations;
  return f;
}

struct KurtosisRelaxation {
  FitResult morning;
  FitResult afternoon;
};

inline KurtosisRelaxation fit_kurtosis_relaxation(const MinuteSeries& kappa, const FitWindows& windows = {},
                                                  const NonlinearOptions& opt = {}) {
  return {fit_kurtosis_morning(kappa, windows.kurtosis_morning),
          fit_kurtosis_afternoon(kappa, windows.kurtosis_afternoon, opt)};
}

// ---------------------------------------------------------------------------
// Scatter relations between two profiles

enum class SessionSplit { Morning, Afternoon, Whole };

inline const char* to_string(SessionSplit s) {
  switch (s) {
    case SessionSplit::Morning: return "morning";
    case SessionSplit::Afternoon: return "afternoon";
    case SessionSplit::Whole: return "whole";
  }
  return "?";
}

inline Window split_window(SessionSplit s) {
  switch (s) {
    case SessionSplit::Morning: return {0, 194};
    case SessionSplit::Afternoon: return {195, 390};
    case SessionSplit::Whole: return {0, 390};
  }
  return {0, 390};
}

/// Ordinary least-squares regression of y on x with coefficient names c0, c1, ...
/// R is the signed x-y correlation for order 1, the fitted-observed correlation otherwise.
inline FitResult polynomial_regression(std::span<const double> x, std::span<const double> y, int order) {
  if (order < 1 || order > 2) throw Error(ErrorKind::InvalidArgument, "order must be 1 or 2");
  if (x.size() < static_cast<std::size_t>(order) + 2)
    throw Error(ErrorKind::TooFewPoints, std::to_string(x.size()) + " points for order " + std::to_string(order));
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }))
    throw Error(ErrorKind::DegenerateX, "all abscissae are equal");
  auto sol = polynomial_fit(x, y, order);
  FitResult f;
  f.model = order == 1 ? Model::Linear : Model::Parabola;
  for (int k = 0; k <= order; ++k) f.names.push_back("c" + std::to_string(k));
  f.coefficients = sol.coefficients;
  f.standard_errors = sol.standard_errors;
  f.r = order == 1 ? pearson(x, y) : pearson(sol.fitted, y);
  f.n_points = x.size();
  f.rss = sol.rss;
  return f;
}

inline FitResult scatter_relation(const MinuteSeries& x_profile, const MinuteSeries& y_profile, SessionSplit split,
                                  int order) {
  const Window w = split_window(split);
  std::vector<double> xs, ys;
  for (int t = w.lo; t <= w.hi; ++t) {
    if (t >= static_cast<int>(x_profile.size()) || t >= static_cast<int>(y_profile.size())) break;
    if (x_profile[t] && y_profile[t]) {
      xs.push_back(*x_profile[t]);
      ys.push_back(*y_profile[t]);
    }
  }
  auto f = polynomial_regression(xs, ys, order);
  f.window = w;
  return f;
}

}  // namespace intraday

#endif  // INTRADAY_PROFILE_FITS_HPP
