#ifndef INTRADAY_STUDENT_T_HPP
#define INTRADAY_STUDENT_T_HPP

#include <cmath>
#include <limits>
#include <numbers>

#include "intraday/common.hpp"

namespace intraday {

namespace detail {

// Modified Lentz evaluation of the incomplete-beta continued fraction.
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw Error(ErrorKind::NoConvergence, "incomplete beta continued fraction");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorKind::InvalidArgument, "incomplete beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // the fraction converges fast for x below the mean a/(a+b); use the symmetry otherwise
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

inline double student_t_pdf(double t, double dof) {
  const double logc = std::lgamma((dof + 1.0) / 2.0) - std::lgamma(dof / 2.0) - 0.5 * std::log(dof * std::numbers::pi);
  return std::exp(logc - (dof + 1.0) / 2.0 * std::log1p(t * t / dof));
}

/// P(T <= t) for Student's t with real-valued dof.
inline double student_t_cdf(double t, double dof) {
  if (!(dof > 0.0)) throw Error(ErrorKind::InvalidArgument, "degrees of freedom must be positive");
  if (t == 0.0) return 0.5;
  const double x = dof / (dof + t * t);
  const double tail = 0.5 * incomplete_beta(dof / 2.0, 0.5, x);
  return t > 0.0 ? 1.0 - tail : tail;
}

/// Inverse of student_t_cdf: safeguarded Newton iteration inside a bisection bracket.
inline double student_t_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorKind::InvalidArgument, "probability must lie in (0, 1)");
  if (!(dof > 0.0)) throw Error(ErrorKind::InvalidArgument, "degrees of freedom must be positive");
  if (p == 0.5) return 0.0;
  if (p < 0.5) return -student_t_quantile(1.0 - p, dof);
  double lo = 0.0, hi = 1.0;
  while (student_t_cdf(hi, dof) < p) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) throw Error(ErrorKind::NoConvergence, "t quantile bracket");
  }
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = student_t_cdf(t, dof) - p;
    if (f == 0.0) return t;
    (f < 0.0 ? lo : hi) = t;
    double next = t - f / student_t_pdf(t, dof);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= 1e-15 * std::max(1.0, std::abs(t))) return next;
    t = next;
  }
  return t;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorKind::InvalidArgument, "probability must lie in (0, 1)");
  if (p == 0.5) return 0.0;
  if (p < 0.5) return -normal_quantile(1.0 - p);
  double lo = 0.0, hi = 1.0;
  while (normal_cdf(hi) < p) {
    lo = hi;
    hi *= 2.0;
  }
  double z = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = normal_cdf(z) - p;
    if (f == 0.0) return z;
    (f < 0.0 ? lo : hi) = z;
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    double next = z - f / pdf;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - z) <= 1e-15 * std::max(1.0, z)) return next;
    z = next;
  }
  return z;
}

}  // namespace intraday

#endif  // INTRADAY_STUDENT_T_HPP
