#ifndef INTRADAY_LEAST_SQUARES_HPP
#define INTRADAY_LEAST_SQUARES_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "intraday/common.hpp"

namespace intraday {

/// Row-major dense matrix, just enough for small least-squares problems.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

struct LeastSquaresSolution {
  std::vector<double> coefficients;
  std::vector<double> standard_errors;
  std::vector<double> fitted;
  double rss = 0.0;
};

namespace detail {

/// In-place Householder QR of a (n x p, n > p). On return the strict upper triangle of a holds R
/// off the diagonal, `diag` holds R's diagonal, and every vector in `rhs` has been multiplied by Q^T.
inline void householder_qr(Matrix& a, std::vector<double>& diag, std::vector<std::vector<double>*> rhs) {
  const std::size_t n = a.rows(), p = a.cols();
  diag.assign(p, 0.0);
  for (std::size_t k = 0; k < p; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < n; ++i) norm += a(i, k) * a(i, k);
    norm = std::sqrt(norm);
    const double alpha = a(k, k) > 0 ? -norm : norm;
    diag[k] = alpha;
    if (norm == 0.0) continue;
    a(k, k) -= alpha;  // v = x - alpha e1, stored in column k
    double vnorm2 = 0.0;
    for (std::size_t i = k; i < n; ++i) vnorm2 += a(i, k) * a(i, k);
    if (vnorm2 == 0.0) continue;
    auto reflect = [&](auto&& at) {
      double dot = 0.0;
      for (std::size_t i = k; i < n; ++i) dot += a(i, k) * at(i);
      const double f = 2.0 * dot / vnorm2;
      for (std::size_t i = k; i < n; ++i) at(i) -= f * a(i, k);
    };
    for (std::size_t j = k + 1; j < p; ++j) reflect([&](std::size_t i) -> double& { return a(i, j); });
    for (auto* v : rhs) reflect([&](std::size_t i) -> double& { return (*v)[i]; });
  }
  double max_pivot = 0.0;
  for (double d : diag) max_pivot = std::max(max_pivot, std::abs(d));
  for (double d : diag)
    if (!(std::abs(d) > 1e-12 * max_pivot)) throw Error(ErrorKind::RankDeficient, "design matrix is rank deficient");
}

/// diag(R^{-1} R^{-T}) = diag((A^T A)^{-1}).
inline std::vector<double> inverse_gram_diagonal(const Matrix& a, const std::vector<double>& diag) {
  const std::size_t p = diag.size();
  auto r = [&](std::size_t i, std::size_t j) { return i == j ? diag[i] : a(i, j); };
  Matrix rinv(p, p);
  for (std::size_t c = 0; c < p; ++c) {
    for (std::size_t i = p; i-- > 0;) {
      double s = (i == c) ? 1.0 : 0.0;
      for (std::size_t j = i + 1; j < p; ++j) s -= r(i, j) * rinv(j, c);
      rinv(i, c) = s / diag[i];
    }
  }
  std::vector<double> out(p, 0.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) out[i] += rinv(i, j) * rinv(i, j);
  return out;
}

}  // namespace detail

/// Householder QR solution of min |A x - y|. Standard errors use s^2 = rss / (n - p).
/// Throws RankDeficient when a pivot of R is negligible relative to the largest one.
inline LeastSquaresSolution solve_least_squares(Matrix a, std::vector<double> y) {
  const std::size_t n = a.rows(), p = a.cols();
  if (y.size() != n) throw Error(ErrorKind::InvalidArgument, "design/response size mismatch");
  if (n <= p) throw Error(ErrorKind::TooFewPoints, std::to_string(n) + " points for " + std::to_string(p) + " coefficients");
  const Matrix original = a;
  const std::vector<double> y0 = y;
  std::vector<double> diag;
  detail::householder_qr(a, diag, {&y});

  LeastSquaresSolution sol;
  sol.coefficients.assign(p, 0.0);
  for (std::size_t i = p; i-- > 0;) {
    double s = y[i];
    for (std::size_t j = i + 1; j < p; ++j) s -= a(i, j) * sol.coefficients[j];
    sol.coefficients[i] = s / diag[i];
  }
  sol.fitted.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double f = 0.0;
    for (std::size_t j = 0; j < p; ++j) f += original(i, j) * sol.coefficients[j];
    sol.fitted[i] = f;
    sol.rss += (y0[i] - f) * (y0[i] - f);
  }
  const double s2 = sol.rss / static_cast<double>(n - p);
  const auto gram = detail::inverse_gram_diagonal(a, diag);
  sol.standard_errors.assign(p, 0.0);
  for (std::size_t i = 0; i < p; ++i) sol.standard_errors[i] = std::sqrt(s2 * gram[i]);
  return sol;
}

/// diag((J^T J)^{-1}) for a Jacobian J; scaled by s^2 this gives asymptotic parameter variances.
inline std::vector<double> inverse_gram_diagonal(Matrix j) {
  if (j.rows() <= j.cols()) throw Error(ErrorKind::TooFewPoints, "Jacobian has too few rows");
  std::vector<double> diag;
  detail::householder_qr(j, diag, {});
  return detail::inverse_gram_diagonal(j, diag);
}

/// Pearson correlation; 0 when either side has no spread.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) return 0.0;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Polynomial least squares y = sum_k c_k x^k. x is scaled by max|x| internally for conditioning;
/// the returned coefficients and errors are in the original units.
inline LeastSquaresSolution polynomial_fit(std::span<const double> x, std::span<const double> y, int order) {
  const std::size_t n = x.size(), p = static_cast<std::size_t>(order) + 1;
  double scale = 0.0;
  for (double v : x) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) scale = 1.0;
  Matrix a(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    double xs = x[i] / scale, pw = 1.0;
    for (std::size_t k = 0; k < p; ++k) {
      a(i, k) = pw;
      pw *= xs;
    }
  }
  auto sol = solve_least_squares(std::move(a), {y.begin(), y.end()});
  double f = 1.0;
  for (std::size_t k = 0; k < p; ++k) {
    sol.coefficients[k] /= f;
    sol.standard_errors[k] /= f;
    f *= scale;
  }
  return sol;
}

}  // namespace intraday

#endif  // INTRADAY_LEAST_SQUARES_HPP
