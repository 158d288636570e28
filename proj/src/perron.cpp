#include "hypstat/perron.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hypstat/group.hpp"

namespace hypstat {

void SparseMatrix::multiply(const std::vector<double>& x, std::vector<double>& y) const {
  y.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t p = row_start[i]; p < row_start[i + 1]; ++p) acc += val[p] * x[col[p]];
    y[i] = acc;
  }
}

void SparseMatrix::multiply_transpose(const std::vector<double>& x, std::vector<double>& y) const {
  y.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = row_start[i]; p < row_start[i + 1]; ++p) y[col[p]] += val[p] * x[i];
  }
}

namespace {

struct OneSided {
  double eigenvalue = 0.0;
  double width = 0.0;
  std::vector<double> vec;
  int iterations = 0;
  bool converged = false;
};

template <class Apply>
OneSided iterate(std::size_t n, Apply apply, double tol, int max_iterations) {
  OneSided out;
  std::vector<double> v(n, 1.0);
  std::vector<double> mv;
  double shift = 1.0;
  for (int it = 1; it <= max_iterations; ++it) {
    apply(v, mv);
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    bool positive = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (v[i] <= 0.0) {
        positive = false;
        break;
      }
      double q = mv[i] / v[i];
      lo = std::min(lo, q);
      hi = std::max(hi, q);
    }
    out.iterations = it;
    if (positive && hi > 0.0) {
      out.eigenvalue = 0.5 * (lo + hi);
      out.width = (hi - lo) / hi;
      shift = out.eigenvalue;
      if (out.width <= tol) {
        out.converged = true;
        out.vec = v;
        return out;
      }
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = mv[i] + shift * v[i];
      norm = std::max(norm, v[i]);
    }
    if (norm == 0.0 || !std::isfinite(norm)) break;
    for (double& x : v) x /= norm;
  }
  out.vec = v;
  return out;
}

}  // namespace

PerronResult perron(const SparseMatrix& m, double tol, int max_iterations) {
  PerronResult res;
  if (m.n == 0) throw Error("perron: empty matrix");
  auto right = iterate(m.n, [&](const std::vector<double>& x, std::vector<double>& y) { m.multiply(x, y); },
                       tol, max_iterations);
  auto left = iterate(
      m.n, [&](const std::vector<double>& x, std::vector<double>& y) { m.multiply_transpose(x, y); }, tol,
      max_iterations);
  res.eigenvalue = right.eigenvalue;
  res.right = std::move(right.vec);
  res.left = std::move(left.vec);
  res.iterations = right.iterations + left.iterations;
  res.converged = right.converged && left.converged;
  res.bracket_width = std::max(right.width, left.width);

  double dot = 0.0;
  for (std::size_t i = 0; i < m.n; ++i) dot += res.left[i] * res.right[i];
  if (dot > 0.0) {
    for (double& x : res.left) x /= dot;
  }
  std::vector<double> mv;
  m.multiply(res.right, mv);
  double rmax = *std::max_element(res.right.begin(), res.right.end());
  double r = 0.0;
  for (std::size_t i = 0; i < m.n; ++i) r = std::max(r, std::abs(mv[i] - res.eigenvalue * res.right[i]));
  res.residual = (res.eigenvalue > 0.0 && rmax > 0.0) ? r / (res.eigenvalue * rmax) : 0.0;
  return res;
}

}  // namespace hypstat
