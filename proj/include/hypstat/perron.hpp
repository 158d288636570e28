#pragma once

#include <cstddef>
#include <vector>

namespace hypstat {

// Nonnegative matrix in compressed-row form; row = source state.
struct SparseMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_start{0};
  std::vector<std::size_t> col;
  std::vector<double> val;

  std::size_t nnz() const { return col.size(); }
  void multiply(const std::vector<double>& x, std::vector<double>& y) const;            // y = M x
  void multiply_transpose(const std::vector<double>& x, std::vector<double>& y) const;  // y = M^T x
};

struct PerronResult {
  double eigenvalue = 0.0;
  std::vector<double> right;  // M r = eigenvalue r
  std::vector<double> left;   // l M = eigenvalue l, <l, r> = 1
  double residual = 0.0;      // max_i |(M r)_i - eigenvalue r_i| / eigenvalue, r normalized to max 1
  double bracket_width = 0.0; // relative Collatz-Wielandt bracket width at exit
  int iterations = 0;
  bool converged = false;
};

// Perron value and vectors of an irreducible nonnegative matrix. Iterates with
// M + cI (c > 0 tracks the current eigenvalue estimate), so periodic matrices
// converge; stops when the Collatz-Wielandt bracket is relatively tighter than tol.
PerronResult perron(const SparseMatrix& m, double tol = 1e-14, int max_iterations = 200000);

}  // namespace hypstat
