#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hypstat/group.hpp"
#include "hypstat/metrics.hpp"

namespace hypstat {

// Real matrix representation of a free group, one matrix per letter.
struct MatrixRep {
  Alphabet alphabet;
  int dim = 0;
  std::vector<Eigen::MatrixXd> generators;  // indexed by letter
};

// Checks shapes, rho(x) rho(x^-1) = I within 1e-12 and |det| = 1 within 1e-9.
void validate_rep(const MatrixRep& rep);

// "dim n", then "gen <letter>" followed by n rows of n numbers. Inverse letters
// without their own block get the matrix inverse.
MatrixRep parse_matrix_rep(const Alphabet& alphabet, std::istream& in, const std::string& source = "<input>");
MatrixRep load_matrix_rep(const Alphabet& alphabet, const std::filesystem::path& path);
void write_matrix_rep(std::ostream& out, const MatrixRep& rep);

// Rank-2 Schottky representation in SL2(R): a translates by 2*half_length along
// the unit semicircle, b by the same amount along the imaginary axis.
MatrixRep schottky_representation(double half_length = 1.0);

// log sigma_1(rho(g)) accumulated with a max-norm renormalization every 8 factors.
double log_top_singular_value(const MatrixRep& rep, std::span<const Letter> word);

// alpha(g) = log sigma_1(rho(g)) - log sigma_n(rho(g)), with sigma_n(A) = 1 / sigma_1(A^-1)
// so the small singular value never has to be resolved from a normalized product.
MetricModel hilbert_length(const MatrixRep& rep, int qi_radius = 8);

struct AnosovScan {
  int radius = 0;
  double min_ratio = 0.0;  // min alpha(g)/|g| over words of length radius
  std::string worst_word;
  bool collapsed = false;  // min_ratio below the threshold
};

// Flags singular-value collapse (sigma_1 ~ sigma_n on long words), the
// signature of a non-Anosov representation.
AnosovScan anosov_scan(const MatrixRep& rep, int radius, double threshold = 1e-3);

}  // namespace hypstat
