#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hypstat/automaton.hpp"
#include "hypstat/busemann.hpp"
#include "hypstat/perron.hpp"

namespace hypstat {

// Higher-block recoding of one component: states are k-vertex paths inside the
// component, transitions are (k+1)-vertex paths (depth-k cylinders).
struct BlockSystem {
  int component = 0;
  int k = 1;
  std::vector<std::vector<VertexId>> blocks;  // sorted
  std::vector<std::size_t> row_start{0};      // transitions grouped by source block
  std::vector<std::size_t> target;
  std::vector<Cylinder> cylinders;            // per transition

  std::size_t state_count() const { return blocks.size(); }
  std::size_t transition_count() const { return target.size(); }
  std::size_t source(std::size_t transition) const;
  // Number of block paths with n transitions.
  std::uint64_t path_count(int n) const;
};

BlockSystem refine_to_blocks(const AutomaticStructure& a, const ComponentInfo& component, int k);

// Potential values per transition.
std::vector<double> transition_values(const BlockSystem& blocks, const CylinderPotential& f);

// exp(f) per transition.
SparseMatrix weighted_transfer(const BlockSystem& blocks, const std::vector<double>& f);

struct TransferMatrix {
  int component = 0;
  double s = 0.0;
  double t = 0.0;
  SparseMatrix matrix;
};

// Weights exp(-s Psi_d - t Phi) per block transition.
TransferMatrix build_transfer(const BlockSystem& blocks, const CylinderPotential& psi_d, const CylinderPotential& phi,
                              double s, double t);

struct PressurePoint {
  int component = 0;
  double s = 0.0;
  double t = 0.0;
  double value = 0.0;       // P = log eigenvalue
  double eigenvalue = 0.0;
  double residual = 0.0;
  std::vector<double> left;
  std::vector<double> right;
};

PressurePoint pressure(const TransferMatrix& m, double tol = 1e-14);
// Pressure of the potential f (given per transition).
PressurePoint pressure_of(const BlockSystem& blocks, const std::vector<double>& f, double tol = 1e-14);

struct EquilibriumMeasure {
  std::vector<double> state;       // pi_i
  std::vector<double> kernel;      // P_ij per transition
  std::vector<double> transition;  // pi_i P_ij per transition
  double entropy = 0.0;
  double stationarity_error = 0.0;  // max_j |sum_i pi_i P_ij - pi_j|
};

// pi_i = l_i r_i, P_ij = M_ij r_j / (lambda r_i).
EquilibriumMeasure equilibrium_measure(const BlockSystem& blocks, const SparseMatrix& m, const PressurePoint& p);
double integrate(const EquilibriumMeasure& mu, const std::vector<double>& f);
// lim (1/n) Var(S_n f) under the stationary chain, by the autocovariance series.
// Periodic chains are handled by averaging partial sums over the period.
double asymptotic_variance(const BlockSystem& blocks, const EquilibriumMeasure& mu, const std::vector<double>& f,
                           int max_lag = 200000);

struct AgreementPoint {
  double s = 0.0;
  double t = 0.0;
  std::vector<double> pressures;  // per word-maximal component
  double discrepancy = 0.0;
};

struct AgreementReport {
  std::vector<int> components;
  std::vector<AgreementPoint> points;
  double max_discrepancy = 0.0;
  double tolerance = 0.0;
  bool passed = true;
};

AgreementReport pressure_agreement(const AutomaticStructure& a, const CylinderPotential& psi_d,
                                   const CylinderPotential& phi, const std::vector<std::pair<double, double>>& grid,
                                   double tolerance = 1e-8);

struct Normalization {
  double growth_rate = 1.0;  // v_d
  double tau_raw = 1.0;
  double scale_d = 1.0;      // d' = scale_d * d
  double scale_d_star = 1.0; // d*' = scale_d_star * d*
  // sigma^2 in user units from sigma^2 of the normalized pair.
  double sigma2_to_user(double sigma2_normalized) const;
  double sigma2_to_normalized(double sigma2_user) const;
  std::string text() const;
};

Normalization normalize_pair(double growth_rate, double tau_raw);

// Pair of potentials on one block system.
class PotentialPair {
 public:
  PotentialPair(BlockSystem blocks, const CylinderPotential& psi_d, const CylinderPotential& psi_star);

  const BlockSystem& blocks() const { return blocks_; }
  const std::vector<double>& psi_d() const { return psi_d_; }
  const std::vector<double>& psi_star() const { return psi_star_; }
  double resolution_error() const { return resolution_error_; }

  // P(-a Psi_* - b Psi_d).
  double pressure(double a, double b) const;
  PressurePoint pressure_point(double a, double b) const;
  // Root t of P(-s Psi_* - t Psi_d) = 0.
  double theta(double s) const;
  double growth_rate_d() const { return theta(0.0); }
  // Root s of P(-s Psi_*) = 0.
  double growth_rate_star() const;

 private:
  BlockSystem blocks_;
  std::vector<double> psi_d_;
  std::vector<double> psi_star_;
  double resolution_error_ = 0.0;
};

struct ManhattanSample {
  double s = 0.0;
  double theta = 0.0;
};

struct ManhattanCurve {
  std::vector<ManhattanSample> samples;
  double theta_prime = 0.0;   // curve route
  double theta_second = 0.0;  // curve route
  double max_chord_deviation = 0.0;
  double min_second_difference = 0.0;
};

ManhattanCurve manhattan_curve(const PotentialPair& pair, const std::vector<double>& s_grid);

struct DistortionConstants {
  double growth_d = 0.0;       // v_d
  double growth_star = 0.0;    // v_{d*}
  double tau = 0.0;            // spectral route
  double sigma2 = 0.0;         // spectral route (user units)
  double tau_curve = 0.0;      // -theta'(0) by Richardson-extrapolated differences
  double sigma2_curve = 0.0;   // theta''(0)
  double sigma2_pressure_fd = 0.0;  // second differences of P in t, cross-check
  double tau_error = 0.0;      // error bar from potential resolution
  double sigma2_discrepancy = 0.0;
  double entropy = 0.0;
  double integral_psi_d = 0.0;
  Normalization normalization;
  bool routes_agree = true;    // |sigma2 - sigma2_curve| <= max(1e-4, 2% rel)
};

DistortionConstants distortion_constants(const PotentialPair& pair);

// CSV exports.
void write_pressure_csv(std::ostream& out, const std::vector<PressurePoint>& points);
void write_manhattan_csv(std::ostream& out, const ManhattanCurve& curve, const std::string& route);

}  // namespace hypstat
