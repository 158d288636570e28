#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hypstat/automaton.hpp"
#include "hypstat/metrics.hpp"

namespace hypstat {

enum class EnumerationMode { exact, fast };
std::string to_string(EnumerationMode mode);

enum class CertificateStatus { pass, fail, heuristic };
std::string to_string(CertificateStatus status);

struct Certificate {
  CertificateStatus status = CertificateStatus::heuristic;
  int word_radius = 0;      // R (exact mode)
  double lower_envelope = 0.0;  // R / L - C with the inflated constants
  std::string witness;      // length-R word with d < T, if any
};

// {g : d(o,g) < T} as label words of 0-free *-paths, sorted by (d, word).
class BallEnumeration {
 public:
  struct Row {
    std::uint64_t offset = 0;
    std::uint32_t length = 0;
    double d = 0.0;
    double d_star = 0.0;
  };

  double T = 0.0;
  EnumerationMode mode = EnumerationMode::fast;
  Certificate certificate;
  double seconds = 0.0;
  bool has_d_star = false;

  std::size_t size() const { return rows_.size(); }
  const Row& row(std::size_t i) const { return rows_[i]; }
  std::span<const Letter> word(std::size_t i) const {
    return {arena_.data() + rows_[i].offset, rows_[i].length};
  }
  // Number of rows with d < t (a prefix, since rows are sorted by d).
  std::size_t count_below(double t) const;

  void add(std::span<const Letter> word, double d, double d_star);
  void sort_canonical();

 private:
  std::vector<Letter> arena_;
  std::vector<Row> rows_;
};

struct BallOptions {
  EnumerationMode mode = EnumerationMode::fast;
  double slack = 0.0;             // fast-mode pruning slack
  double qi_inflation = 1.25;     // exact mode: (L, C) inflation
  int max_word_radius = 40;
  std::size_t max_elements = 50'000'000;
};

// d_star is evaluated on every listed element when given. Exact mode needs the
// quasi-isometry envelope of d.
BallEnumeration enumerate_ball(const AutomaticStructure& a, const MetricModel& d, const MetricModel* d_star, double T,
                               const BallOptions& options = {});

// Fast-mode cardinality of {d < T} without storing the elements.
std::size_t count_ball(const AutomaticStructure& a, const MetricModel& d, double T, double slack = 0.0,
                       int max_word_radius = 40);

// Lossless binary image used by the enumeration cache.
void write_ball_binary(std::ostream& out, const BallEnumeration& ball);
BallEnumeration read_ball_binary(std::istream& in);

void write_ball_csv(std::ostream& out, const BallEnumeration& ball, const Alphabet& alphabet,
                    const MetricModel* d = nullptr, const MetricModel* d_star = nullptr,
                    const FreeGroup* group = nullptr);

// Counting-function samples N(T) for each T of the grid from one enumeration.
std::vector<double> ball_counts(const BallEnumeration& ball, const std::vector<double>& T_grid);

struct GrowthFit {
  double rate = 0.0;
  double band = 0.0;       // 2 * standard error of the slope
  double intercept = 0.0;
  std::vector<double> T;
  std::vector<double> values;
  std::vector<double> fitted;  // intercept + rate * T on the whole grid
};

// Least-squares slope of log(values) against T. Counting functions oscillate
// with bounded amplitude (a staircase for arithmetic metrics), so feed a dense
// grid spanning many oscillations, e.g. fit_grid.
GrowthFit growth_rate(const std::vector<double>& T, const std::vector<double>& values);

struct OrbitalReport {
  std::vector<double> normalized;  // e^{-vT} N(T)
  double oscillation = 0.0;         // relative (max - min) / mean over the last third
  bool plateau = false;
};

OrbitalReport orbital_constant(const std::vector<double>& T, const std::vector<double>& counts, double rate,
                               double tolerance = 0.05);

struct CdfSample {
  double t = 0.0;
  double empirical = 0.0;
  double reference = 0.0;
};

struct CenteredStatistics {
  std::vector<double> moments;  // E[Z^p], p = 1..4
  double ks = 0.0;
  std::vector<CdfSample> cdf;   // 201 points on [-5, 5]
};

struct MomentReport {
  double T = 0.0;
  std::size_t count = 0;
  double tau = 0.0;             // reference tau
  double sigma2 = 0.0;          // reference sigma^2
  double tau_hat = 0.0;         // (1/N) sum d* / T
  double tau_ratio = 0.0;       // sum d* / sum d
  CenteredStatistics level;     // Z = (d* - tau T)/sqrt(T)
  CenteredStatistics distortion;  // Z = (d* - tau d)/sqrt(T)
  std::vector<double> targets;  // (0, sigma^2, 0, 3 sigma^4)
  double variance_statistic = 0.0;  // (1/N) sum (d* - tau T)^2 / T
  double variance_identity_error = 0.0;  // |N m_2 - sum (d* - tau T)^2 / T| / max(1, N m_2)
};

// Statistics over the sub-ball d < T of an enumeration.
MomentReport clt_report(const BallEnumeration& ball, double T, double tau, double sigma2);

// Normal (or point-mass, sigma2 <= 0) CDF.
double normal_cdf(double x, double sigma2);
// sup_t |F_emp - F_ref| evaluated at every jump of the sorted sample.
double ks_distance(std::vector<double> sample, double sigma2);

struct SimilarityReport {
  bool similar = false;
  double ratio_min = 0.0;
  double ratio_max = 0.0;
  double spread = 0.0;
  double bracket_allowance = 0.0;
  double tau_estimate = 0.0;   // mean ratio
  int samples = 0;
  int wide_brackets = 0;
};

// Ratios l_{d*}/l_d over random cyclically reduced words of lengths 2..max_length.
SimilarityReport rough_similarity_test(const MetricModel& d, const MetricModel& d_star, const FreeGroup& group,
                                       int samples, std::uint64_t seed, double tolerance = 1e-8,
                                       int max_length = 10, int max_power = 16);

struct DefectPoint {
  double T = 0.0;
  std::size_t count = 0;
  std::size_t defective = 0;
  std::size_t inconclusive = 0;
  double fraction = 0.0;
};

// Fraction of the ball d < T with |d(o,g) - l_d(g)| > T^{exponent}.
DefectPoint translation_defect_fraction(const BallEnumeration& ball, const MetricModel& d, const FreeGroup& group,
                                        double T, double exponent = 1.0 / 3.0);

// Growth rate of sum_{d < T} e^{-s d*} over the grid.
GrowthFit empirical_manhattan(const BallEnumeration& ball, const std::vector<double>& T_grid, double s);

// 301 evenly spaced points on [T_max / 3, T_max] for growth fits.
std::vector<double> fit_grid(double T_max, int points = 301);

// Evenly spaced T values ending at T_max (geometrically spaced ball sizes).
std::vector<double> default_T_grid(double T_max, double growth_rate, int points = 8);

}  // namespace hypstat
