#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "hypstat/group.hpp"
#include "hypstat/metrics.hpp"

namespace hypstat {

// Finitely supported symmetric probability measure on a free group.
struct FiniteMeasure {
  FreeGroup group;
  std::map<GroupElement, double> weights;

  bool is_nearest_neighbour() const;  // support within the letters and the identity
  std::string canonical_text() const;  // stable serialization used for content hashing
};

// Checks positivity, total mass 1 (within 1e-9), symmetry (within 1e-12) and
// that the support generates the radius-2 ball as a semigroup.
void validate_measure(const FiniteMeasure& mu);

// Lines "weight <word> <p/q | decimal>"; '#' comments.
FiniteMeasure parse_measure(const FreeGroup& group, std::istream& in, const std::string& source = "<input>");
FiniteMeasure load_measure(const FreeGroup& group, const std::filesystem::path& path);
// Nearest-neighbour measure with mu(x) = mu(x^-1) = weights[i] for the i-th generator.
FiniteMeasure nearest_neighbour_measure(const FreeGroup& group, const std::vector<double>& generator_weights);

using SparseDistribution = std::unordered_map<GroupElement, double, GroupElementHash>;

// mu^{*n} for n = 0..N by exact propagation over reduced words.
// Throws when the reachable set exceeds max_states.
std::vector<SparseDistribution> convolution_powers(const FiniteMeasure& mu, int N, std::size_t max_states = 20'000'000);

struct GreenEntry {
  double value = 0.0;        // G(o, g)
  double error = 0.0;        // absolute error bound on value
  double distance = 0.0;     // -log(G(o,g) / G(o,o))
  double distance_error = 0.0;
  bool flagged = false;      // distance_error above the requested tolerance
};

enum class GreenRoute { first_passage, convolution };

struct GreenTable {
  GreenRoute route = GreenRoute::convolution;
  int truncation = 0;                  // N for the convolution route
  double spectral_radius_bound = 0.0;  // rho-hat
  double tolerance = 0.0;              // requested epsilon on distances
  double origin_value = 0.0;           // G(o,o)
  double origin_error = 0.0;
  // convolution route: explicit values on the support of mu^{*n}, n <= N
  std::map<GroupElement, GreenEntry> entries;
  // first-passage route: F(x) per letter with error bounds
  std::vector<double> first_passage;
  std::vector<double> first_passage_error;

  GreenEntry lookup(const FreeGroup& group, const GroupElement& g) const;
  std::size_t flagged_count() const;
};

struct GreenOptions {
  int truncation = 12;     // N for the convolution route
  double tolerance = 1e-6; // epsilon on d_mu values
  bool allow_first_passage = true;
};

struct GreenModel {
  MetricModel metric;
  GreenTable table;
};

// Green metric d_mu(o,g) = -log(G(o,g)/G(o,o)). Nearest-neighbour measures
// use the tree factorization G(o,g) = G(o,o) prod F(x_i) with the first-passage
// probabilities solved by monotone iteration; other measures sum mu^{*n}
// up to the truncation with the geometric tail rho-hat^{N+1}/(1-rho-hat).
GreenModel green_metric(const FiniteMeasure& mu, const GreenOptions& options = {});

// rho-hat = 1.05 * max_{even n in [N/2, N]} (mu^{*n}(o) (n/2)^{3/2})^{1/n}.
double walk_spectral_radius_bound(const std::vector<SparseDistribution>& powers);

void write_green_table(std::ostream& out, const GreenTable& table, const Alphabet& alphabet);
GreenTable read_green_table(std::istream& in, const Alphabet& alphabet);
MetricModel green_metric_from_table(const FiniteMeasure& mu, GreenTable table);

}  // namespace hypstat
