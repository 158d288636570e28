#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "hypstat/automaton.hpp"
#include "hypstat/metrics.hpp"

namespace hypstat {

// Vertex sequence of a path; a depth-k cylinder has k + 1 vertices.
using Cylinder = std::vector<VertexId>;

// Locally constant function on the 0-free paths of the coding.
struct CylinderPotential {
  int depth = 0;
  std::map<Cylinder, double> values;
  double resolution_error = 0.0;
  std::vector<Cylinder> flagged;  // cylinders without a 0-free continuation

  double value(const Cylinder& c) const;
  // Value on the cylinder formed by the first depth + 1 vertices of path[from...].
  double at(const std::vector<VertexId>& path, std::size_t from) const;
};

struct BusemannOptions {
  int depth = 4;
  int horizon = 12;
  int alternatives = 4;  // random continuations per cylinder, on top of the lex-largest one
  std::uint64_t seed = 1;
};

// Psi(x) = d(o, l_1...l_H) - d(o, l_2...l_H) on the lexicographically smallest
// 0-free continuation of each cylinder (l_i the edge labels), so that
// S_n Psi telescopes to d(o, ev_n) along *-paths. Cylinders start at * or at
// any ordinary vertex.
CylinderPotential busemann_potential(const MetricModel& d, const AutomaticStructure& a,
                                     const BusemannOptions& options = {});

// f * c, and f - g on shared cylinders.
CylinderPotential scale_potential(const CylinderPotential& f, double c);
CylinderPotential subtract_potentials(const CylinderPotential& f, const CylinderPotential& g);
CylinderPotential constant_potential(const AutomaticStructure& a, int depth, double c);

struct CoherenceReport {
  std::vector<int> lengths;             // n = 1..max_length
  std::vector<double> sup_defect;       // sup over samples of |S_n Psi - d(o, ev_n)|
  double slope = 0.0;                   // least-squares slope of sup_defect against n
  double max_defect = 0.0;
  int samples = 0;
};

// Samples random 0-free *-paths and compares Birkhoff sums of the potential
// with the metric along them.
CoherenceReport busemann_coherence(const MetricModel& d, const AutomaticStructure& a, const CylinderPotential& psi,
                                   int max_length, int samples, std::uint64_t seed);

}  // namespace hypstat
