#include "hypstat/busemann.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace hypstat {

double CylinderPotential::value(const Cylinder& c) const {
  auto it = values.find(c);
  if (it == values.end()) throw Error("cylinder potential: no value for the requested cylinder");
  return it->second;
}

double CylinderPotential::at(const std::vector<VertexId>& path, std::size_t from) const {
  if (from + static_cast<std::size_t>(depth) >= path.size()) throw Error("cylinder potential: path too short");
  Cylinder c(path.begin() + static_cast<std::ptrdiff_t>(from),
             path.begin() + static_cast<std::ptrdiff_t>(from) + depth + 1);
  return value(c);
}

namespace {

// How far a 0-free path can be extended from each vertex (-1 = forever).
std::vector<long> extension_reach(const AutomaticStructure& a) {
  const std::size_t n = a.vertex_count();
  std::vector<long> reach(n, -2);
  std::vector<ComponentInfo> comps = scc_decomposition(a);
  std::vector<int> comp_of(n, -1);
  for (const auto& c : comps) {
    for (VertexId v : c.vertices) comp_of[v] = c.id;
    if (c.has_cycle)
      for (VertexId v : c.vertices) reach[v] = -1;
  }
  std::function<long(VertexId)> visit = [&](VertexId v) -> long {
    if (reach[v] != -2) return reach[v];
    long best = 0;
    for (std::size_t ei : a.proper_out_edges(v)) {
      long r = visit(a.edges()[ei].target);
      if (r == -1) {
        best = -1;
        break;
      }
      best = std::max(best, r + 1);
    }
    reach[v] = best;
    return best;
  };
  for (VertexId v = 0; v < n; ++v) visit(v);
  return reach;
}

bool can_extend(const std::vector<long>& reach, VertexId v, long steps) {
  return reach[v] == -1 || reach[v] >= steps;
}

// Extends `edges` (a path ending at `last`) to `total` edges. choose picks an
// index among the admissible candidate edges.
template <class Choose>
void extend(const AutomaticStructure& a, const std::vector<long>& reach, std::vector<std::size_t>& edges,
            VertexId last, std::size_t total, Choose&& choose) {
  while (edges.size() < total) {
    std::vector<std::size_t> ok;
    for (std::size_t ei : a.proper_out_edges(last)) {
      if (can_extend(reach, a.edges()[ei].target, static_cast<long>(total - edges.size() - 1))) ok.push_back(ei);
    }
    std::size_t ei = ok[choose(ok.size())];
    edges.push_back(ei);
    last = a.edges()[ei].target;
  }
}

double busemann_value(const MetricModel& d, const AutomaticStructure& a, const std::vector<std::size_t>& edges) {
  Word w;
  w.reserve(edges.size());
  for (std::size_t ei : edges) w.push_back(*a.edges()[ei].label);
  std::span<const Letter> full(w);
  return d.distance(full) - d.distance(full.subspan(1));
}

}  // namespace

CylinderPotential busemann_potential(const MetricModel& d, const AutomaticStructure& a,
                                     const BusemannOptions& options) {
  if (options.depth < 1) throw Error("busemann_potential: depth must be at least 1");
  if (options.horizon <= options.depth) throw Error("busemann_potential: horizon must exceed the depth");
  const std::vector<long> reach = extension_reach(a);
  const auto H = static_cast<std::size_t>(options.horizon);
  std::mt19937_64 rng(options.seed);
  CylinderPotential out;
  out.depth = options.depth;

  std::vector<std::size_t> edges;
  std::vector<VertexId> verts;
  std::function<void(VertexId)> grow = [&](VertexId v) {
    if (static_cast<int>(edges.size()) == options.depth) {
      if (!can_extend(reach, v, static_cast<long>(H - edges.size()))) {
        out.flagged.push_back(verts);
        return;
      }
      std::vector<std::size_t> path = edges;
      extend(a, reach, path, v, H, [](std::size_t) { return std::size_t{0}; });
      const double value = busemann_value(d, a, path);
      double err = 0.0;
      for (int alt = 0; alt <= options.alternatives; ++alt) {
        path = edges;
        if (alt == 0) {
          extend(a, reach, path, v, H, [](std::size_t n) { return n - 1; });
        } else {
          extend(a, reach, path, v, H, [&](std::size_t n) {
            return static_cast<std::size_t>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
          });
        }
        err = std::max(err, std::abs(busemann_value(d, a, path) - value));
      }
      out.values.emplace(verts, value);
      out.resolution_error = std::max(out.resolution_error, err);
      return;
    }
    for (std::size_t ei : a.proper_out_edges(v)) {
      VertexId w = a.edges()[ei].target;
      edges.push_back(ei);
      verts.push_back(w);
      grow(w);
      verts.pop_back();
      edges.pop_back();
    }
  };
  for (VertexId v = 0; v < a.vertex_count(); ++v) {
    if (v == kAugmentationVertex) continue;
    verts = {v};
    grow(v);
  }
  return out;
}

CylinderPotential scale_potential(const CylinderPotential& f, double c) {
  CylinderPotential out = f;
  for (auto& [k, v] : out.values) v *= c;
  out.resolution_error = f.resolution_error * std::abs(c);
  return out;
}

CylinderPotential subtract_potentials(const CylinderPotential& f, const CylinderPotential& g) {
  if (f.depth != g.depth) throw Error("potentials: depth mismatch");
  CylinderPotential out;
  out.depth = f.depth;
  for (const auto& [c, v] : f.values) {
    auto it = g.values.find(c);
    if (it != g.values.end()) out.values.emplace(c, v - it->second);
  }
  out.resolution_error = f.resolution_error + g.resolution_error;
  out.flagged = f.flagged;
  out.flagged.insert(out.flagged.end(), g.flagged.begin(), g.flagged.end());
  return out;
}

CylinderPotential constant_potential(const AutomaticStructure& a, int depth, double c) {
  CylinderPotential out;
  out.depth = depth;
  std::vector<VertexId> verts;
  std::function<void(VertexId)> grow = [&](VertexId v) {
    if (static_cast<int>(verts.size()) == depth + 1) {
      out.values.emplace(verts, c);
      return;
    }
    for (std::size_t ei : a.proper_out_edges(v)) {
      verts.push_back(a.edges()[ei].target);
      grow(a.edges()[ei].target);
      verts.pop_back();
    }
  };
  for (VertexId v = 0; v < a.vertex_count(); ++v) {
    if (v == kAugmentationVertex) continue;
    verts = {v};
    grow(v);
  }
  return out;
}

CoherenceReport busemann_coherence(const MetricModel& d, const AutomaticStructure& a, const CylinderPotential& psi,
                                   int max_length, int samples, std::uint64_t seed) {
  if (max_length < 1 || samples < 1) throw Error("busemann_coherence: need positive length and sample count");
  const std::vector<long> reach = extension_reach(a);
  const std::size_t total = static_cast<std::size_t>(max_length + psi.depth);
  if (!can_extend(reach, kInitialVertex, static_cast<long>(total)))
    throw Error("busemann_coherence: coding has no 0-free *-paths of the required length");
  std::mt19937_64 rng(seed);
  CoherenceReport out;
  out.samples = samples;
  out.sup_defect.assign(static_cast<std::size_t>(max_length), 0.0);
  for (int n = 1; n <= max_length; ++n) out.lengths.push_back(n);
  for (int s = 0; s < samples; ++s) {
    std::vector<std::size_t> edges;
    extend(a, reach, edges, kInitialVertex, total, [&](std::size_t n) {
      return static_cast<std::size_t>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    });
    std::vector<VertexId> path{kInitialVertex};
    Word w;
    for (std::size_t ei : edges) {
      path.push_back(a.edges()[ei].target);
      w.push_back(*a.edges()[ei].label);
    }
    double sum = 0.0;
    for (int n = 1; n <= max_length; ++n) {
      sum += psi.at(path, static_cast<std::size_t>(n - 1));
      double defect = std::abs(sum - d.distance(std::span<const Letter>(w).first(static_cast<std::size_t>(n))));
      auto& sup = out.sup_defect[static_cast<std::size_t>(n - 1)];
      sup = std::max(sup, defect);
    }
  }
  double mx = 0.0, my = 0.0;
  for (int n = 1; n <= max_length; ++n) {
    mx += n;
    my += out.sup_defect[static_cast<std::size_t>(n - 1)];
  }
  mx /= max_length;
  my /= max_length;
  double sxy = 0.0, sxx = 0.0;
  for (int n = 1; n <= max_length; ++n) {
    sxy += (n - mx) * (out.sup_defect[static_cast<std::size_t>(n - 1)] - my);
    sxx += (n - mx) * (n - mx);
  }
  out.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  out.max_defect = *std::max_element(out.sup_defect.begin(), out.sup_defect.end());
  return out;
}

}  // namespace hypstat
