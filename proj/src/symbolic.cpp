#include "hypstat/symbolic.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <queue>
#include <sstream>

namespace hypstat {

std::size_t BlockSystem::source(std::size_t transition) const {
  auto it = std::upper_bound(row_start.begin(), row_start.end(), transition);
  return static_cast<std::size_t>(it - row_start.begin()) - 1;
}

std::uint64_t BlockSystem::path_count(int n) const {
  std::vector<std::uint64_t> v(state_count(), 1), next;
  for (int step = 0; step < n; ++step) {
    next.assign(state_count(), 0);
    for (std::size_t i = 0; i < state_count(); ++i) {
      for (std::size_t p = row_start[i]; p < row_start[i + 1]; ++p) next[i] += v[target[p]];
    }
    v.swap(next);
  }
  return std::accumulate(v.begin(), v.end(), std::uint64_t{0});
}

BlockSystem refine_to_blocks(const AutomaticStructure& a, const ComponentInfo& component, int k) {
  if (k < 1) throw Error("refine_to_blocks: k must be at least 1");
  if (component.vertices.empty()) throw Error("refine_to_blocks: empty component");
  std::vector<bool> inside(a.vertex_count(), false);
  for (VertexId v : component.vertices) inside[v] = true;
  auto successors = [&](VertexId v) {
    std::vector<VertexId> out;
    for (std::size_t ei : a.proper_out_edges(v)) {
      VertexId w = a.edges()[ei].target;
      if (!inside[w]) continue;
      if (!out.empty() && out.back() == w)
        throw Error("refine_to_blocks: parallel edges inside a component are not supported");
      out.push_back(w);
    }
    return out;
  };

  BlockSystem b;
  b.component = component.id;
  b.k = k;
  std::vector<VertexId> path;
  std::function<void(VertexId)> grow = [&](VertexId v) {
    if (static_cast<int>(path.size()) == k) {
      b.blocks.push_back(path);
      return;
    }
    for (VertexId w : successors(v)) {
      path.push_back(w);
      grow(w);
      path.pop_back();
    }
  };
  for (VertexId v : component.vertices) {
    path = {v};
    grow(v);
  }
  std::sort(b.blocks.begin(), b.blocks.end());
  if (b.blocks.empty()) throw Error("refine_to_blocks: component has no paths of the requested length");
  std::map<std::vector<VertexId>, std::size_t> index;
  for (std::size_t i = 0; i < b.blocks.size(); ++i) index.emplace(b.blocks[i], i);
  for (const auto& blk : b.blocks) {
    std::vector<std::pair<std::size_t, Cylinder>> row;
    for (VertexId w : successors(blk.back())) {
      std::vector<VertexId> next(blk.begin() + 1, blk.end());
      next.push_back(w);
      Cylinder cyl = blk;
      cyl.push_back(w);
      row.emplace_back(index.at(next), std::move(cyl));
    }
    std::sort(row.begin(), row.end());
    for (auto& [j, cyl] : row) {
      b.target.push_back(j);
      b.cylinders.push_back(std::move(cyl));
    }
    b.row_start.push_back(b.target.size());
  }
  return b;
}

std::vector<double> transition_values(const BlockSystem& blocks, const CylinderPotential& f) {
  if (f.depth != blocks.k) throw Error("transition_values: potential depth does not match the block length");
  std::vector<double> out;
  out.reserve(blocks.transition_count());
  for (const auto& c : blocks.cylinders) out.push_back(f.value(c));
  return out;
}

SparseMatrix weighted_transfer(const BlockSystem& blocks, const std::vector<double>& f) {
  SparseMatrix m;
  m.n = blocks.state_count();
  m.row_start = blocks.row_start;
  m.col = blocks.target;
  m.val.resize(f.size());
  for (std::size_t e = 0; e < f.size(); ++e) m.val[e] = std::exp(f[e]);
  return m;
}

TransferMatrix build_transfer(const BlockSystem& blocks, const CylinderPotential& psi_d, const CylinderPotential& phi,
                              double s, double t) {
  if (psi_d.depth != phi.depth) throw Error("build_transfer: potential depth mismatch");
  std::vector<double> a = transition_values(blocks, psi_d);
  std::vector<double> b = transition_values(blocks, phi);
  for (std::size_t e = 0; e < a.size(); ++e) a[e] = -s * a[e] - t * b[e];
  return TransferMatrix{blocks.component, s, t, weighted_transfer(blocks, a)};
}

PressurePoint pressure(const TransferMatrix& m, double tol) {
  PerronResult r = perron(m.matrix, tol);
  if (!r.converged) throw Error("pressure: Perron iteration did not converge");
  PressurePoint p;
  p.component = m.component;
  p.s = m.s;
  p.t = m.t;
  p.eigenvalue = r.eigenvalue;
  p.value = std::log(r.eigenvalue);
  p.residual = r.residual;
  p.left = std::move(r.left);
  p.right = std::move(r.right);
  return p;
}

PressurePoint pressure_of(const BlockSystem& blocks, const std::vector<double>& f, double tol) {
  return pressure(TransferMatrix{blocks.component, 0.0, 0.0, weighted_transfer(blocks, f)}, tol);
}

EquilibriumMeasure equilibrium_measure(const BlockSystem& blocks, const SparseMatrix& m, const PressurePoint& p) {
  EquilibriumMeasure mu;
  const std::size_t n = blocks.state_count();
  mu.state.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += mu.state[i] = p.left[i] * p.right[i];
  for (double& x : mu.state) x /= total;
  mu.kernel.resize(blocks.transition_count());
  mu.transition.resize(blocks.transition_count());
  std::vector<double> inflow(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t e = blocks.row_start[i]; e < blocks.row_start[i + 1]; ++e) {
      row += mu.kernel[e] = m.val[e] * p.right[blocks.target[e]] / (p.eigenvalue * p.right[i]);
    }
    for (std::size_t e = blocks.row_start[i]; e < blocks.row_start[i + 1]; ++e) {
      mu.kernel[e] /= row;
      mu.transition[e] = mu.state[i] * mu.kernel[e];
      inflow[blocks.target[e]] += mu.transition[e];
      if (mu.kernel[e] > 0.0) mu.entropy -= mu.transition[e] * std::log(mu.kernel[e]);
    }
  }
  for (std::size_t i = 0; i < n; ++i) mu.stationarity_error = std::max(mu.stationarity_error, std::abs(inflow[i] - mu.state[i]));
  return mu;
}

double integrate(const EquilibriumMeasure& mu, const std::vector<double>& f) {
  double s = 0.0;
  for (std::size_t e = 0; e < f.size(); ++e) s += mu.transition[e] * f[e];
  return s;
}

namespace {

int block_period(const BlockSystem& b) {
  std::vector<long> level(b.state_count(), -1);
  std::queue<std::size_t> q;
  level[0] = 0;
  q.push(0);
  long g = 0;
  while (!q.empty()) {
    std::size_t i = q.front();
    q.pop();
    for (std::size_t e = b.row_start[i]; e < b.row_start[i + 1]; ++e) {
      std::size_t j = b.target[e];
      if (level[j] < 0) {
        level[j] = level[i] + 1;
        q.push(j);
      } else {
        g = std::gcd(g, std::abs(level[i] + 1 - level[j]));
      }
    }
  }
  return g == 0 ? 1 : static_cast<int>(g);
}

}  // namespace

double asymptotic_variance(const BlockSystem& blocks, const EquilibriumMeasure& mu, const std::vector<double>& f,
                           int max_lag) {
  const std::size_t n = blocks.state_count();
  const double mean = integrate(mu, f);
  std::vector<double> g(f.size());
  double var0 = 0.0;
  double scale = 0.0;
  for (std::size_t e = 0; e < f.size(); ++e) {
    g[e] = f[e] - mean;
    var0 += mu.transition[e] * g[e] * g[e];
    scale = std::max(scale, std::abs(g[e]));
  }
  if (scale == 0.0) return 0.0;
  const int p = block_period(blocks);
  std::vector<double> v(n, 0.0), next(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = blocks.row_start[i]; e < blocks.row_start[i + 1]; ++e) v[i] += mu.kernel[e] * g[e];
  }
  std::deque<std::vector<double>> history;  // v_{j-p} ... v_j
  std::deque<double> partial;               // the last p partial sums
  double sum = 0.0;
  for (int j = 1; j <= max_lag; ++j) {
    double c = 0.0;
    for (std::size_t e = 0; e < g.size(); ++e) c += mu.transition[e] * g[e] * v[blocks.target[e]];
    sum += c;
    partial.push_back(sum);
    if (static_cast<int>(partial.size()) > p) partial.pop_front();
    history.push_back(v);
    if (static_cast<int>(history.size()) > p + 1) history.pop_front();
    if (static_cast<int>(history.size()) == p + 1) {
      // Once v_j matches v_{j-p} only the periodic part is left and the partial
      // sums repeat with period p.
      double diff = 0.0;
      for (std::size_t i = 0; i < n; ++i) diff = std::max(diff, std::abs(history.back()[i] - history.front()[i]));
      if (diff <= 1e-15 * scale) break;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t e = blocks.row_start[i]; e < blocks.row_start[i + 1]; ++e) acc += mu.kernel[e] * v[blocks.target[e]];
      next[i] = acc;
    }
    v.swap(next);
  }
  double avg = std::accumulate(partial.begin(), partial.end(), 0.0) / static_cast<double>(partial.size());
  return var0 + 2.0 * avg;
}

AgreementReport pressure_agreement(const AutomaticStructure& a, const CylinderPotential& psi_d,
                                   const CylinderPotential& phi, const std::vector<std::pair<double, double>>& grid,
                                   double tolerance) {
  AgreementReport out;
  out.tolerance = tolerance;
  std::vector<BlockSystem> systems;
  for (const auto& c : word_maximal_components(a)) {
    out.components.push_back(c.id);
    systems.push_back(refine_to_blocks(a, c, psi_d.depth));
  }
  if (systems.empty()) throw Error("pressure_agreement: no word-maximal component");
  for (auto [s, t] : grid) {
    AgreementPoint pt{s, t, {}, 0.0};
    for (const auto& b : systems) pt.pressures.push_back(pressure(build_transfer(b, psi_d, phi, s, t)).value);
    auto [lo, hi] = std::minmax_element(pt.pressures.begin(), pt.pressures.end());
    pt.discrepancy = *hi - *lo;
    out.max_discrepancy = std::max(out.max_discrepancy, pt.discrepancy);
    out.points.push_back(std::move(pt));
  }
  out.passed = out.max_discrepancy <= tolerance;
  return out;
}

double Normalization::sigma2_to_user(double sigma2_normalized) const {
  return sigma2_normalized * scale_d / (scale_d_star * scale_d_star);
}

double Normalization::sigma2_to_normalized(double sigma2_user) const {
  return sigma2_user * scale_d_star * scale_d_star / scale_d;
}

std::string Normalization::text() const {
  std::ostringstream out;
  out.precision(17);
  out << "growth_rate_d=" << growth_rate << "\n"
      << "tau_raw=" << tau_raw << "\n"
      << "scale_d=" << scale_d << "\n"
      << "scale_d_star=" << scale_d_star << "\n";
  return out.str();
}

Normalization normalize_pair(double growth_rate, double tau_raw) {
  if (!(growth_rate > 0.0)) throw Error("normalize_pair: growth rate must be positive");
  if (!(tau_raw > 0.0)) throw Error("normalize_pair: tau must be positive");
  Normalization n;
  n.growth_rate = growth_rate;
  n.tau_raw = tau_raw;
  n.scale_d = growth_rate;
  n.scale_d_star = growth_rate / tau_raw;
  return n;
}

PotentialPair::PotentialPair(BlockSystem blocks, const CylinderPotential& psi_d, const CylinderPotential& psi_star)
    : blocks_(std::move(blocks)),
      psi_d_(transition_values(blocks_, psi_d)),
      psi_star_(transition_values(blocks_, psi_star)),
      resolution_error_(std::max(psi_d.resolution_error, psi_star.resolution_error)) {
  for (double x : psi_d_) {
    if (!(x > 0.0)) throw Error("potential pair: Psi_d must be positive on the component");
  }
}

PressurePoint PotentialPair::pressure_point(double a, double b) const {
  std::vector<double> f(psi_d_.size());
  for (std::size_t e = 0; e < f.size(); ++e) f[e] = -a * psi_star_[e] - b * psi_d_[e];
  PressurePoint p = pressure_of(blocks_, f);
  p.s = a;
  p.t = b;
  return p;
}

double PotentialPair::pressure(double a, double b) const { return pressure_point(a, b).value; }

namespace {

// Derivative of P(f + x g) in x: the equilibrium integral of g.
double equilibrium_integral(const BlockSystem& blocks, const std::vector<double>& f, const PressurePoint& p,
                            const std::vector<double>& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < blocks.state_count(); ++i) {
    for (std::size_t e = blocks.row_start[i]; e < blocks.row_start[i + 1]; ++e)
      s += p.left[i] * std::exp(f[e]) * p.right[blocks.target[e]] * g[e];
  }
  return s / p.eigenvalue;
}

// Root of x -> P(base - x * dir) with dir > 0, which is strictly decreasing.
double pressure_root(const BlockSystem& blocks, const std::vector<double>& base, const std::vector<double>& dir) {
  auto eval = [&](double x, std::vector<double>& f) {
    f.resize(base.size());
    for (std::size_t e = 0; e < f.size(); ++e) f[e] = base[e] - x * dir[e];
    return pressure_of(blocks, f);
  };
  std::vector<double> f;
  double lo = -1.0, hi = 1.0;
  for (int i = 0; i < 200 && eval(lo, f).value <= 0.0; ++i) lo *= 2.0;
  for (int i = 0; i < 200 && eval(hi, f).value >= 0.0; ++i) hi *= 2.0;
  if (!(eval(lo, f).value > 0.0) || !(eval(hi, f).value < 0.0))
    throw Error("pressure root: bracketing failed (potential not eventually positive)");
  while (hi - lo > 1e-6) {
    double mid = 0.5 * (lo + hi);
    (eval(mid, f).value > 0.0 ? lo : hi) = mid;
  }
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 5; ++it) {
    PressurePoint p = eval(x, f);
    if (p.value == 0.0) break;
    double slope = -equilibrium_integral(blocks, f, p, dir);
    double step = p.value / slope;
    x -= step;
    if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(x))) break;
  }
  double residual = std::abs(eval(x, f).value);
  if (residual > 1e-10) throw Error("pressure root: Newton polish did not reach 1e-10 in P");
  return x;
}

}  // namespace

double PotentialPair::theta(double s) const {
  std::vector<double> base(psi_d_.size());
  for (std::size_t e = 0; e < base.size(); ++e) base[e] = -s * psi_star_[e];
  return pressure_root(blocks_, base, psi_d_);
}

double PotentialPair::growth_rate_star() const {
  for (double x : psi_star_) {
    if (!(x > 0.0)) throw Error("potential pair: Psi_* must be positive on the component");
  }
  return pressure_root(blocks_, std::vector<double>(psi_star_.size(), 0.0), psi_star_);
}

namespace {

struct CurveDerivatives {
  double first = 0.0;
  double second = 0.0;
};

// Central differences at h, h/2, h/4 with two Richardson levels.
template <class F>
CurveDerivatives richardson(F&& f, double f0) {
  const double hs[3] = {1e-2, 5e-3, 2.5e-3};
  double d1[3], d2[3];
  for (int i = 0; i < 3; ++i) {
    double fp = f(hs[i]);
    double fm = f(-hs[i]);
    d1[i] = (fp - fm) / (2.0 * hs[i]);
    d2[i] = (fp - 2.0 * f0 + fm) / (hs[i] * hs[i]);
  }
  auto extrapolate = [](const double (&d)[3]) {
    double r1 = (4.0 * d[1] - d[0]) / 3.0;
    double r2 = (4.0 * d[2] - d[1]) / 3.0;
    return (16.0 * r2 - r1) / 15.0;
  };
  return {extrapolate(d1), extrapolate(d2)};
}

}  // namespace

ManhattanCurve manhattan_curve(const PotentialPair& pair, const std::vector<double>& s_grid) {
  if (s_grid.size() < 3) throw Error("manhattan_curve: need at least three sample points");
  ManhattanCurve c;
  for (double s : s_grid) c.samples.push_back({s, pair.theta(s)});
  const auto& first = c.samples.front();
  const auto& last = c.samples.back();
  c.min_second_difference = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    double chord = first.theta + (last.theta - first.theta) * (c.samples[i].s - first.s) / (last.s - first.s);
    c.max_chord_deviation = std::max(c.max_chord_deviation, std::abs(c.samples[i].theta - chord));
    if (i > 0 && i + 1 < c.samples.size()) {
      const auto& a = c.samples[i - 1];
      const auto& b = c.samples[i];
      const auto& d = c.samples[i + 1];
      double dd = ((d.theta - b.theta) / (d.s - b.s) - (b.theta - a.theta) / (b.s - a.s)) / (d.s - a.s);
      c.min_second_difference = std::min(c.min_second_difference, 2.0 * dd);
    }
  }
  double theta0 = pair.theta(0.0);
  CurveDerivatives der = richardson([&](double h) { return pair.theta(h); }, theta0);
  c.theta_prime = der.first;
  c.theta_second = der.second;
  return c;
}

DistortionConstants distortion_constants(const PotentialPair& pair) {
  DistortionConstants out;
  const BlockSystem& blocks = pair.blocks();
  const auto& pd = pair.psi_d();
  const auto& ps = pair.psi_star();
  out.growth_d = pair.growth_rate_d();
  out.growth_star = pair.growth_rate_star();

  std::vector<double> f(pd.size());
  for (std::size_t e = 0; e < f.size(); ++e) f[e] = -out.growth_d * pd[e];
  SparseMatrix m = weighted_transfer(blocks, f);
  PressurePoint p = pressure(TransferMatrix{blocks.component, 0.0, out.growth_d, m});
  EquilibriumMeasure mu = equilibrium_measure(blocks, m, p);
  out.entropy = mu.entropy;
  out.integral_psi_d = integrate(mu, pd);
  const double integral_star = integrate(mu, ps);
  out.tau = integral_star / out.integral_psi_d;
  std::vector<double> phi(pd.size());
  for (std::size_t e = 0; e < phi.size(); ++e) phi[e] = ps[e] - out.tau * pd[e];
  out.sigma2 = asymptotic_variance(blocks, mu, phi) / out.integral_psi_d;
  out.tau_error = pair.resolution_error() * (1.0 + out.tau) / out.integral_psi_d + 1e-10;

  const double theta0 = out.growth_d;
  CurveDerivatives der = richardson([&](double h) { return pair.theta(h); }, theta0);
  out.tau_curve = -der.first;
  out.sigma2_curve = der.second;

  auto pressure_along = [&](double t) {
    std::vector<double> g(pd.size());
    for (std::size_t e = 0; e < g.size(); ++e) g[e] = f[e] - t * phi[e];
    return pressure_of(blocks, g).value;
  };
  CurveDerivatives pt = richardson(pressure_along, pressure_along(0.0));
  out.sigma2_pressure_fd = pt.second / out.integral_psi_d;

  out.normalization = normalize_pair(out.growth_d, out.tau);
  out.sigma2_discrepancy = std::abs(out.sigma2 - out.sigma2_curve);
  out.routes_agree = out.sigma2_discrepancy <= std::max(1e-4, 0.02 * std::abs(out.sigma2));
  return out;
}

void write_pressure_csv(std::ostream& out, const std::vector<PressurePoint>& points) {
  out << "s,t,P,residual,component\n";
  out.precision(17);
  for (const auto& p : points) out << p.s << "," << p.t << "," << p.value << "," << p.residual << "," << p.component << "\n";
}

void write_manhattan_csv(std::ostream& out, const ManhattanCurve& curve, const std::string& route) {
  out << "s,theta,route\n";
  out.precision(17);
  for (const auto& smp : curve.samples) out << smp.s << "," << smp.theta << "," << route << "\n";
}

}  // namespace hypstat
