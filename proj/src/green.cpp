#include "hypstat/green.hpp"

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

namespace hypstat {

bool FiniteMeasure::is_nearest_neighbour() const {
  for (const auto& [g, w] : weights) {
    if (g.length() > 1) return false;
  }
  return true;
}

std::string FiniteMeasure::canonical_text() const {
  std::ostringstream out;
  out << "measure rank=" << group.rank() << "\n";
  for (const auto& [g, w] : weights) out << group.format(g) << " " << std::hexfloat << w << "\n";
  return out.str();
}

void validate_measure(const FiniteMeasure& mu) {
  if (mu.weights.empty()) throw Error("measure: empty support");
  double total = 0.0;
  std::size_t max_len = 0;
  for (const auto& [g, w] : mu.weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw Error("measure: nonpositive weight at " + mu.group.format(g));
    if (g != mu.group.reduce(g.word)) throw Error("measure: support word " + mu.group.format(g) + " is not reduced");
    total += w;
    max_len = std::max(max_len, g.length());
    auto inv = mu.weights.find(mu.group.invert(g));
    double winv = inv == mu.weights.end() ? 0.0 : inv->second;
    if (std::abs(w - winv) > 1e-12)
      throw Error("measure: not symmetric at " + mu.group.format(g) + " (mu(g) != mu(g^-1))");
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error("measure: total mass " + std::to_string(total) + " != 1");

  // Semigroup generation: products of support elements must reach the radius-2 ball.
  const std::size_t cap = 2 + 2 * max_len;
  std::set<GroupElement> reached;
  std::vector<GroupElement> frontier;
  for (const auto& [g, w] : mu.weights) {
    if (reached.insert(g).second) frontier.push_back(g);
  }
  for (int round = 0; round < 8 && !frontier.empty(); ++round) {
    std::vector<GroupElement> next;
    for (const auto& h : frontier) {
      for (const auto& [s, w] : mu.weights) {
        GroupElement p = mu.group.multiply(h, s);
        if (p.length() <= cap && reached.insert(p).second) next.push_back(p);
      }
    }
    frontier = std::move(next);
  }
  const std::size_t letters = mu.group.alphabet().size();
  for (Letter x = 0; x < letters; ++x) {
    for (Letter y = 0; y < letters; ++y) {
      GroupElement g = mu.group.reduce(Word{x, y});
      if (!reached.count(g))
        throw Error("measure: support does not generate the group (misses " + mu.group.format(g) + ")");
    }
  }
}

namespace {

double parse_weight(const std::string& tok) {
  auto slash = tok.find('/');
  std::size_t used = 0;
  if (slash == std::string::npos) {
    double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  }
  long double p = std::stold(tok.substr(0, slash), &used);
  if (used != slash) throw std::invalid_argument(tok);
  std::string qs = tok.substr(slash + 1);
  long double q = std::stold(qs, &used);
  if (used != qs.size() || q == 0) throw std::invalid_argument(tok);
  return static_cast<double>(p / q);
}

}  // namespace

FiniteMeasure parse_measure(const FreeGroup& group, std::istream& in, const std::string& source) {
  FiniteMeasure mu{group, {}};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line.substr(0, line.find('#')));
    std::vector<std::string> tok;
    std::string t;
    while (ss >> t) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok[0] != "weight" || tok.size() != 3) throw ParseError(source, lineno, "usage: weight <word> <p/q>");
    GroupElement g;
    try {
      g = group.element(tok[1]);
    } catch (const Error& e) {
      throw ParseError(source, lineno, e.what());
    }
    double w;
    try {
      w = parse_weight(tok[2]);
    } catch (const std::exception&) {
      throw ParseError(source, lineno, "bad weight '" + tok[2] + "'");
    }
    if (!(w > 0.0)) throw ParseError(source, lineno, "weight must be positive");
    if (mu.weights.count(g)) throw ParseError(source, lineno, "duplicate weight for " + tok[1]);
    mu.weights[g] = w;
  }
  try {
    validate_measure(mu);
  } catch (const Error& e) {
    throw ParseError(source, lineno, e.what());
  }
  return mu;
}

FiniteMeasure load_measure(const FreeGroup& group, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open measure file '" + path.string() + "'");
  return parse_measure(group, in, path.string());
}

FiniteMeasure nearest_neighbour_measure(const FreeGroup& group, const std::vector<double>& generator_weights) {
  if (static_cast<int>(generator_weights.size()) != group.rank())
    throw Error("nearest_neighbour_measure: need one weight per generator");
  FiniteMeasure mu{group, {}};
  for (int i = 0; i < group.rank(); ++i) {
    Letter x = static_cast<Letter>(2 * i);
    mu.weights[GroupElement{Word{x}}] = generator_weights[static_cast<std::size_t>(i)];
    mu.weights[GroupElement{Word{group.alphabet().inverse(x)}}] = generator_weights[static_cast<std::size_t>(i)];
  }
  validate_measure(mu);
  return mu;
}

namespace {

void step(const FiniteMeasure& mu, const SparseDistribution& prev, SparseDistribution& next,
          std::size_t max_states) {
  next.clear();
  next.reserve(prev.size() * 3);
  const Alphabet& alpha = mu.group.alphabet();
  Word w;
  for (const auto& [h, p] : prev) {
    for (const auto& [s, q] : mu.weights) {
      w = h.word;
      for (Letter x : s.word) {
        if (!w.empty() && w.back() == alpha.inverse(x)) {
          w.pop_back();
        } else {
          w.push_back(x);
        }
      }
      next[GroupElement{w}] += p * q;
    }
    if (next.size() > max_states)
      throw Error("convolution_powers: reachable set exceeds the memory budget (" + std::to_string(next.size()) +
                  " > " + std::to_string(max_states) + " states)");
  }
}

}  // namespace

std::vector<SparseDistribution> convolution_powers(const FiniteMeasure& mu, int N, std::size_t max_states) {
  if (N < 1) throw Error("convolution_powers: N must be at least 1");
  std::vector<SparseDistribution> out(static_cast<std::size_t>(N) + 1);
  out[0][GroupElement{}] = 1.0;
  for (int n = 1; n <= N; ++n) step(mu, out[static_cast<std::size_t>(n) - 1], out[static_cast<std::size_t>(n)], max_states);
  return out;
}

double walk_spectral_radius_bound(const std::vector<SparseDistribution>& powers) {
  const int N = static_cast<int>(powers.size()) - 1;
  double best = 0.0;
  for (int n = std::max(2, N / 2); n <= N; ++n) {
    if (n % 2) continue;
    auto it = powers[static_cast<std::size_t>(n)].find(GroupElement{});
    // Return probabilities on free groups decay like rho^n n^{-3/2}; undo the
    // polynomial factor so the root does not creep up on rho from far below.
    if (it != powers[static_cast<std::size_t>(n)].end() && it->second > 0.0)
      best = std::max(best, std::pow(it->second * std::pow(0.5 * n, 1.5), 1.0 / n));
  }
  return 1.05 * best;
}

GreenEntry GreenTable::lookup(const FreeGroup& group, const GroupElement& g) const {
  if (route == GreenRoute::first_passage) {
    GreenEntry e;
    double logf = 0.0;
    double logerr = 0.0;
    for (Letter x : g.word) {
      double f = first_passage.at(x);
      if (!(f > 0.0)) throw Error("green table: letter " + group.alphabet().name(x) + " is never hit");
      logf += std::log(f);
      logerr += first_passage_error.at(x) / f;
    }
    e.distance = -logf;
    e.distance_error = logerr;
    e.value = origin_value * std::exp(logf);
    e.error = e.value * (std::expm1(logerr) + origin_error / origin_value);
    e.flagged = e.distance_error > tolerance;
    return e;
  }
  auto it = entries.find(g);
  if (it == entries.end()) {
    GreenEntry e;
    e.error = spectral_radius_bound < 1.0
                  ? std::pow(spectral_radius_bound, truncation) / (1.0 - spectral_radius_bound)
                  : std::numeric_limits<double>::infinity();
    e.distance = e.distance_error = std::numeric_limits<double>::infinity();
    e.flagged = true;
    return e;
  }
  return it->second;
}

std::size_t GreenTable::flagged_count() const {
  std::size_t n = 0;
  for (const auto& [g, e] : entries) n += e.flagged ? 1 : 0;
  return n;
}

namespace {

class GreenEvaluator final : public DistanceEvaluator {
 public:
  GreenEvaluator(FreeGroup group, GreenTable table) : group_(std::move(group)), table_(std::move(table)) {
    if (table_.route == GreenRoute::first_passage) {
      for (std::size_t x = 0; x < table_.first_passage.size(); ++x) {
        cost_.push_back(-std::log(table_.first_passage[x]));
        tol_ = std::max(tol_, table_.first_passage_error[x] / table_.first_passage[x]);
      }
    } else {
      for (const auto& [g, e] : table_.entries) {
        if (!e.flagged) tol_ = std::max(tol_, e.distance_error);
      }
    }
  }

  double distance(std::span<const Letter> word) const override {
    if (table_.route == GreenRoute::first_passage) {
      double d = 0.0;
      for (Letter x : word) d += cost_[x];
      return d;
    }
    auto it = table_.entries.find(GroupElement{Word(word.begin(), word.end())});
    if (it == table_.entries.end())
      throw Error("green metric: " + group_.alphabet().format(word) +
                  " lies outside the convolution table; increase the truncation depth");
    return it->second.distance;
  }

  double tolerance() const override { return tol_; }

 private:
  FreeGroup group_;
  GreenTable table_;
  std::vector<double> cost_;
  double tol_ = 0.0;
};

// Spectral radius of a nearest-neighbour walk on F_k with generator weights p_i:
// mu(o) + min_{t > 0} sum_i sqrt(t^2 + 4 p_i^2) - (k - 1) t.
double nearest_neighbour_spectral_radius(const std::vector<double>& generator_weights, double lazy) {
  const double k = static_cast<double>(generator_weights.size());
  auto f = [&](double t) {
    double s = -(k - 1.0) * t;
    for (double p : generator_weights) s += std::sqrt(t * t + 4.0 * p * p);
    return s;
  };
  return lazy + boost::math::tools::brent_find_minima(f, 0.0, 2.0, std::numeric_limits<double>::digits).second;
}

GreenTable first_passage_table(const FiniteMeasure& mu, const GreenOptions& options) {
  const Alphabet& alpha = mu.group.alphabet();
  const std::size_t n = alpha.size();
  std::vector<double> m(n, 0.0);
  double lazy = 0.0;
  for (const auto& [g, w] : mu.weights) {
    if (g.is_identity()) {
      lazy = w;
    } else {
      m[g.word[0]] = w;
    }
  }
  std::vector<double> F(n, 0.0), prev(n, 0.0);
  double last_delta = 0.0;
  double ratio = 0.0;
  int it = 0;
  for (; it < 1'000'000; ++it) {
    prev = F;
    for (std::size_t x = 0; x < n; ++x) {
      double back = lazy;
      for (std::size_t y = 0; y < n; ++y) {
        if (y != x) back += m[y] * prev[alpha.inverse(static_cast<Letter>(y))];
      }
      F[x] = m[x] / (1.0 - back);
    }
    double delta = 0.0;
    for (std::size_t x = 0; x < n; ++x) delta = std::max(delta, std::abs(F[x] - prev[x]));
    if (last_delta > 0.0 && delta > 0.0) ratio = delta / last_delta;
    last_delta = delta;
    if (delta <= 1e-17 * *std::max_element(F.begin(), F.end())) break;
  }
  GreenTable t;
  t.route = GreenRoute::first_passage;
  t.tolerance = options.tolerance;
  t.first_passage = F;
  t.first_passage_error.assign(n, 0.0);
  const double q = std::min(ratio, 0.999);
  for (std::size_t x = 0; x < n; ++x) {
    t.first_passage_error[x] = last_delta * q / (1.0 - q) + 4.0 * std::numeric_limits<double>::epsilon() * F[x];
  }
  double back = lazy;
  for (std::size_t y = 0; y < n; ++y) back += m[y] * F[alpha.inverse(static_cast<Letter>(y))];
  t.origin_value = 1.0 / (1.0 - back);
  t.origin_error = t.origin_value * t.origin_value * 8.0 * std::numeric_limits<double>::epsilon();
  std::vector<double> generator_weights;
  for (std::size_t x = 0; x < n; ++x) {
    if (x < alpha.inverse(static_cast<Letter>(x))) generator_weights.push_back(m[x]);
  }
  t.truncation = 0;
  t.spectral_radius_bound = nearest_neighbour_spectral_radius(generator_weights, lazy);
  return t;
}

GreenTable convolution_table(const FiniteMeasure& mu, const GreenOptions& options) {
  const int N = options.truncation;
  if (N < 2) throw Error("green_metric: truncation must be at least 2");
  SparseDistribution prev, next;
  prev[GroupElement{}] = 1.0;
  std::map<GroupElement, double> sum;
  std::vector<SparseDistribution> returns(static_cast<std::size_t>(N) + 1);
  sum[GroupElement{}] += 1.0;
  returns[0][GroupElement{}] = 1.0;
  for (int n = 1; n <= N; ++n) {
    step(mu, prev, next, 20'000'000);
    for (const auto& [g, p] : next) sum[g] += p;
    auto o = next.find(GroupElement{});
    if (o != next.end()) returns[static_cast<std::size_t>(n)][GroupElement{}] = o->second;
    std::swap(prev, next);
  }
  GreenTable t;
  t.route = GreenRoute::convolution;
  t.truncation = N;
  t.tolerance = options.tolerance;
  t.spectral_radius_bound = walk_spectral_radius_bound(returns);
  const double rho = t.spectral_radius_bound;
  // p_n(o,g) <= rho^{2 floor(n/2)} for symmetric walks, so the tail past N is at most rho^N / (1 - rho).
  const double tail = rho < 1.0 ? std::pow(rho, N) / (1.0 - rho) : std::numeric_limits<double>::infinity();
  t.origin_value = sum.at(GroupElement{});
  t.origin_error = tail;
  for (const auto& [g, v] : sum) {
    GreenEntry e;
    e.value = v;
    e.error = tail;
    e.distance = -std::log(v / t.origin_value);
    e.distance_error = std::log1p(tail / v) + std::log1p(tail / t.origin_value);
    e.flagged = !(e.distance_error <= options.tolerance);
    t.entries.emplace(g, e);
  }
  return t;
}

}  // namespace

MetricModel green_metric_from_table(const FiniteMeasure& mu, GreenTable table) {
  const bool fp = table.route == GreenRoute::first_passage;
  std::vector<double> weights;
  if (fp) {
    for (double f : table.first_passage) weights.push_back(-std::log(f));
  }
  std::string desc = "green(" + std::string(fp ? "first-passage" : "convolution N=" + std::to_string(table.truncation)) + ")";
  MetricModel d(MetricKind::green, std::make_shared<GreenEvaluator>(mu.group, std::move(table)), mu.group.alphabet(),
                desc);
  if (fp) {
    double lo = *std::min_element(weights.begin(), weights.end());
    double hi = *std::max_element(weights.begin(), weights.end());
    d = d.with_letter_weights(weights).with_quasi_isometry({std::max(hi, 1.0 / lo), 0.0});
  }
  return d;
}

GreenModel green_metric(const FiniteMeasure& mu, const GreenOptions& options) {
  validate_measure(mu);
  GreenTable table = (options.allow_first_passage && mu.is_nearest_neighbour()) ? first_passage_table(mu, options)
                                                                                 : convolution_table(mu, options);
  MetricModel metric = green_metric_from_table(mu, table);
  return GreenModel{std::move(metric), std::move(table)};
}

void write_green_table(std::ostream& out, const GreenTable& t, const Alphabet& alphabet) {
  out << "hypstat-green-table 1\n";
  out << std::hexfloat;
  out << "route " << (t.route == GreenRoute::first_passage ? "first_passage" : "convolution") << "\n";
  out << "truncation " << t.truncation << "\n";
  out << "rho_hat " << t.spectral_radius_bound << "\n";
  out << "tolerance " << t.tolerance << "\n";
  out << "origin " << t.origin_value << " " << t.origin_error << "\n";
  for (std::size_t x = 0; x < t.first_passage.size(); ++x) {
    out << "letter " << alphabet.name(static_cast<Letter>(x)) << " " << t.first_passage[x] << " "
        << t.first_passage_error[x] << "\n";
  }
  for (const auto& [g, e] : t.entries) {
    out << "entry " << alphabet.format(g.word) << " " << e.value << " " << e.error << " " << e.distance << " "
        << e.distance_error << " " << (e.flagged ? 1 : 0) << "\n";
  }
  out << std::defaultfloat;
}

namespace {

double read_hex(std::istream& in) {
  std::string tok;
  in >> tok;
  return std::strtod(tok.c_str(), nullptr);
}

}  // namespace

GreenTable read_green_table(std::istream& in, const Alphabet& alphabet) {
  std::string line;
  if (!std::getline(in, line) || line != "hypstat-green-table 1") throw Error("green table: bad header");
  GreenTable t;
  t.first_passage.assign(alphabet.size(), 0.0);
  t.first_passage_error.assign(alphabet.size(), 0.0);
  bool any_letter = false;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "route") {
      std::string r;
      ss >> r;
      t.route = r == "first_passage" ? GreenRoute::first_passage : GreenRoute::convolution;
    } else if (key == "truncation") {
      ss >> t.truncation;
    } else if (key == "rho_hat") {
      t.spectral_radius_bound = read_hex(ss);
    } else if (key == "tolerance") {
      t.tolerance = read_hex(ss);
    } else if (key == "origin") {
      t.origin_value = read_hex(ss);
      t.origin_error = read_hex(ss);
    } else if (key == "letter") {
      std::string name;
      ss >> name;
      Letter x = alphabet.letter(name);
      t.first_passage[x] = read_hex(ss);
      t.first_passage_error[x] = read_hex(ss);
      any_letter = true;
    } else if (key == "entry") {
      std::string word;
      ss >> word;
      GreenEntry e;
      e.value = read_hex(ss);
      e.error = read_hex(ss);
      e.distance = read_hex(ss);
      e.distance_error = read_hex(ss);
      int f = 0;
      ss >> f;
      e.flagged = f != 0;
      t.entries.emplace(GroupElement{alphabet.parse(word)}, e);
    } else if (!key.empty()) {
      throw Error("green table: unknown record '" + key + "'");
    }
  }
  if (!any_letter) {
    t.first_passage.clear();
    t.first_passage_error.clear();
  }
  return t;
}

}  // namespace hypstat
