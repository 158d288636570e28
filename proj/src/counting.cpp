#include "hypstat/counting.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <istream>
#include <ostream>
#include <random>

namespace hypstat {

std::string to_string(EnumerationMode mode) { return mode == EnumerationMode::exact ? "exact" : "fast"; }

std::string to_string(CertificateStatus status) {
  switch (status) {
    case CertificateStatus::pass: return "PASS";
    case CertificateStatus::fail: return "FAIL";
    case CertificateStatus::heuristic: return "HEURISTIC";
  }
  return "unknown";
}

std::size_t BallEnumeration::count_below(double t) const {
  auto it = std::lower_bound(rows_.begin(), rows_.end(), t, [](const Row& r, double x) { return r.d < x; });
  return static_cast<std::size_t>(it - rows_.begin());
}

void BallEnumeration::add(std::span<const Letter> word, double d, double d_star) {
  rows_.push_back(Row{arena_.size(), static_cast<std::uint32_t>(word.size()), d, d_star});
  arena_.insert(arena_.end(), word.begin(), word.end());
}

void BallEnumeration::sort_canonical() {
  std::vector<std::size_t> order(rows_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (rows_[i].d != rows_[j].d) return rows_[i].d < rows_[j].d;
    auto a = word(i);
    auto b = word(j);
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  });
  std::vector<Letter> arena;
  arena.reserve(arena_.size());
  std::vector<Row> rows;
  rows.reserve(rows_.size());
  for (std::size_t i : order) {
    auto w = word(i);
    rows.push_back(Row{arena.size(), rows_[i].length, rows_[i].d, rows_[i].d_star});
    arena.insert(arena.end(), w.begin(), w.end());
  }
  arena_.swap(arena);
  rows_.swap(rows);
}

namespace {

// Running evaluation of d along a DFS: additive metrics are updated per letter.
class RunningMetric {
 public:
  explicit RunningMetric(const MetricModel& d) : d_(d), weights_(d.letter_weights()) {}
  double push(const Word& word, double parent) const {
    if (weights_) return parent + (*weights_)[word.back()];
    return d_.distance(word);
  }
  bool additive() const { return weights_.has_value(); }

 private:
  const MetricModel& d_;
  std::optional<std::vector<double>> weights_;
};

}  // namespace

BallEnumeration enumerate_ball(const AutomaticStructure& a, const MetricModel& d, const MetricModel* d_star, double T,
                               const BallOptions& options) {
  auto start = std::chrono::steady_clock::now();
  BallEnumeration ball;
  ball.T = T;
  ball.mode = options.mode;
  ball.has_d_star = d_star != nullptr;

  int radius = options.max_word_radius;
  if (options.mode == EnumerationMode::exact) {
    const QuasiIsometry& qi = d.quasi_isometry();
    if (!qi.known()) throw Error("enumerate_ball: exact mode needs the quasi-isometry envelope of d");
    const double L = qi.L * options.qi_inflation;
    const double C = qi.C * options.qi_inflation;
    const double R = std::ceil(L * (std::max(T, 0.0) + C));
    if (R > options.max_word_radius)
      throw Error("enumerate_ball: word radius " + std::to_string(static_cast<long>(R)) + " exceeds the budget of " +
                  std::to_string(options.max_word_radius) + "; lower T");
    radius = static_cast<int>(R);
    ball.certificate.word_radius = radius;
    ball.certificate.lower_envelope = radius / L - C;
    ball.certificate.status = CertificateStatus::pass;
  } else {
    ball.certificate.status = CertificateStatus::heuristic;
  }

  RunningMetric run_d(d);
  std::optional<RunningMetric> run_star;
  if (d_star) run_star.emplace(*d_star);
  const bool exact = options.mode == EnumerationMode::exact;

  auto record = [&](const Word& w, double dv, double sv) {
    ball.add(w, dv, sv);
    if (ball.size() > options.max_elements)
      throw Error("enumerate_ball: more than " + std::to_string(options.max_elements) + " elements; lower T");
  };
  if (T > 0.0) record(Word{}, 0.0, 0.0);

  struct Frame {
    std::vector<std::size_t> edges;
    std::size_t next = 0;
    double d = 0.0;
    double d_star = 0.0;
  };
  Word word;
  std::vector<Frame> stack;
  if (radius > 0) stack.push_back(Frame{a.proper_out_edges(kInitialVertex), 0, 0.0, 0.0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next == f.edges.size()) {
      stack.pop_back();
      if (!word.empty()) word.pop_back();
      continue;
    }
    const Edge& e = a.edges()[f.edges[f.next++]];
    word.push_back(*e.label);
    const double dv = run_d.push(word, f.d);
    const bool inside = dv < T;
    double sv = 0.0;
    if (run_star && (inside || run_star->additive())) sv = run_star->push(word, f.d_star);
    if (inside) record(word, dv, sv);
    const bool at_cap = static_cast<int>(word.size()) >= radius;
    if (exact && at_cap && inside && ball.certificate.witness.empty()) {
      ball.certificate.status = CertificateStatus::fail;
      ball.certificate.witness = a.alphabet().format(word);
    }
    const bool descend = !at_cap && (exact || dv <= T + options.slack);
    if (descend) {
      stack.push_back(Frame{a.proper_out_edges(e.target), 0, dv, sv});
    } else {
      word.pop_back();
    }
  }
  ball.sort_canonical();
  ball.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return ball;
}

std::size_t count_ball(const AutomaticStructure& a, const MetricModel& d, double T, double slack,
                       int max_word_radius) {
  RunningMetric run_d(d);
  std::size_t count = T > 0.0 ? 1 : 0;
  struct Frame {
    std::vector<std::size_t> edges;
    std::size_t next = 0;
    double d = 0.0;
  };
  Word word;
  std::vector<Frame> stack;
  stack.push_back(Frame{a.proper_out_edges(kInitialVertex), 0, 0.0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next == f.edges.size()) {
      stack.pop_back();
      if (!word.empty()) word.pop_back();
      continue;
    }
    const Edge& e = a.edges()[f.edges[f.next++]];
    word.push_back(*e.label);
    const double dv = run_d.push(word, f.d);
    if (dv < T) ++count;
    if (static_cast<int>(word.size()) < max_word_radius && dv <= T + slack) {
      stack.push_back(Frame{a.proper_out_edges(e.target), 0, dv});
    } else {
      word.pop_back();
    }
  }
  return count;
}

namespace {

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error("ball cache: truncated file");
  return v;
}

constexpr char kBallMagic[8] = {'H', 'S', 'B', 'A', 'L', 'L', '1', '\n'};

}  // namespace

void write_ball_binary(std::ostream& out, const BallEnumeration& ball) {
  out.write(kBallMagic, sizeof(kBallMagic));
  put(out, ball.T);
  put(out, static_cast<std::uint8_t>(ball.mode));
  put(out, static_cast<std::uint8_t>(ball.has_d_star));
  put(out, static_cast<std::uint8_t>(ball.certificate.status));
  put(out, static_cast<std::int32_t>(ball.certificate.word_radius));
  put(out, ball.certificate.lower_envelope);
  put(out, static_cast<std::uint64_t>(ball.certificate.witness.size()));
  out.write(ball.certificate.witness.data(), static_cast<std::streamsize>(ball.certificate.witness.size()));
  put(out, static_cast<std::uint64_t>(ball.size()));
  for (std::size_t i = 0; i < ball.size(); ++i) {
    auto w = ball.word(i);
    put(out, static_cast<std::uint32_t>(w.size()));
    put(out, ball.row(i).d);
    put(out, ball.row(i).d_star);
    out.write(reinterpret_cast<const char*>(w.data()), static_cast<std::streamsize>(w.size()));
  }
}

BallEnumeration read_ball_binary(std::istream& in) {
  char magic[sizeof(kBallMagic)];
  if (!in.read(magic, sizeof(magic)) || !std::equal(magic, magic + sizeof(magic), kBallMagic))
    throw Error("ball cache: bad header");
  BallEnumeration ball;
  ball.T = get<double>(in);
  ball.mode = static_cast<EnumerationMode>(get<std::uint8_t>(in));
  ball.has_d_star = get<std::uint8_t>(in) != 0;
  ball.certificate.status = static_cast<CertificateStatus>(get<std::uint8_t>(in));
  ball.certificate.word_radius = get<std::int32_t>(in);
  ball.certificate.lower_envelope = get<double>(in);
  ball.certificate.witness.resize(get<std::uint64_t>(in));
  in.read(ball.certificate.witness.data(), static_cast<std::streamsize>(ball.certificate.witness.size()));
  const auto n = get<std::uint64_t>(in);
  Word w;
  for (std::uint64_t i = 0; i < n; ++i) {
    w.resize(get<std::uint32_t>(in));
    const double d = get<double>(in);
    const double s = get<double>(in);
    if (!in.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(w.size())))
      throw Error("ball cache: truncated file");
    ball.add(w, d, s);
  }
  return ball;
}

void write_ball_csv(std::ostream& out, const BallEnumeration& ball, const Alphabet& alphabet, const MetricModel* d,
                    const MetricModel* d_star, const FreeGroup* group) {
  out << "word,d,d_star,ell_d,ell_d_star\n";
  out.precision(17);
  for (std::size_t i = 0; i < ball.size(); ++i) {
    auto w = ball.word(i);
    out << alphabet.format(w) << "," << ball.row(i).d << ",";
    if (ball.has_d_star) out << ball.row(i).d_star;
    for (const MetricModel* m : {d, d_star}) {
      out << ",";
      if (!m || !group) continue;
      GroupElement g = group->reduce(w);
      out << (g.is_identity() ? 0.0 : translation_length(*m, *group, g, 8).estimate);
    }
    out << "\n";
  }
}

std::vector<double> ball_counts(const BallEnumeration& ball, const std::vector<double>& T_grid) {
  std::vector<double> out;
  for (double t : T_grid) {
    if (t > ball.T) throw Error("ball_counts: grid point beyond the enumerated radius");
    out.push_back(static_cast<double>(ball.count_below(t)));
  }
  return out;
}

GrowthFit growth_rate(const std::vector<double>& T, const std::vector<double>& values) {
  if (T.size() != values.size() || T.size() < 5) throw Error("growth_rate: degenerate grid (need at least 5 points)");
  std::vector<double> x = T, y;
  for (double v : values) {
    if (!(v > 0.0)) throw Error("growth_rate: nonpositive value in the fit window");
    y.push_back(std::log(v));
  }
  const double m = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / m;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw Error("growth_rate: degenerate grid (repeated T values)");
  GrowthFit fit;
  fit.rate = sxy / sxx;
  fit.intercept = my - fit.rate * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double r = y[i] - fit.intercept - fit.rate * x[i];
    ssr += r * r;
  }
  fit.band = 2.0 * std::sqrt(ssr / std::max(1.0, m - 2.0) / sxx);
  fit.T = T;
  fit.values = values;
  for (double t : T) fit.fitted.push_back(fit.intercept + fit.rate * t);
  return fit;
}

OrbitalReport orbital_constant(const std::vector<double>& T, const std::vector<double>& counts, double rate,
                               double tolerance) {
  if (T.size() != counts.size() || T.size() < 3) throw Error("orbital_constant: need at least 3 grid points");
  OrbitalReport out;
  for (std::size_t i = 0; i < T.size(); ++i) out.normalized.push_back(std::exp(-rate * T[i]) * counts[i]);
  std::size_t tail = std::max<std::size_t>(2, T.size() / 3);
  auto first = out.normalized.end() - static_cast<std::ptrdiff_t>(tail);
  auto [lo, hi] = std::minmax_element(first, out.normalized.end());
  double mean = std::accumulate(first, out.normalized.end(), 0.0) / static_cast<double>(tail);
  out.oscillation = mean > 0.0 ? (*hi - *lo) / mean : 0.0;
  out.plateau = out.oscillation <= tolerance;
  return out;
}

double normal_cdf(double x, double sigma2) {
  if (sigma2 <= 0.0) return x >= 0.0 ? 1.0 : 0.0;
  return 0.5 * std::erfc(-x / std::sqrt(2.0 * sigma2));
}

double ks_distance(std::vector<double> sample, double sigma2) {
  if (sample.empty()) return 0.0;
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double ks = 0.0;
  std::size_t i = 0;
  while (i < sample.size()) {
    std::size_t j = i;
    while (j < sample.size() && sample[j] == sample[i]) ++j;
    const double z = sample[i];
    const double before = static_cast<double>(i) / n;
    const double after = static_cast<double>(j) / n;
    const double ref = normal_cdf(z, sigma2);
    const double ref_left = sigma2 <= 0.0 ? (z > 0.0 ? 1.0 : 0.0) : ref;
    ks = std::max({ks, std::abs(before - ref_left), std::abs(after - ref)});
    i = j;
  }
  if (sigma2 <= 0.0) {
    // The reference jumps at 0 as well.
    auto below = static_cast<double>(std::lower_bound(sample.begin(), sample.end(), 0.0) - sample.begin()) / n;
    auto upto = static_cast<double>(std::upper_bound(sample.begin(), sample.end(), 0.0) - sample.begin()) / n;
    ks = std::max({ks, below, 1.0 - upto});
  }
  return ks;
}

namespace {

CenteredStatistics centered(std::vector<double> z, double sigma2) {
  CenteredStatistics out;
  out.moments.assign(4, 0.0);
  for (double x : z) {
    double p = 1.0;
    for (int k = 0; k < 4; ++k) out.moments[static_cast<std::size_t>(k)] += p *= x;
  }
  for (double& m : out.moments) m /= z.empty() ? 1.0 : static_cast<double>(z.size());
  std::sort(z.begin(), z.end());
  for (int i = 0; i <= 200; ++i) {
    double t = -5.0 + 0.05 * i;
    double emp = z.empty() ? 0.0
                           : static_cast<double>(std::upper_bound(z.begin(), z.end(), t) - z.begin()) /
                                 static_cast<double>(z.size());
    out.cdf.push_back({t, emp, normal_cdf(t, sigma2)});
  }
  out.ks = ks_distance(std::move(z), sigma2);
  return out;
}

}  // namespace

MomentReport clt_report(const BallEnumeration& ball, double T, double tau, double sigma2) {
  if (!ball.has_d_star) throw Error("clt_report: the enumeration carries no d* column");
  if (T > ball.T) throw Error("clt_report: T beyond the enumerated radius");
  MomentReport r;
  r.T = T;
  r.tau = tau;
  r.sigma2 = sigma2;
  r.count = ball.count_below(T);
  if (r.count == 0) throw Error("clt_report: empty ball");
  const double root = std::sqrt(T);
  std::vector<double> level, dist;
  level.reserve(r.count);
  dist.reserve(r.count);
  double sum_star = 0.0, sum_d = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < r.count; ++i) {
    const auto& row = ball.row(i);
    sum_star += row.d_star;
    sum_d += row.d;
    const double c = row.d_star - tau * T;
    sum_sq += c * c / T;
    level.push_back(c / root);
    dist.push_back((row.d_star - tau * row.d) / root);
  }
  const double n = static_cast<double>(r.count);
  r.tau_hat = sum_star / n / T;
  r.tau_ratio = sum_d > 0.0 ? sum_star / sum_d : 0.0;
  r.level = centered(std::move(level), sigma2);
  r.distortion = centered(std::move(dist), sigma2);
  r.targets = {0.0, sigma2, 0.0, 3.0 * sigma2 * sigma2};
  r.variance_statistic = sum_sq / n;
  const double nm2 = n * r.level.moments[1];
  r.variance_identity_error = std::abs(nm2 - sum_sq) / std::max(1.0, std::abs(nm2));
  return r;
}

SimilarityReport rough_similarity_test(const MetricModel& d, const MetricModel& d_star, const FreeGroup& group,
                                       int samples, std::uint64_t seed, double tolerance, int max_length,
                                       int max_power) {
  if (samples < 1) throw Error("rough_similarity_test: need at least one sample");
  const auto letters = static_cast<int>(group.alphabet().size());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> length(2, std::max(2, max_length));
  SimilarityReport r;
  r.samples = samples;
  r.ratio_min = std::numeric_limits<double>::infinity();
  r.ratio_max = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (int s = 0; s < samples; ++s) {
    GroupElement g;
    while (g.is_identity()) {
      Word w;
      int n = length(rng);
      while (static_cast<int>(w.size()) < n) {
        Letter x = static_cast<Letter>(std::uniform_int_distribution<int>(0, letters - 1)(rng));
        if (!w.empty() && group.alphabet().inverse(x) == w.back()) continue;
        w.push_back(x);
      }
      g = group.cyclic_reduction(group.reduce(w));
    }
    TranslationLength a = translation_length(d, group, g, max_power);
    TranslationLength b = translation_length(d_star, group, g, max_power);
    const double ratio = b.estimate / a.estimate;
    const double lo = b.lower / a.upper;
    const double hi = a.lower > 0.0 ? b.upper / a.lower : std::numeric_limits<double>::infinity();
    r.bracket_allowance = std::max(r.bracket_allowance, hi - lo);
    if ((hi - lo) > 0.05 * ratio) ++r.wide_brackets;
    r.ratio_min = std::min(r.ratio_min, ratio);
    r.ratio_max = std::max(r.ratio_max, ratio);
    total += ratio;
  }
  if (r.wide_brackets * 10 > samples)
    throw Error("rough_similarity_test: translation-length brackets too wide on more than 10% of samples");
  r.spread = r.ratio_max - r.ratio_min;
  r.tau_estimate = total / samples;
  r.similar = r.spread <= tolerance + r.bracket_allowance;
  return r;
}

DefectPoint translation_defect_fraction(const BallEnumeration& ball, const MetricModel& d, const FreeGroup& group,
                                        double T, double exponent) {
  DefectPoint p;
  p.T = T;
  p.count = ball.count_below(T);
  const double threshold = std::pow(T, exponent);
  for (std::size_t i = 0; i < p.count; ++i) {
    GroupElement g = group.reduce(ball.word(i));
    const double dist = ball.row(i).d;
    if (g.is_identity()) {
      if (dist > threshold) ++p.defective;
      continue;
    }
    TranslationLength ell = translation_length(d, group, g, 8);
    if (dist - ell.upper > threshold) {
      ++p.defective;
    } else if (dist - ell.lower > threshold) {
      ++p.inconclusive;
    }
  }
  p.fraction = p.count ? static_cast<double>(p.defective) / static_cast<double>(p.count) : 0.0;
  return p;
}

GrowthFit empirical_manhattan(const BallEnumeration& ball, const std::vector<double>& T_grid, double s) {
  if (!ball.has_d_star) throw Error("empirical_manhattan: the enumeration carries no d* column");
  std::vector<double> sorted = T_grid;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> sums;
  double acc = 0.0;
  std::size_t i = 0;
  for (double t : sorted) {
    if (t > ball.T) throw Error("empirical_manhattan: grid point beyond the enumerated radius");
    const std::size_t end = ball.count_below(t);
    for (; i < end; ++i) acc += std::exp(-s * ball.row(i).d_star);
    sums.push_back(acc);
  }
  return growth_rate(sorted, sums);
}

std::vector<double> fit_grid(double T_max, int points) {
  if (points < 5 || !(T_max > 0.0)) throw Error("fit_grid: need T_max > 0 and at least 5 points");
  std::vector<double> grid;
  for (int i = 0; i < points; ++i) grid.push_back(T_max / 3.0 + (T_max - T_max / 3.0) * i / (points - 1));
  return grid;
}

std::vector<double> default_T_grid(double T_max, double growth_rate, int points) {
  if (points < 5) throw Error("default_T_grid: need at least 5 points");
  if (!(growth_rate > 0.0) || !(T_max > 0.0)) throw Error("default_T_grid: T_max and the growth rate must be positive");
  // Evenly spaced T, i.e. geometrically spaced ball sizes, spanning at least 3 units of v T.
  const double span = std::min(T_max * 0.5, std::max(3.0 / growth_rate, T_max * 0.4));
  std::vector<double> grid;
  for (int i = 0; i < points; ++i) grid.push_back(T_max - span * (points - 1 - i) / (points - 1));
  return grid;
}

}  // namespace hypstat
