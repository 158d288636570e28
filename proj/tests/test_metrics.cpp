#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>
#include <sstream>

#include "hypstat/automaton.hpp"
#include "hypstat/busemann.hpp"
#include "hypstat/green.hpp"
#include "hypstat/hilbert.hpp"
#include "hypstat/metrics.hpp"

using namespace hypstat;

namespace {

// Uniformly random reduced word of the given length.
GroupElement random_reduced(std::mt19937_64& rng, const FreeGroup& g, int length) {
  const int n = static_cast<int>(g.alphabet().size());
  Word w;
  while (static_cast<int>(w.size()) < length) {
    Letter x = static_cast<Letter>(std::uniform_int_distribution<int>(0, n - 1)(rng));
    if (!w.empty() && g.alphabet().inverse(w.back()) == x) continue;
    w.push_back(x);
  }
  return GroupElement{w};
}

// Smaller root of (2k-1) r^2 - 2k r + 1 = 0, the return probability of simple
// random walk on the 2k-regular tree.
double srw_first_passage(int k) {
  const double a = 2.0 * k - 1.0, b = -2.0 * k, c = 1.0;
  return (-b - std::sqrt(b * b - 4.0 * a * c)) / (2.0 * a);
}

using cld = std::complex<long double>;

// Hyperbolic distance from i to rho(g) i via the Moebius action.
long double hyperbolic_orbit_distance(const MatrixRep& rep, const Word& w) {
  cld z(0.0L, 1.0L);
  for (auto it = w.rbegin(); it != w.rend(); ++it) {
    const Eigen::MatrixXd& m = rep.generators[*it];
    cld a = m(0, 0), b = m(0, 1), c = m(1, 0), d = m(1, 1);
    z = (a * z + b) / (c * z + d);
  }
  const cld i(0.0L, 1.0L);
  long double num = std::norm(z - i);
  return std::acosh(1.0L + num / (2.0L * z.imag()));
}

}  // namespace

TEST_CASE("word metric") {
  FreeGroup g = FreeGroup::of_rank(2);
  MetricModel d = word_metric(g.alphabet());
  CHECK(d(g.element("abAB")) == 4.0);
  CHECK(d(GroupElement{}) == 0.0);
  CHECK(d.between(g, g.element("ab"), g.element("aB")) == 2.0);
  MetricModel d2 = scale_metric(d, 2.0);
  CHECK(d2(g.element("ab")) == 4.0);
  CHECK(d2.letter_weights()->at(0) == 2.0);
}

TEST_CASE("translation lengths of the word metric") {
  FreeGroup g = FreeGroup::of_rank(2);
  MetricModel d = word_metric(g.alphabet());
  auto ab = translation_length(d, g, g.element("ab"), 16);
  CHECK(ab.exact);
  CHECK(ab.estimate == 2.0);
  CHECK(translation_length(d, g, g.element("abA"), 16).estimate == 1.0);
  CHECK(translation_length(d, g, g.element("aabAA"), 16).estimate == 1.0);
}

TEST_CASE("simple random walk Green metric matches the first-passage root") {
  for (int k : {2, 3}) {
    FreeGroup g = FreeGroup::of_rank(k);
    std::vector<double> weights(static_cast<std::size_t>(k), 1.0 / (2.0 * k));
    GreenModel green = green_metric(nearest_neighbour_measure(g, weights));
    CHECK(green.table.route == GreenRoute::first_passage);
    const double r = srw_first_passage(k);
    CHECK(r == doctest::Approx(1.0 / (2 * k - 1)).epsilon(1e-14));
    for (double f : green.table.first_passage) CHECK(f == doctest::Approx(r).epsilon(1e-12));
    // Kesten: rho = sqrt(2k-1)/k for simple random walk on F_k.
    CHECK(green.table.spectral_radius_bound == doctest::Approx(std::sqrt(2.0 * k - 1.0) / k).epsilon(1e-9));
    // G(o,o) = 1 / (1 - sum_y mu(y) F(y^-1)) = (2k-1)/(2k-2)
    CHECK(green.table.origin_value == doctest::Approx((2.0 * k - 1) / (2.0 * k - 2)).epsilon(1e-12));
    for_each_coding_word(build_free_group_coding(k), 6, [&](const Word& w) {
      if (w.empty()) return;
      REQUIRE(green.metric.distance(w) / w.size() == doctest::Approx(-std::log(r)).epsilon(1e-12));
    });
  }
}

TEST_CASE("weighted nearest-neighbour first passage solves its renewal equations") {
  FreeGroup g = FreeGroup::of_rank(2);
  FiniteMeasure mu = nearest_neighbour_measure(g, {0.35, 0.15});
  GreenModel green = green_metric(mu);
  const auto& F = green.table.first_passage;
  const Alphabet& al = g.alphabet();
  // F(x) = mu(x) + sum_{y != x} mu(y) F(y^-1) F(x)
  for (Letter x = 0; x < al.size(); ++x) {
    double rhs = mu.weights.at(GroupElement{{x}});
    for (Letter y = 0; y < al.size(); ++y) {
      if (y != x) rhs += mu.weights.at(GroupElement{{y}}) * F[al.inverse(y)] * F[x];
    }
    CHECK(F[x] == doctest::Approx(rhs).epsilon(1e-13));
  }
  auto w = green.metric.letter_weights();
  REQUIRE(w.has_value());
  CHECK((*w)[al.letter("a")] == doctest::Approx(-std::log(F[al.letter("a")])).epsilon(1e-14));
  CHECK((*w)[al.letter("a")] < (*w)[al.letter("b")]);
}

TEST_CASE("convolution route agrees with first passage up to its certified error") {
  FreeGroup g = FreeGroup::of_rank(2);
  FiniteMeasure mu = nearest_neighbour_measure(g, {0.35, 0.15});
  GreenModel exact = green_metric(mu);
  GreenOptions opt;
  opt.allow_first_passage = false;
  opt.truncation = 12;
  GreenModel conv = green_metric(mu, opt);
  CHECK(conv.table.route == GreenRoute::convolution);
  CHECK(conv.table.origin_value <= exact.table.origin_value + 1e-12);
  CHECK(exact.table.origin_value <= conv.table.origin_value + conv.table.origin_error);
  for (const auto& [h, entry] : conv.table.entries) {
    if (h.length() == 0 || h.length() > 6) continue;
    GreenEntry e = exact.table.lookup(g, h);
    CHECK(entry.value <= e.value + 1e-12);
    CHECK(std::abs(entry.distance - e.distance) <= entry.distance_error + 1e-9);
  }
  // Recomputing with N + 10 moves no value by more than its reported error.
  opt.truncation = 2;
  GreenModel shallow = green_metric(mu, opt);
  for (const auto& [h, entry] : shallow.table.entries) {
    const GreenEntry& deep = conv.table.entries.at(h);
    CHECK(deep.value >= entry.value);
    CHECK(deep.value - entry.value <= entry.error);
  }
}

TEST_CASE("convolution powers: return probabilities and parity") {
  FreeGroup g = FreeGroup::of_rank(2);
  auto powers = convolution_powers(nearest_neighbour_measure(g, {0.25, 0.25}), 6);
  const GroupElement o;
  CHECK(powers[0].at(o) == 1.0);
  CHECK(powers[2].at(o) == doctest::Approx(0.25).epsilon(1e-15));
  // 4-step returns: 4 * (1/4)^4 * (number of closed walks) = 28 / 256
  CHECK(powers[4].at(o) == doctest::Approx(28.0 / 256.0).epsilon(1e-14));
  for (int n : {1, 3, 5}) CHECK(powers[static_cast<std::size_t>(n)].count(o) == 0);
  for (const auto& p : powers) {
    double mass = 0.0;
    for (const auto& [h, v] : p) mass += v;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-13));
  }
  // The spectral radius of simple random walk on F_2 is sqrt(3)/2.
  auto longer = convolution_powers(nearest_neighbour_measure(g, {0.25, 0.25}), 10);
  double rho = walk_spectral_radius_bound(longer);
  CHECK(rho > std::sqrt(3.0) / 2.0);
  CHECK(rho < 1.0);
}

TEST_CASE("convolution tail certificate holds between truncations") {
  FreeGroup g = FreeGroup::of_rank(2);
  FiniteMeasure mu;
  mu.group = g;
  // Non-nearest-neighbour symmetric measure: letters and a^2, A^2.
  for (const char* x : {"a", "A", "b", "B"}) mu.weights[g.element(x)] = 0.2;
  for (const char* x : {"aa", "AA"}) mu.weights[g.element(x)] = 0.1;
  validate_measure(mu);
  GreenOptions lo, hi;
  lo.allow_first_passage = hi.allow_first_passage = false;
  lo.truncation = 4;
  hi.truncation = 8;
  GreenModel a = green_metric(mu, lo);
  GreenModel b = green_metric(mu, hi);
  CHECK(a.table.route == GreenRoute::convolution);
  int checked = 0;
  for (const auto& [h, entry] : a.table.entries) {
    if (!std::isfinite(entry.distance_error)) continue;
    auto it = b.table.entries.find(h);
    REQUIRE(it != b.table.entries.end());
    CHECK(it->second.value >= entry.value - 1e-15);
    CHECK(it->second.value <= entry.value + entry.error + 1e-15);
    ++checked;
  }
  CHECK(checked > 5);
}

TEST_CASE("measure validation and parsing") {
  FreeGroup g = FreeGroup::of_rank(2);
  std::istringstream good("# srw\nweight a 1/4\nweight A 1/4\nweight b 0.25\nweight B 0.25\n");
  FiniteMeasure mu = parse_measure(g, good);
  CHECK(mu.is_nearest_neighbour());
  CHECK(mu.weights.at(g.element("b")) == 0.25);
  std::istringstream asym("weight a 0.3\nweight A 0.2\nweight b 0.25\nweight B 0.25\n");
  CHECK_THROWS_AS(parse_measure(g, asym), Error);
  std::istringstream mass("weight a 0.3\nweight A 0.3\nweight b 0.3\nweight B 0.3\n");
  CHECK_THROWS_AS(parse_measure(g, mass), Error);
  std::istringstream sub("weight a 0.5\nweight A 0.5\n");
  CHECK_THROWS_AS(parse_measure(g, sub), Error);
}

TEST_CASE("Green table text round trip") {
  FreeGroup g = FreeGroup::of_rank(2);
  FiniteMeasure mu = nearest_neighbour_measure(g, {0.3, 0.2});
  GreenModel green = green_metric(mu);
  std::stringstream buf;
  write_green_table(buf, green.table, g.alphabet());
  MetricModel back = green_metric_from_table(mu, read_green_table(buf, g.alphabet()));
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    GroupElement h = random_reduced(rng, g, 1 + i % 9);
    CHECK(back(h) == green.metric(h));
  }
}

TEST_CASE("Hilbert length equals the hyperbolic orbit distance") {
  MatrixRep rep = schottky_representation();
  MetricModel alpha = hilbert_length(rep);
  double worst = 0.0;
  for_each_coding_word(build_free_group_coding(2), 6, [&](const Word& w) {
    double expected = static_cast<double>(hyperbolic_orbit_distance(rep, w));
    worst = std::max(worst, std::abs(alpha.distance(w) - expected));
  });
  CHECK(worst <= 1e-9);
  CHECK(alpha.quasi_isometry().known());
}

TEST_CASE("Hilbert translation length is 2 arccosh(|tr|/2)") {
  MatrixRep rep = schottky_representation(1.2);
  MetricModel alpha = hilbert_length(rep, 0);
  FreeGroup g = FreeGroup::of_rank(2);
  for (const char* text : {"a", "ab", "aBB", "abAB"}) {
    GroupElement h = g.element(text);
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(2, 2);
    for (Letter x : h.word) m = m * rep.generators[x];
    const double expected = 2.0 * std::acosh(std::abs(m.trace()) / 2.0);
    TranslationLength t = translation_length(alpha, g, h, 64);
    CHECK(t.lower <= expected + 1e-9);
    CHECK(t.upper >= expected - 1e-9);
    CHECK(std::abs(t.estimate - expected) <= t.width() + 1e-9);
    CHECK(t.width() < 0.05 * expected);
  }
}

TEST_CASE("matrix representation parsing and validation") {
  Alphabet al = Alphabet::free(2);
  std::istringstream in("dim 2\ngen a\n2 0\n0 0.5\ngen b\n1 1\n0 1\n");
  MatrixRep rep = parse_matrix_rep(al, in);
  CHECK(rep.generators[al.letter("B")](0, 1) == doctest::Approx(-1.0));
  std::stringstream buf;
  write_matrix_rep(buf, rep);
  MatrixRep back = parse_matrix_rep(al, buf);
  CHECK(back.generators[al.letter("A")].isApprox(rep.generators[al.letter("A")], 1e-15));
  std::istringstream bad_det("dim 2\ngen a\n2 0\n0 1\ngen b\n1 1\n0 1\n");
  CHECK_THROWS_AS(parse_matrix_rep(al, bad_det), Error);
}

TEST_CASE("degenerate representation collapses") {
  MatrixRep rep = schottky_representation();
  rep.generators[rep.alphabet.letter("b")] = Eigen::MatrixXd::Identity(2, 2);
  rep.generators[rep.alphabet.letter("B")] = Eigen::MatrixXd::Identity(2, 2);
  AnosovScan scan = anosov_scan(rep, 6);
  CHECK(scan.collapsed);
  CHECK_FALSE(anosov_scan(schottky_representation(), 6).collapsed);
}

TEST_CASE("Busemann potentials of word and SRW Green metrics are constant") {
  AutomaticStructure a = build_free_group_coding(2);
  FreeGroup g = a.free_group();
  MetricModel word = word_metric(a.alphabet());
  MetricModel green = green_metric(nearest_neighbour_measure(g, {0.25, 0.25})).metric;
  struct Case {
    const MetricModel* d;
    double factor;
    double expected;
  };
  for (const auto& [d, factor, expected] :
       std::vector<Case>{{&word, 1.0, 1.0}, {&word, 2.0, 2.0}, {&green, 1.0, std::log(3.0)}}) {
    CylinderPotential psi = busemann_potential(scale_metric(*d, factor), a);
    REQUIRE(!psi.values.empty());
    for (const auto& [c, v] : psi.values) CHECK(v == doctest::Approx(expected).epsilon(1e-12));
    CHECK(psi.resolution_error <= 1e-12);
  }
}

TEST_CASE("Birkhoff sums of the potential track the metric") {
  AutomaticStructure a = build_free_group_coding(2);
  MetricModel word = word_metric(a.alphabet());
  CoherenceReport exact = busemann_coherence(word, a, busemann_potential(word, a), 12, 200, 5);
  CHECK(exact.max_defect <= 1e-10);

  MetricModel green = green_metric(nearest_neighbour_measure(a.free_group(), {0.35, 0.15})).metric;
  CoherenceReport r = busemann_coherence(green, a, busemann_potential(green, a), 12, 200, 5);
  CHECK(r.max_defect <= 1e-9);
  CHECK(std::abs(r.slope) <= 1e-3);

  MatrixRep rep = schottky_representation();
  MetricModel alpha = hilbert_length(rep);
  // Orbit points sit off the geodesic ray, so the defect saturates at a
  // Gromov-product constant instead of vanishing.
  CoherenceReport h = busemann_coherence(alpha, a, busemann_potential(alpha, a), 12, 500, 5);
  CHECK(h.max_defect < 2.5);
  CHECK(h.sup_defect[11] - h.sup_defect[5] < 0.25);
}

TEST_CASE("quasi-isometry constants") {
  AutomaticStructure a = build_free_group_coding(2);
  MetricModel word = word_metric(a.alphabet());
  QuasiIsometry qi = measure_quasi_isometry(scale_metric(word, 3.0), a, 5);
  CHECK(qi.L == doctest::Approx(3.0));
  CHECK(qi.C == 0.0);
}
