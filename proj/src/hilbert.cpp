#include "hypstat/hilbert.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "hypstat/automaton.hpp"

namespace hypstat {

void validate_rep(const MatrixRep& rep) {
  if (rep.dim < 1) throw Error("representation: dimension must be positive");
  if (rep.generators.size() != rep.alphabet.size()) throw Error("representation: one matrix per letter required");
  const auto id = Eigen::MatrixXd::Identity(rep.dim, rep.dim);
  for (Letter x = 0; x < rep.alphabet.size(); ++x) {
    const auto& m = rep.generators[x];
    const std::string name = rep.alphabet.name(x);
    if (m.rows() != rep.dim || m.cols() != rep.dim) throw Error("representation: matrix for " + name + " has wrong shape");
    if (!m.allFinite()) throw Error("representation: matrix for " + name + " is not finite");
    double err = (m * rep.generators[rep.alphabet.inverse(x)] - id).cwiseAbs().maxCoeff();
    if (err > 1e-12)
      throw Error("representation: rho(" + name + ") rho(" + rep.alphabet.name(rep.alphabet.inverse(x)) +
                  ") differs from the identity by " + std::to_string(err));
    if (std::abs(std::abs(m.determinant()) - 1.0) > 1e-9)
      throw Error("representation: matrix for " + name + " does not have unit determinant");
  }
}

MatrixRep parse_matrix_rep(const Alphabet& alphabet, std::istream& in, const std::string& source) {
  MatrixRep rep{alphabet, 0, {}};
  std::vector<bool> given(alphabet.size(), false);
  rep.generators.resize(alphabet.size());
  std::string line;
  int lineno = 0;
  auto next_tokens = [&]() -> std::vector<std::string> {
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream ss(line.substr(0, line.find('#')));
      std::vector<std::string> tok;
      std::string t;
      while (ss >> t) tok.push_back(t);
      if (!tok.empty()) return tok;
    }
    return {};
  };
  for (auto tok = next_tokens(); !tok.empty(); tok = next_tokens()) {
    if (tok[0] == "dim") {
      if (tok.size() != 2 || rep.dim != 0) throw ParseError(source, lineno, "expected a single 'dim <n>'");
      rep.dim = std::atoi(tok[1].c_str());
      if (rep.dim < 1) throw ParseError(source, lineno, "dimension must be positive");
    } else if (tok[0] == "gen") {
      if (rep.dim == 0) throw ParseError(source, lineno, "'gen' before 'dim'");
      if (tok.size() != 2) throw ParseError(source, lineno, "usage: gen <letter>");
      auto x = alphabet.find(tok[1]);
      if (!x) throw ParseError(source, lineno, "unknown letter '" + tok[1] + "'");
      if (given[*x]) throw ParseError(source, lineno, "duplicate matrix for '" + tok[1] + "'");
      Eigen::MatrixXd m(rep.dim, rep.dim);
      for (int r = 0; r < rep.dim; ++r) {
        auto row = next_tokens();
        if (static_cast<int>(row.size()) != rep.dim)
          throw ParseError(source, lineno, "expected " + std::to_string(rep.dim) + " numbers");
        for (int c = 0; c < rep.dim; ++c) {
          try {
            m(r, c) = std::stod(row[static_cast<std::size_t>(c)]);
          } catch (const std::exception&) {
            throw ParseError(source, lineno, "bad number '" + row[static_cast<std::size_t>(c)] + "'");
          }
        }
      }
      rep.generators[*x] = m;
      given[*x] = true;
    } else {
      throw ParseError(source, lineno, "unknown record '" + tok[0] + "'");
    }
  }
  if (rep.dim == 0) throw ParseError(source, lineno, "missing 'dim'");
  for (Letter x = 0; x < alphabet.size(); ++x) {
    if (given[x]) continue;
    Letter y = alphabet.inverse(x);
    if (!given[y]) throw ParseError(source, lineno, "no matrix for '" + alphabet.name(x) + "' or its inverse");
    rep.generators[x] = rep.generators[y].inverse();
  }
  try {
    validate_rep(rep);
  } catch (const Error& e) {
    throw ParseError(source, lineno, e.what());
  }
  return rep;
}

MatrixRep load_matrix_rep(const Alphabet& alphabet, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open representation file '" + path.string() + "'");
  return parse_matrix_rep(alphabet, in, path.string());
}

void write_matrix_rep(std::ostream& out, const MatrixRep& rep) {
  out << "dim " << rep.dim << "\n";
  out.precision(17);
  for (Letter x = 0; x < rep.alphabet.size(); ++x) {
    out << "gen " << rep.alphabet.name(x) << "\n";
    for (int r = 0; r < rep.dim; ++r) {
      for (int c = 0; c < rep.dim; ++c) out << (c ? " " : "") << rep.generators[x](r, c);
      out << "\n";
    }
  }
}

MatrixRep schottky_representation(double half_length) {
  if (!(half_length > 0.0)) throw Error("schottky_representation: half_length must be positive");
  MatrixRep rep{Alphabet::free(2), 2, {}};
  const double c = std::cosh(half_length);
  const double s = std::sinh(half_length);
  Eigen::Matrix2d a;
  a << c, s, s, c;
  Eigen::Matrix2d b;
  b << std::exp(half_length), 0.0, 0.0, std::exp(-half_length);
  rep.generators = {a, a.inverse(), b, b.inverse()};
  validate_rep(rep);
  return rep;
}

double log_top_singular_value(const MatrixRep& rep, std::span<const Letter> word) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(rep.dim, rep.dim);
  double log_scale = 0.0;
  std::size_t since = 0;
  for (Letter x : word) {
    acc = acc * rep.generators[x];
    if (++since == 8) {
      double s = acc.cwiseAbs().maxCoeff();
      acc /= s;
      log_scale += std::log(s);
      since = 0;
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(acc);
  return log_scale + std::log(svd.singularValues()(0));
}

namespace {

class HilbertEvaluator final : public DistanceEvaluator {
 public:
  explicit HilbertEvaluator(MatrixRep rep) : rep_(std::move(rep)) {}

  double distance(std::span<const Letter> word) const override {
    if (word.empty()) return 0.0;
    Word inv(word.rbegin(), word.rend());
    for (Letter& x : inv) x = rep_.alphabet.inverse(x);
    return log_top_singular_value(rep_, word) + log_top_singular_value(rep_, inv);
  }

  double tolerance() const override { return 1e-12; }

 private:
  MatrixRep rep_;
};

}  // namespace

MetricModel hilbert_length(const MatrixRep& rep, int qi_radius) {
  validate_rep(rep);
  MetricModel d(MetricKind::hilbert, std::make_shared<HilbertEvaluator>(rep), rep.alphabet,
                "hilbert(dim=" + std::to_string(rep.dim) + ")");
  if (qi_radius > 0 && rep.alphabet.size() >= 4) {
    AutomaticStructure coding = build_free_group_coding(static_cast<int>(rep.alphabet.size() / 2));
    d = d.with_quasi_isometry(measure_quasi_isometry(d, coding, qi_radius));
  }
  return d;
}

AnosovScan anosov_scan(const MatrixRep& rep, int radius, double threshold) {
  if (radius < 1) throw Error("anosov_scan: radius must be positive");
  MetricModel d = hilbert_length(rep, 0);
  AutomaticStructure coding = build_free_group_coding(static_cast<int>(rep.alphabet.size() / 2));
  AnosovScan out;
  out.radius = radius;
  out.min_ratio = std::numeric_limits<double>::infinity();
  for_each_coding_word(coding, radius, [&](const Word& w) {
    if (static_cast<int>(w.size()) != radius) return;
    double r = d.distance(w) / radius;
    if (r < out.min_ratio) {
      out.min_ratio = r;
      out.worst_word = rep.alphabet.format(w);
    }
  });
  out.collapsed = out.min_ratio < threshold;
  return out;
}

}  // namespace hypstat
