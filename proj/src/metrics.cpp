#include "hypstat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace hypstat {

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::word: return "word";
    case MetricKind::green: return "green";
    case MetricKind::hilbert: return "hilbert";
    case MetricKind::table: return "table";
    case MetricKind::scaled: return "scaled";
  }
  return "unknown";
}

MetricModel::MetricModel(MetricKind kind, std::shared_ptr<const DistanceEvaluator> evaluator, Alphabet alphabet,
                         std::string description)
    : kind_(kind),
      base_kind_(kind),
      evaluator_(std::move(evaluator)),
      alphabet_(std::move(alphabet)),
      description_(std::move(description)) {
  if (!evaluator_) throw Error("metric model: null evaluator");
}

double MetricModel::between(const FreeGroup& group, const GroupElement& g, const GroupElement& h) const {
  return (*this)(group.multiply(group.invert(g), h));
}

std::optional<std::vector<double>> MetricModel::letter_weights() const {
  if (!letter_weights_) return std::nullopt;
  std::vector<double> w = *letter_weights_;
  for (double& x : w) x *= scale_;
  return w;
}

MetricModel MetricModel::with_quasi_isometry(QuasiIsometry qi) const {
  MetricModel out = *this;
  out.qi_ = qi;
  return out;
}

MetricModel MetricModel::with_strongly_hyperbolic(bool flag) const {
  MetricModel out = *this;
  out.strongly_hyperbolic_ = flag;
  return out;
}

MetricModel MetricModel::with_letter_weights(std::vector<double> weights) const {
  if (weights.size() != alphabet_.size()) throw Error("letter weights: size mismatch");
  MetricModel out = *this;
  for (double& x : weights) x /= scale_;
  out.letter_weights_ = std::move(weights);
  return out;
}

namespace {

class WordLength final : public DistanceEvaluator {
 public:
  double distance(std::span<const Letter> word) const override { return static_cast<double>(word.size()); }
};

class TableLookup final : public DistanceEvaluator {
 public:
  TableLookup(Alphabet alphabet, std::map<GroupElement, double> values)
      : alphabet_(std::move(alphabet)), values_(std::move(values)) {}
  double distance(std::span<const Letter> word) const override {
    auto it = values_.find(GroupElement{Word(word.begin(), word.end())});
    if (it == values_.end()) throw Error("table metric: no value for " + alphabet_.format(word));
    return it->second;
  }

 private:
  Alphabet alphabet_;
  std::map<GroupElement, double> values_;
};

}  // namespace

MetricModel word_metric(const Alphabet& alphabet) {
  MetricModel d(MetricKind::word, std::make_shared<WordLength>(), alphabet, "word");
  return d.with_quasi_isometry({1.0, 0.0}).with_letter_weights(std::vector<double>(alphabet.size(), 1.0));
}

MetricModel scale_metric(const MetricModel& d, double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw Error("scale_metric: factor must be positive");
  MetricModel out = d;
  out.kind_ = MetricKind::scaled;
  out.scale_ = d.scale_ * c;
  std::ostringstream desc;
  desc.precision(17);
  desc << "scaled(" << c << ", " << d.description_ << ")";
  out.description_ = desc.str();
  if (d.qi_.known()) out.qi_ = QuasiIsometry{d.qi_.L * std::max(c, 1.0 / c), d.qi_.C * c};
  return out;
}

MetricModel table_metric(const Alphabet& alphabet, std::map<GroupElement, double> values, std::string description) {
  for (const auto& [g, v] : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error("table metric: invalid value for " + alphabet.format(g.word));
  }
  return MetricModel(MetricKind::table, std::make_shared<TableLookup>(alphabet, std::move(values)), alphabet,
                     std::move(description));
}

MetricModel load_metric_table(const Alphabet& alphabet, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open metric table '" + path.string() + "'");
  std::map<GroupElement, double> values;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = line.substr(0, line.find('#'));
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(path.string(), lineno, "expected 'word,value'");
    std::string word = line.substr(0, comma);
    std::string value = line.substr(comma + 1);
    word.erase(std::remove_if(word.begin(), word.end(), ::isspace), word.end());
    if (lineno == 1 && word == "word") continue;
    try {
      values[GroupElement{alphabet.parse(word)}] = std::stod(value);
    } catch (const std::invalid_argument&) {
      throw ParseError(path.string(), lineno, "bad value '" + value + "'");
    } catch (const Error& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  return table_metric(alphabet, std::move(values), "table(" + path.filename().string() + ")");
}

QuasiIsometry measure_quasi_isometry(const MetricModel& d, const AutomaticStructure& a, int radius) {
  double L = 1.0;
  double C = 0.0;
  for_each_coding_word(a, radius, [&](const Word& w) {
    if (w.empty()) return;
    double dist = d.distance(w);
    double len = static_cast<double>(w.size());
    if (dist <= 0.0) {
      C = std::max(C, len - dist);
      return;
    }
    L = std::max({L, dist / len, len / dist});
  });
  return {L, C};
}

TranslationLength translation_length(const MetricModel& d, const FreeGroup& group, const GroupElement& g,
                                     int max_power, double max_width) {
  if (g.is_identity()) throw Error("translation_length: g must not be the identity");
  if (max_power < 1) throw Error("translation_length: max_power must be positive");
  TranslationLength out;
  if (auto weights = d.letter_weights()) {
    GroupElement c = group.cyclic_reduction(g);
    double ell = 0.0;
    for (Letter x : c.word) ell += (*weights)[x];
    out.estimate = out.lower = out.upper = ell;
    out.exact = true;
    return out;
  }
  std::vector<int> powers;
  for (int n = 1; n <= 2 * max_power; n *= 2) powers.push_back(n);
  std::vector<double> a(static_cast<std::size_t>(powers.back()) + 1, 0.0);
  GroupElement gp = group.reduce(g.word);
  GroupElement acc;
  int have = 0;
  for (int n : powers) {
    while (have < n) {
      acc = group.multiply(acc, gp);
      ++have;
    }
    a[static_cast<std::size_t>(n)] = d(acc);
  }
  // Largest dyadic power not exceeding max_power gives the estimate.
  int est_n = 1;
  while (est_n * 2 <= max_power) est_n *= 2;
  out.estimate = a[static_cast<std::size_t>(est_n)] / est_n;
  double K = 0.0;
  for (int n : powers) {
    if (2 * n <= powers.back()) K = std::max(K, 2.0 * a[static_cast<std::size_t>(n)] - a[static_cast<std::size_t>(2 * n)]);
  }
  out.upper = std::numeric_limits<double>::infinity();
  out.lower = 0.0;
  for (int n : powers) {
    if (n > est_n) continue;
    out.upper = std::min(out.upper, a[static_cast<std::size_t>(n)] / n);
    out.lower = std::max(out.lower, (a[static_cast<std::size_t>(n)] - K) / n);
  }
  double tol = 2.0 * d.tolerance();
  out.lower = std::max(0.0, out.lower - tol);
  out.upper += tol;
  if (max_width >= 0.0 && out.width() > max_width) {
    throw Error("translation_length: bracket width " + std::to_string(out.width()) + " exceeds " +
                std::to_string(max_width) + "; increase max_power");
  }
  return out;
}

}  // namespace hypstat
