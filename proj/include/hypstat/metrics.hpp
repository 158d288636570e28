#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hypstat/automaton.hpp"
#include "hypstat/group.hpp"

namespace hypstat {

enum class MetricKind { word, green, hilbert, table, scaled };
std::string to_string(MetricKind kind);

// L^-1 |g| - C <= d(o,g) <= L |g| + C against the reference word metric.
struct QuasiIsometry {
  double L = 0.0;  // 0 = not yet measured
  double C = 0.0;
  bool known() const { return L > 0.0; }
};

// d(o, g) for g given by a word in the group's normal form (reduced word for
// free groups, coding word otherwise).
class DistanceEvaluator {
 public:
  virtual ~DistanceEvaluator() = default;
  virtual double distance(std::span<const Letter> word) const = 0;
  // Nonzero when distance values carry a numerical error bound.
  virtual double tolerance() const { return 0.0; }
};

class MetricModel {
 public:
  MetricModel(MetricKind kind, std::shared_ptr<const DistanceEvaluator> evaluator, Alphabet alphabet,
              std::string description);

  double distance(std::span<const Letter> word) const { return scale_ * evaluator_->distance(word); }
  double operator()(const GroupElement& g) const { return distance(g.word); }
  // d(g, h) = d(o, g^-1 h); free groups only.
  double between(const FreeGroup& group, const GroupElement& g, const GroupElement& h) const;

  MetricKind kind() const { return kind_; }
  MetricKind base_kind() const { return base_kind_; }
  double scale() const { return scale_; }
  double tolerance() const { return scale_ * evaluator_->tolerance(); }
  const Alphabet& alphabet() const { return alphabet_; }
  const std::string& description() const { return description_; }
  const QuasiIsometry& quasi_isometry() const { return qi_; }
  bool strongly_hyperbolic() const { return strongly_hyperbolic_; }
  // Per-letter costs when d(o,g) is the sum over the letters of g (word metric,
  // nearest-neighbour Green metrics on free groups); already scaled.
  std::optional<std::vector<double>> letter_weights() const;

  MetricModel with_quasi_isometry(QuasiIsometry qi) const;
  MetricModel with_strongly_hyperbolic(bool flag) const;
  MetricModel with_letter_weights(std::vector<double> weights) const;

  friend MetricModel scale_metric(const MetricModel& d, double c);

 private:
  MetricKind kind_;
  MetricKind base_kind_;
  std::shared_ptr<const DistanceEvaluator> evaluator_;
  Alphabet alphabet_;
  std::string description_;
  double scale_ = 1.0;
  QuasiIsometry qi_;
  bool strongly_hyperbolic_ = true;
  std::optional<std::vector<double>> letter_weights_;
};

MetricModel word_metric(const Alphabet& alphabet);
MetricModel scale_metric(const MetricModel& d, double c);
// Explicit table of d(o,g); lookups outside the table throw.
MetricModel table_metric(const Alphabet& alphabet, std::map<GroupElement, double> values, std::string description);
// CSV lines "word,value" (header optional).
MetricModel load_metric_table(const Alphabet& alphabet, const std::filesystem::path& path);

// Visits every element of the coding ball of word radius <= radius, in
// depth-first order, as the label word of its *-path.
template <class Visit>
void for_each_coding_word(const AutomaticStructure& a, int radius, Visit&& visit);

// Smallest L with |g|/L <= d(o,g) <= L |g| over the coding ball (C = 0), or
// with C absorbing nonpositive values if any.
QuasiIsometry measure_quasi_isometry(const MetricModel& d, const AutomaticStructure& a, int radius);

struct TranslationLength {
  double estimate = 0.0;  // d(o, g^N) / N
  double lower = 0.0;
  double upper = 0.0;
  bool exact = false;
  double width() const { return upper - lower; }
};

// Stable length lim d(o,g^n)/n. Word metrics use cyclic reduction. Otherwise
// a_n = d(o, g^n) is sampled at dyadic n <= 2N: upper = min a_n/n by
// subadditivity, lower = max (a_n - K)/n with K the measured doubling defect
// max (2 a_m - a_2m).
TranslationLength translation_length(const MetricModel& d, const FreeGroup& group, const GroupElement& g,
                                     int max_power, double max_width = -1.0);

// ---------------------------------------------------------------------------

template <class Visit>
void for_each_coding_word(const AutomaticStructure& a, int radius, Visit&& visit) {
  Word word;
  visit(static_cast<const Word&>(word));
  if (radius <= 0) return;
  struct Frame {
    std::vector<std::size_t> edges;
    std::size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({a.proper_out_edges(kInitialVertex), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next == f.edges.size()) {
      stack.pop_back();
      if (!word.empty()) word.pop_back();
      continue;
    }
    const Edge& e = a.edges()[f.edges[f.next++]];
    word.push_back(*e.label);
    visit(static_cast<const Word&>(word));
    if (static_cast<int>(word.size()) < radius) {
      stack.push_back({a.proper_out_edges(e.target), 0});
    } else {
      word.pop_back();
    }
  }
}

}  // namespace hypstat
