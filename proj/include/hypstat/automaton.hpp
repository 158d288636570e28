#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hypstat/group.hpp"

namespace hypstat {

using VertexId = std::uint32_t;

inline constexpr VertexId kInitialVertex = 0;       // the start state *
inline constexpr VertexId kAugmentationVertex = 1;  // the absorbing padding state 0

enum class GroupKind { free, external };

struct Edge {
  VertexId source = 0;
  VertexId target = 0;
  std::optional<Letter> label;  // nullopt = identity label

  auto operator<=>(const Edge&) const = default;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, int line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Labelled digraph with initial state * (id 0) and augmentation state (id 1).
// The augmentation state has no outgoing edges; identity-labelled edges go into
// it from every other non-initial vertex.
class AutomaticStructure {
 public:
  AutomaticStructure(Alphabet alphabet, GroupKind kind, int free_rank, std::size_t vertex_count,
                     std::vector<Edge> edges, std::vector<std::string> vertex_names = {});

  const Alphabet& alphabet() const { return alphabet_; }
  GroupKind kind() const { return kind_; }
  int free_rank() const { return free_rank_; }
  std::size_t vertex_count() const { return vertex_count_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::string>& vertex_names() const { return names_; }

  // Indices into edges(), ordered by (target, label).
  const std::vector<std::size_t>& out_edges(VertexId v) const { return out_.at(v); }
  // Outgoing edges that avoid the augmentation vertex.
  std::vector<std::size_t> proper_out_edges(VertexId v) const;

  FreeGroup free_group() const;
  std::string group_description() const;

  // Structural equality: alphabet, kind, vertex count, edge multiset.
  bool same_structure(const AutomaticStructure& other) const;

 private:
  Alphabet alphabet_;
  GroupKind kind_;
  int free_rank_;
  std::size_t vertex_count_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::string> names_;
};

AutomaticStructure build_free_group_coding(int rank);

// Text format:
//   vertices N
//   initial <id>
//   [augmentation <id>]
//   [group free <rank>]
//   edge <src> <dst> <letter|e>
// with '#' comments. Vertices are renumbered: initial -> 0, augmentation -> 1,
// the rest in increasing file id.
AutomaticStructure parse_automatic_structure(std::istream& in, const std::string& source = "<input>");
AutomaticStructure load_automatic_structure(const std::filesystem::path& path);
void write_automatic_structure(std::ostream& out, const AutomaticStructure& a);

struct MarkovValidation {
  bool passed = true;
  int depth = 0;
  std::vector<std::uint64_t> sphere_counts;  // paths from * of each length 0..depth
  std::vector<std::string> violations;       // first few only
  std::size_t violation_count = 0;
  bool injectivity_checked = false;
  std::string geodesy;     // "checked" or "assumed"
  std::string surjectivity;  // "checked" or "assumed"
};

// Checks the strongly Markov conditions on every *-path of length <= depth that
// avoids the augmentation vertex.
MarkovValidation validate_strongly_markov(const AutomaticStructure& a, int depth);

struct ComponentInfo {
  int id = 0;
  std::vector<VertexId> vertices;  // sorted
  bool has_cycle = false;
  int period = 1;
  double spectral_radius = 0.0;
  bool is_word_maximal = false;
};

// Strongly connected components ordered by smallest vertex id.
std::vector<ComponentInfo> scc_decomposition(const AutomaticStructure& a);
std::vector<ComponentInfo> word_maximal_components(const AutomaticStructure& a);

}  // namespace hypstat
