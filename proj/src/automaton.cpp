#include "hypstat/automaton.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_set>

#include "hypstat/perron.hpp"

namespace hypstat {

AutomaticStructure::AutomaticStructure(Alphabet alphabet, GroupKind kind, int free_rank, std::size_t vertex_count,
                                       std::vector<Edge> edges, std::vector<std::string> vertex_names)
    : alphabet_(std::move(alphabet)),
      kind_(kind),
      free_rank_(free_rank),
      vertex_count_(vertex_count),
      edges_(std::move(edges)),
      names_(std::move(vertex_names)) {
  if (vertex_count_ < 2) throw Error("automatic structure needs at least the initial and augmentation vertices");
  std::sort(edges_.begin(), edges_.end());
  if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end())
    throw Error("automatic structure: parallel edges are not supported");
  out_.assign(vertex_count_, {});
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const Edge& e = edges_[i];
    if (e.source >= vertex_count_ || e.target >= vertex_count_) throw Error("automatic structure: edge out of range");
    if (e.label && *e.label >= alphabet_.size()) throw Error("automatic structure: label out of range");
    if (e.source == kAugmentationVertex) throw Error("automatic structure: augmentation vertex has outgoing edges");
    if (!e.label && e.target != kAugmentationVertex)
      throw Error("automatic structure: identity label on an edge not entering the augmentation vertex");
    out_[e.source].push_back(i);
  }
  if (names_.empty()) {
    for (std::size_t v = 0; v < vertex_count_; ++v) names_.push_back(std::to_string(v));
  }
  if (names_.size() != vertex_count_) throw Error("automatic structure: vertex name count mismatch");
}

std::vector<std::size_t> AutomaticStructure::proper_out_edges(VertexId v) const {
  std::vector<std::size_t> out;
  for (std::size_t i : out_.at(v)) {
    if (edges_[i].target != kAugmentationVertex) out.push_back(i);
  }
  return out;
}

FreeGroup AutomaticStructure::free_group() const { return FreeGroup(alphabet_); }

std::string AutomaticStructure::group_description() const {
  if (kind_ == GroupKind::free) return "free group of rank " + std::to_string(free_rank_);
  return "external group coding (" + std::to_string(vertex_count_) + " vertices, " +
         std::to_string(alphabet_.size()) + " letters)";
}

bool AutomaticStructure::same_structure(const AutomaticStructure& other) const {
  return alphabet_ == other.alphabet_ && kind_ == other.kind_ && free_rank_ == other.free_rank_ &&
         vertex_count_ == other.vertex_count_ && edges_ == other.edges_;
}

AutomaticStructure build_free_group_coding(int rank) {
  if (rank < 2) throw Error("build_free_group_coding: rank must be at least 2");
  Alphabet alphabet = Alphabet::free(rank);
  const std::size_t letters = alphabet.size();
  std::vector<Edge> edges;
  std::vector<std::string> names{"*", "0"};
  auto vertex_of = [](Letter x) { return static_cast<VertexId>(x + 2); };
  for (Letter x = 0; x < letters; ++x) {
    names.push_back(alphabet.name(x));
    edges.push_back(Edge{kInitialVertex, vertex_of(x), x});
    for (Letter y = 0; y < letters; ++y) {
      if (y != alphabet.inverse(x)) edges.push_back(Edge{vertex_of(x), vertex_of(y), y});
    }
    edges.push_back(Edge{vertex_of(x), kAugmentationVertex, std::nullopt});
  }
  return AutomaticStructure(std::move(alphabet), GroupKind::free, rank, letters + 2, std::move(edges),
                            std::move(names));
}

namespace {

struct RawEdge {
  long src, dst;
  std::string label;
  int line;
};

std::vector<std::string> tokenize(const std::string& line) {
  std::string body = line.substr(0, line.find('#'));
  std::istringstream ss(body);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

long parse_id(const std::string& tok, const std::string& source, int line) {
  try {
    std::size_t used = 0;
    long v = std::stol(tok, &used);
    if (used != tok.size() || v < 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(source, line, "expected a nonnegative integer, got '" + tok + "'");
  }
}

}  // namespace

AutomaticStructure parse_automatic_structure(std::istream& in, const std::string& source) {
  long n = -1;
  long initial = -1;
  long augmentation = -1;
  int free_rank = 0;
  bool external = false;
  std::vector<RawEdge> raw;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto tok = tokenize(line);
    if (tok.empty()) continue;
    const std::string& key = tok[0];
    if (key == "vertices") {
      if (tok.size() != 2) throw ParseError(source, lineno, "usage: vertices <N>");
      if (n >= 0) throw ParseError(source, lineno, "duplicate 'vertices'");
      n = parse_id(tok[1], source, lineno);
    } else if (key == "initial") {
      if (tok.size() != 2) throw ParseError(source, lineno, "usage: initial <id>");
      initial = parse_id(tok[1], source, lineno);
    } else if (key == "augmentation") {
      if (tok.size() != 2) throw ParseError(source, lineno, "usage: augmentation <id>");
      augmentation = parse_id(tok[1], source, lineno);
    } else if (key == "group") {
      if (tok.size() == 3 && tok[1] == "free") {
        free_rank = static_cast<int>(parse_id(tok[2], source, lineno));
        if (free_rank < 1) throw ParseError(source, lineno, "free rank must be positive");
      } else if (tok.size() == 2 && tok[1] == "external") {
        external = true;
      } else {
        throw ParseError(source, lineno, "usage: group free <rank> | group external");
      }
    } else if (key == "edge") {
      if (tok.size() != 4) throw ParseError(source, lineno, "usage: edge <src> <dst> <label|e>");
      if (n < 0) throw ParseError(source, lineno, "'edge' before 'vertices'");
      RawEdge e{parse_id(tok[1], source, lineno), parse_id(tok[2], source, lineno), tok[3], lineno};
      if (e.src >= n) throw ParseError(source, lineno, "dangling vertex reference " + tok[1]);
      if (e.dst >= n) throw ParseError(source, lineno, "dangling vertex reference " + tok[2]);
      raw.push_back(std::move(e));
    } else {
      throw ParseError(source, lineno, "unknown directive '" + key + "'");
    }
  }
  if (n < 0) throw ParseError(source, lineno, "missing 'vertices'");
  if (initial < 0) throw ParseError(source, lineno, "missing 'initial' (the start state *)");
  if (initial >= n) throw ParseError(source, lineno, "initial vertex " + std::to_string(initial) + " out of range");
  if (augmentation >= n)
    throw ParseError(source, lineno, "augmentation vertex " + std::to_string(augmentation) + " out of range");
  if (augmentation == initial) throw ParseError(source, lineno, "augmentation vertex equals initial vertex");
  if (free_rank > 0 && external) throw ParseError(source, lineno, "conflicting 'group' directives");

  Alphabet alphabet;
  if (free_rank > 0) {
    alphabet = Alphabet::free(free_rank);
  } else {
    std::set<char> seen;
    for (const auto& e : raw) {
      if (e.label == "e") continue;
      if (e.label.size() != 1)
        throw ParseError(source, e.line, "external codings use single-character letters, got '" + e.label + "'");
      seen.insert(e.label[0]);
    }
    std::vector<std::string> names;
    for (char c = 'a'; c <= 'z'; ++c) {
      char up = static_cast<char>(c - 'a' + 'A');
      if (seen.count(c) || seen.count(up)) {
        names.emplace_back(1, c);
        names.emplace_back(1, up);
      }
    }
    for (char c : seen) {
      if (!std::isalpha(static_cast<unsigned char>(c)))
        throw ParseError(source, lineno, std::string("unsupported letter '") + c + "'");
    }
    alphabet = Alphabet::from_case_pairs(std::move(names));
  }

  // Connectivity checks on file ids.
  std::vector<int> degree(static_cast<std::size_t>(n), 0);
  std::vector<std::vector<long>> adj(static_cast<std::size_t>(n));
  for (const auto& e : raw) {
    degree[static_cast<std::size_t>(e.src)]++;
    degree[static_cast<std::size_t>(e.dst)]++;
    adj[static_cast<std::size_t>(e.src)].push_back(e.dst);
    if (e.label == "e" && e.dst != augmentation)
      throw ParseError(source, e.line, "identity label must target the declared augmentation vertex");
    if (e.src == augmentation) throw ParseError(source, e.line, "augmentation vertex cannot have outgoing edges");
    if (e.src == initial && e.label == "e") throw ParseError(source, e.line, "initial vertex cannot pad to augmentation");
  }
  for (long v = 0; v < n; ++v) {
    if (degree[static_cast<std::size_t>(v)] == 0 && !(n == 1 && v == initial))
      throw ParseError(source, lineno, "isolated vertex " + std::to_string(v));
  }
  std::vector<bool> reached(static_cast<std::size_t>(n), false);
  std::vector<long> stack{initial};
  reached[static_cast<std::size_t>(initial)] = true;
  while (!stack.empty()) {
    long v = stack.back();
    stack.pop_back();
    for (long w : adj[static_cast<std::size_t>(v)]) {
      if (!reached[static_cast<std::size_t>(w)]) {
        reached[static_cast<std::size_t>(w)] = true;
        stack.push_back(w);
      }
    }
  }
  std::string unreachable;
  for (long v = 0; v < n; ++v) {
    if (!reached[static_cast<std::size_t>(v)]) unreachable += (unreachable.empty() ? "" : ", ") + std::to_string(v);
  }
  if (!unreachable.empty()) throw ParseError(source, lineno, "vertices unreachable from initial: " + unreachable);

  // Renumber.
  std::vector<VertexId> id(static_cast<std::size_t>(n));
  std::vector<std::string> names{std::to_string(initial), augmentation >= 0 ? std::to_string(augmentation) : "aug"};
  VertexId next = 2;
  for (long v = 0; v < n; ++v) {
    if (v == initial) {
      id[static_cast<std::size_t>(v)] = kInitialVertex;
    } else if (v == augmentation) {
      id[static_cast<std::size_t>(v)] = kAugmentationVertex;
    } else {
      id[static_cast<std::size_t>(v)] = next++;
      names.push_back(std::to_string(v));
    }
  }
  std::size_t total = static_cast<std::size_t>(next);
  std::vector<Edge> edges;
  for (const auto& e : raw) {
    Edge out{id[static_cast<std::size_t>(e.src)], id[static_cast<std::size_t>(e.dst)], std::nullopt};
    if (e.label != "e") {
      auto x = alphabet.find(e.label);
      if (!x) throw ParseError(source, e.line, "unknown letter '" + e.label + "'");
      out.label = *x;
    }
    edges.push_back(out);
  }
  if (augmentation < 0) {
    for (VertexId v = 2; v < total; ++v) edges.push_back(Edge{v, kAugmentationVertex, std::nullopt});
  }
  GroupKind kind = free_rank > 0 ? GroupKind::free : GroupKind::external;
  return AutomaticStructure(std::move(alphabet), kind, free_rank, total, std::move(edges), std::move(names));
}

AutomaticStructure load_automatic_structure(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open automaton file '" + path.string() + "'");
  return parse_automatic_structure(in, path.string());
}

void write_automatic_structure(std::ostream& out, const AutomaticStructure& a) {
  out << "# " << a.group_description() << "\n";
  out << "vertices " << a.vertex_count() << "\n";
  out << "initial " << kInitialVertex << "\n";
  out << "augmentation " << kAugmentationVertex << "\n";
  if (a.kind() == GroupKind::free) {
    out << "group free " << a.free_rank() << "\n";
  } else {
    out << "group external\n";
  }
  for (const Edge& e : a.edges()) {
    out << "edge " << e.source << " " << e.target << " " << (e.label ? a.alphabet().name(*e.label) : "e") << "\n";
  }
}

MarkovValidation validate_strongly_markov(const AutomaticStructure& a, int depth) {
  MarkovValidation report;
  report.depth = std::max(depth, 0);
  report.sphere_counts.assign(static_cast<std::size_t>(report.depth) + 1, 0);
  const bool free = a.kind() == GroupKind::free;
  report.geodesy = free ? "checked" : "assumed";
  report.surjectivity = free ? "checked" : "assumed";
  report.injectivity_checked = true;
  FreeGroup group = a.free_group();

  auto violation = [&](std::string msg) {
    report.passed = false;
    if (report.violations.size() < 20) report.violations.push_back(std::move(msg));
    report.violation_count++;
  };

  std::unordered_set<GroupElement, GroupElementHash> images;
  struct Frame {
    VertexId vertex;
    std::vector<std::size_t> edges;
    std::size_t next;
  };
  Word labels;
  std::vector<Frame> stack;
  report.sphere_counts[0] = 1;
  images.insert(GroupElement{});
  if (report.depth > 0) stack.push_back(Frame{kInitialVertex, a.proper_out_edges(kInitialVertex), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next == f.edges.size()) {
      stack.pop_back();
      if (!labels.empty() && !stack.empty()) labels.pop_back();
      continue;
    }
    const Edge& e = a.edges()[f.edges[f.next++]];
    labels.push_back(*e.label);
    const std::size_t m = labels.size();
    report.sphere_counts[m]++;
    GroupElement image = free ? group.reduce(labels) : GroupElement{labels};
    if (free && image.length() != m) {
      violation("path spelling " + a.alphabet().format(labels) + " is not geodesic (reduces to length " +
                std::to_string(image.length()) + ")");
    }
    if (!images.insert(image).second) {
      violation("ev is not injective: " + a.alphabet().format(image.word) + " is reached twice");
    }
    if (static_cast<int>(m) < report.depth) {
      stack.push_back(Frame{e.target, a.proper_out_edges(e.target), 0});
    } else {
      labels.pop_back();
    }
  }
  if (free) {
    for (int m = 0; m <= report.depth; ++m) {
      std::uint64_t expected = free_sphere_size(a.free_rank(), m);
      if (report.violation_count == 0 && report.sphere_counts[static_cast<std::size_t>(m)] != expected) {
        violation("sphere of radius " + std::to_string(m) + " has " +
                  std::to_string(report.sphere_counts[static_cast<std::size_t>(m)]) + " paths, expected " +
                  std::to_string(expected));
      }
    }
  }
  return report;
}

namespace {

std::vector<std::vector<VertexId>> tarjan(const AutomaticStructure& a) {
  const std::size_t n = a.vertex_count();
  std::vector<int> index(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<VertexId> stack;
  std::vector<std::vector<VertexId>> comps;
  int counter = 0;
  struct Frame {
    VertexId v;
    std::size_t next;
  };
  for (VertexId root = 0; root < n; ++root) {
    if (index[root] >= 0) continue;
    std::vector<Frame> call{{root, 0}};
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      Frame& f = call.back();
      const auto& out = a.out_edges(f.v);
      if (f.next < out.size()) {
        VertexId w = a.edges()[out[f.next++]].target;
        if (index[w] < 0) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
        continue;
      }
      VertexId v = f.v;
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
      if (low[v] == index[v]) {
        std::vector<VertexId> comp;
        VertexId w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp.push_back(w);
        } while (w != v);
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
      }
    }
  }
  std::sort(comps.begin(), comps.end(), [](const auto& x, const auto& y) { return x.front() < y.front(); });
  return comps;
}

}  // namespace

std::vector<ComponentInfo> scc_decomposition(const AutomaticStructure& a) {
  auto comps = tarjan(a);
  std::vector<int> comp_of(a.vertex_count(), -1);
  for (std::size_t c = 0; c < comps.size(); ++c) {
    for (VertexId v : comps[c]) comp_of[v] = static_cast<int>(c);
  }
  std::vector<ComponentInfo> out;
  double best = 0.0;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    ComponentInfo info;
    info.id = static_cast<int>(c);
    info.vertices = comps[c];
    std::map<VertexId, std::size_t> local;
    for (std::size_t i = 0; i < info.vertices.size(); ++i) local[info.vertices[i]] = i;

    SparseMatrix m;
    m.n = info.vertices.size();
    m.row_start.assign(1, 0);
    for (VertexId v : info.vertices) {
      std::map<std::size_t, double> row;
      for (std::size_t ei : a.out_edges(v)) {
        const Edge& e = a.edges()[ei];
        if (comp_of[e.target] == static_cast<int>(c)) row[local[e.target]] += 1.0;
      }
      for (auto [j, w] : row) {
        m.col.push_back(j);
        m.val.push_back(w);
      }
      m.row_start.push_back(m.col.size());
    }
    info.has_cycle = m.nnz() > 0;
    if (info.has_cycle) {
      // Period: gcd of level discrepancies over a BFS tree.
      std::vector<long> level(m.n, -1);
      std::queue<std::size_t> q;
      level[0] = 0;
      q.push(0);
      long g = 0;
      while (!q.empty()) {
        std::size_t u = q.front();
        q.pop();
        for (std::size_t p = m.row_start[u]; p < m.row_start[u + 1]; ++p) {
          std::size_t w = m.col[p];
          if (level[w] < 0) {
            level[w] = level[u] + 1;
            q.push(w);
          } else {
            g = std::gcd(g, std::abs(level[u] + 1 - level[w]));
          }
        }
      }
      info.period = g > 0 ? static_cast<int>(g) : 1;
      info.spectral_radius = perron(m, 1e-14).eigenvalue;
      best = std::max(best, info.spectral_radius);
    }
    out.push_back(std::move(info));
  }
  for (auto& info : out) {
    info.is_word_maximal = info.has_cycle && info.spectral_radius >= best * (1.0 - 1e-9);
  }
  return out;
}

std::vector<ComponentInfo> word_maximal_components(const AutomaticStructure& a) {
  std::vector<ComponentInfo> out;
  for (auto& c : scc_decomposition(a)) {
    if (c.is_word_maximal) out.push_back(std::move(c));
  }
  return out;
}

}  // namespace hypstat
