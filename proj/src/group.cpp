#include "hypstat/group.hpp"

#include <algorithm>
#include <cctype>

namespace hypstat {

Alphabet::Alphabet(std::vector<std::string> names, std::vector<Letter> inverse)
    : names_(std::move(names)), inverse_(std::move(inverse)) {
  if (names_.size() != inverse_.size()) throw Error("alphabet: involution size mismatch");
  if (names_.size() > 255) throw Error("alphabet: too many letters");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty() || names_[i] == "e") throw Error("alphabet: invalid letter name '" + names_[i] + "'");
    for (char c : names_[i]) {
      if (std::isspace(static_cast<unsigned char>(c)) || c == '.' || c == '#')
        throw Error("alphabet: invalid letter name '" + names_[i] + "'");
    }
    if (names_[i].size() != 1) single_char_ = false;
    for (std::size_t j = 0; j < i; ++j) {
      if (names_[i] == names_[j]) throw Error("alphabet: duplicate letter '" + names_[i] + "'");
    }
    if (inverse_[i] >= names_.size() || inverse_[inverse_[i]] != i)
      throw Error("alphabet: inverse map is not an involution at '" + names_[i] + "'");
  }
}

Alphabet Alphabet::free(int rank) {
  if (rank < 1 || rank > 25) throw Error("free alphabet: rank must be in [1, 25]");
  std::vector<std::string> names;
  std::vector<Letter> inverse;
  char c = 'a';
  for (int i = 0; i < rank; ++i, ++c) {
    if (c == 'e') ++c;
    names.emplace_back(1, c);
    names.emplace_back(1, static_cast<char>(std::toupper(c)));
    inverse.push_back(static_cast<Letter>(2 * i + 1));
    inverse.push_back(static_cast<Letter>(2 * i));
  }
  return Alphabet(std::move(names), std::move(inverse));
}

Alphabet Alphabet::from_case_pairs(std::vector<std::string> names) {
  std::vector<Letter> inverse(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].size() != 1 || !std::isalpha(static_cast<unsigned char>(names[i][0])))
      throw Error("alphabet: case-pair letters must be single ASCII letters, got '" + names[i] + "'");
    char c = names[i][0];
    char partner = std::islower(static_cast<unsigned char>(c)) ? static_cast<char>(std::toupper(c))
                                                                : static_cast<char>(std::tolower(c));
    auto it = std::find(names.begin(), names.end(), std::string(1, partner));
    if (it == names.end()) throw Error(std::string("alphabet: letter '") + c + "' has no inverse '" + partner + "'");
    inverse[i] = static_cast<Letter>(it - names.begin());
  }
  return Alphabet(std::move(names), std::move(inverse));
}

std::optional<Letter> Alphabet::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<Letter>(i);
  }
  return std::nullopt;
}

Letter Alphabet::letter(std::string_view name) const {
  if (auto x = find(name)) return *x;
  throw Error("unknown letter '" + std::string(name) + "'");
}

Word Alphabet::parse(std::string_view text) const {
  Word out;
  if (text.empty() || text == "e") return out;
  if (single_char_ && text.find_first_of(". \t") == std::string_view::npos) {
    for (char c : text) out.push_back(letter(std::string_view(&c, 1)));
    return out;
  }
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == '.' || std::isspace(static_cast<unsigned char>(text[i])))) ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != '.' && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      auto token = text.substr(i, j - i);
      if (token != "e") out.push_back(letter(token));
    }
    i = j;
  }
  return out;
}

std::string Alphabet::format(std::span<const Letter> word) const {
  if (word.empty()) return "e";
  std::string out;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (!single_char_ && i > 0) out.push_back('.');
    out += name(word[i]);
  }
  return out;
}

GroupElement FreeGroup::reduce(std::span<const Letter> word) const {
  GroupElement g;
  g.word.reserve(word.size());
  for (Letter x : word) {
    if (x >= alphabet_.size()) throw Error("reduce: letter index out of range");
    if (!g.word.empty() && g.word.back() == alphabet_.inverse(x)) {
      g.word.pop_back();
    } else {
      g.word.push_back(x);
    }
  }
  return g;
}

GroupElement FreeGroup::multiply(const GroupElement& g, const GroupElement& h) const {
  Word w = g.word;
  w.insert(w.end(), h.word.begin(), h.word.end());
  return reduce(w);
}

GroupElement FreeGroup::invert(const GroupElement& g) const {
  GroupElement out;
  out.word.reserve(g.word.size());
  for (auto it = g.word.rbegin(); it != g.word.rend(); ++it) out.word.push_back(alphabet_.inverse(*it));
  return out;
}

GroupElement FreeGroup::power(const GroupElement& g, int n) const {
  GroupElement base = n < 0 ? invert(g) : g;
  GroupElement out;
  for (int i = 0; i < std::abs(n); ++i) out = multiply(out, base);
  return out;
}

GroupElement FreeGroup::cyclic_reduction(const GroupElement& g, std::size_t* stripped) const {
  GroupElement r = reduce(g.word);
  std::size_t lo = 0;
  std::size_t hi = r.word.size();
  while (hi - lo >= 2 && r.word[hi - 1] == alphabet_.inverse(r.word[lo])) {
    ++lo;
    --hi;
  }
  if (stripped) *stripped = lo;
  return GroupElement{Word(r.word.begin() + static_cast<std::ptrdiff_t>(lo),
                           r.word.begin() + static_cast<std::ptrdiff_t>(hi))};
}

bool FreeGroup::is_reduced(std::span<const Letter> word) const {
  for (std::size_t i = 1; i < word.size(); ++i) {
    if (word[i] == alphabet_.inverse(word[i - 1])) return false;
  }
  return true;
}

std::uint64_t free_sphere_size(int rank, int n) {
  if (n == 0) return 1;
  std::uint64_t s = 2ULL * static_cast<std::uint64_t>(rank);
  for (int i = 1; i < n; ++i) s *= 2ULL * static_cast<std::uint64_t>(rank) - 1;
  return s;
}

std::uint64_t free_ball_size(int rank, int radius) {
  std::uint64_t total = 0;
  for (int n = 0; n <= radius; ++n) total += free_sphere_size(rank, n);
  return total;
}

}  // namespace hypstat
