#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hypstat {

using Letter = std::uint8_t;
using Word = std::vector<Letter>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Symmetric generating set. Letters are dense indices; names are the printable
// symbols. The name "e" is reserved for the identity.
class Alphabet {
 public:
  Alphabet() = default;
  Alphabet(std::vector<std::string> names, std::vector<Letter> inverse);

  // a A b B c C ... (lowercase generators, uppercase inverses; 'e' skipped).
  static Alphabet free(int rank);
  // Case-swap involution over the given single-character names.
  static Alphabet from_case_pairs(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  const std::string& name(Letter x) const { return names_.at(x); }
  Letter inverse(Letter x) const { return inverse_.at(x); }
  std::optional<Letter> find(std::string_view name) const;
  Letter letter(std::string_view name) const;

  // Single-character alphabets parse "abAB"; otherwise letters are separated by
  // '.' or whitespace. "e" and "" denote the empty word.
  Word parse(std::string_view text) const;
  std::string format(std::span<const Letter> word) const;

  bool operator==(const Alphabet&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Letter> inverse_;
  bool single_char_ = true;
};

struct GroupElement {
  Word word;

  bool is_identity() const { return word.empty(); }
  std::size_t length() const { return word.size(); }
  auto operator<=>(const GroupElement&) const = default;
};

struct GroupElementHash {
  std::size_t operator()(const GroupElement& g) const noexcept {
    return std::hash<std::string_view>{}(
        std::string_view(reinterpret_cast<const char*>(g.word.data()), g.word.size()));
  }
};

// Free group on an alphabet; normal form is the freely reduced word.
class FreeGroup {
 public:
  FreeGroup() = default;
  explicit FreeGroup(Alphabet alphabet) : alphabet_(std::move(alphabet)) {}
  static FreeGroup of_rank(int rank) { return FreeGroup(Alphabet::free(rank)); }

  const Alphabet& alphabet() const { return alphabet_; }
  int rank() const { return static_cast<int>(alphabet_.size() / 2); }

  GroupElement reduce(std::span<const Letter> word) const;
  GroupElement element(std::string_view text) const { return reduce(alphabet_.parse(text)); }
  GroupElement multiply(const GroupElement& g, const GroupElement& h) const;
  GroupElement invert(const GroupElement& g) const;
  GroupElement power(const GroupElement& g, int n) const;

  // Conjugate of g that is cyclically reduced, and the number of letters
  // stripped from each end.
  GroupElement cyclic_reduction(const GroupElement& g, std::size_t* stripped = nullptr) const;
  bool is_reduced(std::span<const Letter> word) const;

  std::string format(const GroupElement& g) const { return alphabet_.format(g.word); }

 private:
  Alphabet alphabet_;
};

// Number of reduced words of length n in F_k.
std::uint64_t free_sphere_size(int rank, int n);
std::uint64_t free_ball_size(int rank, int radius);

}  // namespace hypstat
