#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "radixlm/types.hpp"

namespace radixlm {

class RegexError : public ValidationError {
 public:
  RegexError(const std::string& what, std::size_t position)
      : ValidationError(what + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Raised for syntax that is valid in common engines but outside the regular
/// subset handled here (backreferences, lookaround, anchors, lazy quantifiers).
class UnsupportedRegexError : public RegexError {
 public:
  using RegexError::RegexError;
};

using ByteSet = std::bitset<256>;

struct RegexNode {
  enum class Kind { kEmpty, kClass, kConcat, kAlternate, kRepeat };
  Kind kind = Kind::kEmpty;
  ByteSet bytes;                  // kClass
  std::vector<RegexNode> children;
  int min = 0;                    // kRepeat
  int max = -1;                   // kRepeat; -1 is unbounded
};

RegexNode parse_regex(std::string_view pattern);

/// Byte-level DFA. Every state is reachable from `start` and can reach an
/// accepting state, except for the lone start state of an empty language.
struct Dfa {
  std::vector<std::array<std::int32_t, 256>> next;
  std::vector<std::uint8_t> accepting;
  std::int32_t start = 0;

  std::size_t size() const { return next.size(); }
  std::int32_t step(std::int32_t state, unsigned char c) const { return next[state][c]; }
  bool is_accepting(std::int32_t state) const { return accepting[state] != 0; }
  std::size_t out_degree(std::int32_t state) const;
  std::size_t transition_count() const;
  bool empty_language() const;
  bool accepts(std::string_view text) const;
};

struct RegexLimits {
  std::size_t max_nfa_states = 200000;
  std::size_t max_dfa_states = 20000;
};

/// Thompson construction, subset construction, removal of states that cannot
/// reach acceptance, then partition-refinement minimization.
Dfa compile_regex(std::string_view pattern, const RegexLimits& limits = {});

}  // namespace radixlm
