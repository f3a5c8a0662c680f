#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "radixlm/mock_model.hpp"
#include "radixlm/regex.hpp"
#include "radixlm/tokenizer.hpp"

namespace radixlm {

class DeadEndError : public Error {
 public:
  using Error::Error;
};

class BudgetExceededError : public Error {
 public:
  using Error::Error;
};

/// DFA with chains of singular transitions merged into string-labeled edges.
///
/// A DFA state is singular when it is non-accepting and has exactly one
/// outgoing byte. Junctions are the start state and every non-singular state;
/// each junction has one edge per outgoing byte, extended through singular
/// states up to the next junction. Singular states remain addressable as
/// positions inside an edge, since sampling can stop mid-edge.
class CompressedFsm {
 public:
  struct Edge {
    std::string label;
    std::int32_t target;  // DFA id of the junction the edge ends at
  };

  explicit CompressedFsm(const Dfa& dfa);

  std::int32_t start() const { return start_; }
  bool is_junction(std::int32_t state) const { return junction_index_[state] >= 0; }
  bool is_accepting(std::int32_t state) const { return accepting_[state] != 0; }
  const std::vector<std::int32_t>& junctions() const { return junctions_; }
  const std::vector<Edge>& edges(std::int32_t junction) const;
  std::size_t edge_count() const;

  /// Text forced from `state`: follows edges while the current state is
  /// non-accepting and has a single way forward. Returns the forced text and
  /// the state reached (unchanged state and empty text at a branch).
  std::pair<std::string, std::int32_t> jump_forward(std::int32_t state) const;

  bool accepts(std::string_view text) const;

  std::string to_dot() const;
  nlohmann::json to_json() const;

 private:
  struct Position {
    std::int32_t junction = -1;
    std::int32_t edge = -1;
    std::int32_t offset = 0;
  };

  std::int32_t start_;
  std::vector<std::uint8_t> accepting_;
  std::vector<std::int32_t> junction_index_;
  std::vector<std::int32_t> junctions_;
  std::vector<std::vector<Edge>> edges_;
  std::vector<Position> position_;
};

/// Allowed tokens per DFA state: a token is allowed iff its whole piece is a
/// path from the state. End-of-sequence is allowed iff the state accepts.
class MaskTable {
 public:
  MaskTable(const Dfa& dfa, const Vocabulary& vocab);

  const std::vector<TokenId>& allowed(std::int32_t state) const { return allowed_[state]; }
  bool eos_allowed(std::int32_t state) const { return eos_[state] != 0; }
  bool is_allowed(std::int32_t state, TokenId token) const;

 private:
  std::size_t vocab_size_;
  std::vector<std::vector<TokenId>> allowed_;
  std::vector<std::uint8_t> eos_;
};

/// Everything derived from one pattern for one vocabulary. Immutable, so a
/// single instance can serve every request that uses the pattern.
struct CompiledConstraint {
  std::string pattern;
  Dfa dfa;
  CompressedFsm fsm;
  MaskTable masks;

  CompiledConstraint(std::string pattern_in, Dfa dfa_in, const Vocabulary& vocab);
  static std::shared_ptr<const CompiledConstraint> compile(std::string_view pattern, const Vocabulary& vocab);
};

/// Pattern -> compiled constraint. With reuse disabled every lookup compiles
/// afresh.
class ConstraintCache {
 public:
  explicit ConstraintCache(bool reuse = true) : reuse_(reuse) {}
  std::shared_ptr<const CompiledConstraint> get(const std::string& pattern, const Vocabulary& vocab);
  std::int64_t compilations() const { return compilations_; }
  double compile_seconds() const { return compile_seconds_; }

 private:
  bool reuse_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const CompiledConstraint>> entries_;
  std::int64_t compilations_ = 0;
  double compile_seconds_ = 0.0;
};

struct DecodeOptions {
  bool compressed = true;  // jump-forward over forced text
  std::int64_t max_tokens = 256;
  std::uint64_t salt = 0;
};

/// Incremental constrained decoding. Each advance() performs at most one model
/// pass; in compressed mode it first appends any forced text without a pass.
///
/// Sampling rule: starting from the current state, the model's preferred
/// byte path is the greedy walk over allowed bytes (and end-of-sequence where
/// accepting) by byte_preference. The sampled token is the longest vocabulary
/// piece that prefixes that path, or end-of-sequence when the walk stops at
/// once. The rule depends on text only, so both modes emit the same text.
class DecodeSession {
 public:
  struct Step {
    bool model_pass = false;
    std::int64_t new_tokens = 0;      // trace tokens appended
    std::int64_t dropped_tokens = 0;  // stale trace tokens replaced by retokenization
    bool finished = false;
  };

  DecodeSession(std::shared_ptr<const CompiledConstraint> constraint, const Vocabulary& vocab,
                const MockModel& model, DecodeOptions options);

  Step advance();

  /// Appends forced text and re-encodes the boundary; returns the trace
  /// suffix that has to be fed to the model.
  TokenSequence retokenize_and_continue(std::string_view forced_text);

  bool finished() const { return finished_; }
  const std::string& text() const { return text_; }
  const TokenSequence& trace() const { return trace_; }
  std::int64_t forward_passes() const { return passes_; }
  std::int32_t state() const { return state_; }
  const CompiledConstraint& constraint() const { return *constraint_; }

 private:
  TokenId sample() const;
  void append_text(std::string_view s);
  void finish();

  std::shared_ptr<const CompiledConstraint> constraint_;
  const Vocabulary* vocab_;
  const MockModel* model_;
  DecodeOptions options_;
  std::int32_t state_;
  std::string text_;
  std::uint64_t text_hash_;
  TokenSequence trace_;
  std::int64_t passes_ = 0;
  bool finished_ = false;
};

struct DecodeResult {
  std::string text;
  std::int64_t forward_passes = 0;
  TokenSequence trace;
};

/// Runs a session to completion. Throws DeadEndError when the pattern
/// accepts nothing and BudgetExceededError when the output would need more
/// than `max_tokens` tokens.
DecodeResult constrained_decode(const MockModel& model, std::string_view regex, const Vocabulary& vocab,
                                std::int64_t max_tokens, bool compressed = true, std::uint64_t salt = 0);
DecodeResult constrained_decode(const MockModel& model, std::shared_ptr<const CompiledConstraint> constraint,
                                const Vocabulary& vocab, const DecodeOptions& options);

/// Starting text hash for a session with the given salt.
std::uint64_t initial_text_hash(std::uint64_t salt);

}  // namespace radixlm
