#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "radixlm/scheduler.hpp"

namespace radixlm {

class ProgramError : public Error {
 public:
  using Error::Error;
};

struct ExtendOp {
  // One text for every branch, or one per fork index inside a fork body.
  std::vector<std::string> texts;
  std::string var;  // non-empty: appends the value of this variable instead
};

struct GenOp {
  std::string name;
  std::int64_t max_new_tokens = 16;
  std::string regex;
  std::string stop;
  bool sample = false;  // decorrelate outputs across streams with equal prompts
};

struct SelectOp {
  std::string name;
  std::vector<std::string> choices;
};

struct ImageOp {
  std::string content_hash;
};

struct ForkOp;

using Op = std::variant<ExtendOp, GenOp, SelectOp, ImageOp, std::shared_ptr<ForkOp>>;

struct ForkOp {
  std::int64_t n = 1;
  std::vector<Op> body;
  // Children whose new text is appended to the parent at the join, in order.
  // Empty: all children in index order. Child variables are exported as
  // "<name>.<index>" regardless.
  std::vector<std::int64_t> merge_order;
  bool merge_text = true;
};

/// An LM program as data. JSON form:
///   {"version": 1, "ops": [{"op": "extend", "text": "..."},
///                          {"op": "gen", "name": "x", "max_new_tokens": 8},
///                          {"op": "fork", "n": 3}, ..., {"op": "join"}]}
/// Fork bodies are the ops between a fork and its matching join.
struct Program {
  static constexpr int kVersion = 1;

  std::vector<Op> ops;
  std::int64_t arrival_time = 0;
  std::uint64_t seed = 0;

  static Program from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  /// Number of gen ops executed by one run (fork bodies count once per child).
  std::int64_t gen_count() const;
  /// Throws ProgramError on duplicate variable names in a stream, a fork with
  /// n < 1 or a per-fork extend outside a fork body of matching width.
  void validate() const;
};

/// Pseudo-token block standing in for an image: fixed length, keyed by the
/// content hash.
TokenSequence image_tokens(const std::string& content_hash, std::size_t length = 64);

struct InterpreterOptions {
  bool fork_hints = true;
  bool parallel = true;  // false: one outstanding request per program
  std::size_t image_tokens = 64;
};

struct ProgramResult {
  std::map<std::string, std::string> variables;
  std::string text;  // final prompt state of the root stream
  TokenSequence tokens;
  std::int64_t start_time = 0;
  std::int64_t finish_time = 0;
  std::int64_t requests = 0;
  std::int64_t gen_requests = 0;
  std::string error;
};

/// Runs programs concurrently against a runtime with a single-threaded
/// round-robin executor. Each program starts at its arrival time; within a
/// program every stream executes its ops in order and blocks on its
/// outstanding requests.
std::vector<ProgramResult> run_programs(const std::vector<Program>& programs, Runtime& runtime,
                                        const InterpreterOptions& options = {});

}  // namespace radixlm
