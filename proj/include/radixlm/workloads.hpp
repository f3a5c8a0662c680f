#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "radixlm/hash.hpp"
#include "radixlm/program.hpp"
#include "radixlm/tokenizer.hpp"

namespace radixlm {

/// JSON summary/grade object used by the json_decode workload by default.
inline constexpr const char* kJudgeRegex = R"(\{"summary": "[a-z ]{1,8}", "grade": "[ABCD][+-]?"\})";

/// Printable bytes that no multi-byte piece of `vocab` contains. Text drawn
/// from them encodes to exactly one token per byte, so generated prompts
/// have exact token lengths.
std::string exact_alphabet(const Vocabulary& vocab);

/// Random strings over an exact alphabet.
class TextSource {
 public:
  TextSource(std::string alphabet, std::uint64_t seed);

  /// `n` random bytes.
  std::string text(std::int64_t n);
  /// `n` bytes whose first byte is alphabet[index % size], so texts with
  /// different indices (mod size) never share a first token.
  std::string tagged(std::size_t index, std::int64_t n);
  Rng& rng() { return rng_; }
  const std::string& alphabet() const { return alphabet_; }

 private:
  std::string alphabet_;
  Rng rng_;
};

/// Workload description. JSON form:
///   {"kind": "few_shot", "seed": 1, "scale": 1.0, "params": {"n": 8, ...}}
/// Lengths in params are a number or an inclusive [lo, hi] range, in tokens,
/// and are multiplied by `scale` (minimum 1). Unknown params are rejected.
struct WorkloadSpec {
  std::string kind;
  std::uint64_t seed = 0;
  double scale = 1.0;
  nlohmann::json params = nlohmann::json::object();

  static WorkloadSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Kinds accepted by generate_workload.
std::vector<std::string> workload_kinds();

/// Deterministic program list for a spec. Kinds:
///   few_shot            shared examples (k) + question (q) + short answer
///   multi_turn_chat     sessions of alternating user input and reply
///   tree_of_thought     nested forks of thoughts under a question
///   self_consistency    `samples` sampled programs per question
///   json_decode         regex-constrained extraction
///   branch_solve_merge  fork over judging dimensions, merge, summarize
///   random_prompts      independent prompts with no designed sharing
///   mixed_replay        programs loaded from a trace file or inline list
std::vector<Program> generate_workload(const WorkloadSpec& spec, const Vocabulary& vocab);

}  // namespace radixlm
