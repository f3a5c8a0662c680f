#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "radixlm/program.hpp"
#include "radixlm/tokenizer.hpp"

namespace radixlm {

/// Priced black-box completion endpoint.
///
/// Generation is greedy over bytes: the next byte is a function of the whole
/// text so far, so continuing generate(p) from any prefix of its own output
/// reproduces the rest. With a document set, the endpoint continues the
/// longest suffix of the text that occurs in the document; elsewhere it emits
/// hashed lowercase filler.
class EndpointModel {
 public:
  struct Call {
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
  };

  EndpointModel(const Vocabulary& vocab, std::uint64_t seed, double input_price = 1.0, double output_price = 2.0);

  void set_document(std::string document) { document_ = std::move(document); }

  /// Up to `max_bytes` bytes continuing `prompt`, cut before `stop` when it
  /// appears (pass an empty stop to ignore it). Charges one call.
  std::string generate(std::string_view prompt, std::int64_t max_bytes, std::string_view stop);

  const std::vector<Call>& calls() const { return calls_; }
  std::int64_t input_tokens() const;
  std::int64_t output_tokens() const;
  double cost() const;
  void reset_ledger() { calls_.clear(); }

 private:
  char next_byte(std::string_view text) const;

  const Vocabulary* vocab_;
  std::uint64_t seed_;
  double input_price_;
  double output_price_;
  std::string document_;
  std::vector<Call> calls_;
};

struct EndpointOptions {
  bool speculative = false;
  std::int64_t speculation_tokens = 64;  // surplus requested past the stop
};

struct EndpointResult {
  std::map<std::string, std::string> variables;
  std::string text;
  std::int64_t calls = 0;
  std::int64_t speculation_hits = 0;
  std::int64_t speculation_misses = 0;
};

/// Runs an extend/gen-only program against an endpoint. Gen lengths count
/// bytes here. With speculation, a call ignores its stop string and
/// generates speculation_tokens extra bytes; following constant extends and
/// gens are served from that surplus while it matches them exactly.
EndpointResult run_on_endpoint(const Program& program, EndpointModel& endpoint, const EndpointOptions& options = {});

}  // namespace radixlm
