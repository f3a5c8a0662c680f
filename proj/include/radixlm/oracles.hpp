#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "radixlm/fsm.hpp"
#include "radixlm/scheduler.hpp"

namespace radixlm {

// Reference computations used to check the scheduler, the tree and the
// decoder. None of them go through RadixTree or Scheduler, except where a
// function is explicitly about running the scheduler.

struct BruteForceResult {
  double best_rate = 0.0;
  std::vector<std::size_t> best_order;
};

/// Executes the requests one at a time in every order against a token-level
/// LRU cache of `capacity` tokens (leaf-first eviction, the running request's
/// path protected) and returns the best hit rate. At most 8 requests.
BruteForceResult optimal_hit_rate_bruteforce(const std::vector<TokenSequence>& requests, std::int64_t capacity);

/// Hit rate of one execution order on the same reference cache.
double sequential_lru_hit_rate(const std::vector<TokenSequence>& requests, const std::vector<std::size_t>& order,
                               std::int64_t capacity);

/// 1 - (sum of edge lengths of the requests' radix tree) / (sum of lengths).
/// The edge sum equals the number of distinct non-empty prefixes, computed
/// here from sorted adjacent common prefixes. Requires capacity >= the
/// longest request.
double dfs_hit_rate(const std::vector<TokenSequence>& requests, std::int64_t capacity);

/// Same closed form without the capacity precondition.
double prefix_sharing_bound(const std::vector<TokenSequence>& requests);

/// Best hit rate for requests whose outputs also enter the cache, with an
/// unbounded cache. A distinct prompt prefix must be computed once unless it
/// lies inside some request's generated continuation (beyond that request's
/// own prompt). Equals prefix_sharing_bound when all outputs are empty.
double optimal_hit_rate(const std::vector<TokenSequence>& prompts, const std::vector<TokenSequence>& outputs);

/// Runs zero-output requests submitted together through the scheduler.
/// `max_running` = 1 gives the sequential longest-shared-prefix-first order.
double scheduler_hit_rate(const std::vector<TokenSequence>& requests, std::int64_t capacity, SchedulePolicy policy,
                          std::int64_t max_running);

struct TheoremReport {
  std::uint64_t workload_seed = 0;
  std::int64_t capacity = 0;
  bool precondition_met = false;
  double brute_force = 0.0;
  double closed_form = 0.0;
  double scheduler_achieved = 0.0;  // sequential longest-shared-prefix-first
  double batched_scheduler = 0.0;   // all admitted that fit per round
  std::vector<std::size_t> best_order;
  bool holds = false;
  std::string detail;

  nlohmann::json to_json() const;
};

/// Checks that the brute-force optimum, the closed form and the cache-aware
/// scheduler agree exactly. `capacity` <= 0 means the longest request length.
TheoremReport verify_theorem_1(const std::vector<TokenSequence>& requests, std::int64_t capacity = 0,
                               std::uint64_t workload_seed = 0);

/// Random requests drawn as paths of a random prefix tree: each new request
/// copies a prefix of an earlier one (or starts fresh) and appends random
/// tokens. Lengths lie in [1, max_len].
std::vector<TokenSequence> random_prefix_workload(std::uint64_t seed, std::size_t max_requests = 6,
                                                  std::size_t max_len = 64);

/// Token-at-a-time constrained decoding on the plain DFA with the same
/// sampling rule as DecodeSession, without masks, compression or
/// retokenization.
DecodeResult naive_constrained_decode(const MockModel& model, std::string_view regex, const Vocabulary& vocab,
                                      std::int64_t max_tokens, std::uint64_t salt = 0);

}  // namespace radixlm
