#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "radixlm/fsm.hpp"
#include "radixlm/hash.hpp"
#include "radixlm/mock_model.hpp"
#include "radixlm/radix_tree.hpp"
#include "radixlm/tokenizer.hpp"

namespace radixlm {

/// Token-granular KV pool shared by cached tokens and running requests.
class MemoryPool {
 public:
  explicit MemoryPool(std::int64_t capacity) : capacity_(capacity) {
    if (capacity <= 0) {
      throw ValidationError("pool capacity must be positive");
    }
  }
  std::int64_t capacity() const { return capacity_; }
  std::int64_t in_use() const { return in_use_; }
  std::int64_t available() const { return capacity_ - in_use_; }
  bool try_allocate(std::int64_t n) {
    if (n > available()) {
      return false;
    }
    in_use_ += n;
    return true;
  }
  void release(std::int64_t n) {
    if (n > in_use_ || n < 0) {
      throw Error("pool release of " + std::to_string(n) + " exceeds " + std::to_string(in_use_) + " in use");
    }
    in_use_ -= n;
  }

 private:
  std::int64_t capacity_;
  std::int64_t in_use_ = 0;
};

enum class SchedulePolicy { kCacheAware, kFcfs, kRandom };

SchedulePolicy parse_policy(const std::string& name);
std::string policy_name(SchedulePolicy policy);

struct SchedulerConfig {
  std::int64_t pool_capacity = 1 << 20;
  SchedulePolicy policy = SchedulePolicy::kCacheAware;
  std::uint64_t policy_seed = 0;
  std::uint64_t model_seed = 0;
  // Ablations.
  bool cache_enabled = true;     // false: nothing is reused or retained
  bool tree_structure = true;    // false: only whole previously cached sequences are reused
  double hit_cap = 1.0;          // fraction of the matched prefix that may be reused
  bool in_batch_deferral = true; // cache-aware only: hold back requests that share more with this round's admissions than with the tree
  std::int64_t max_running = 0; // 0: unlimited
  bool compressed_fsm = true;
  bool constraint_reuse = true;
  double eos_probability = 0.0;
  bool profile_tree_ops = false;
  // Simulated time of a step: step_overhead + prefill tokens + decode tokens.
  std::int64_t step_overhead = 0;
};

struct RequestSpec {
  TokenSequence prompt;
  std::int64_t max_new_tokens = 0;
  std::string regex;       // empty: unconstrained
  std::string stop;        // empty: none
  std::uint64_t salt = 0;  // decorrelates samples of the same prompt
};

struct Completion {
  RequestId id = 0;
  TokenSequence output;
  std::string text;  // output text, cut before the stop string if one was hit
  std::int64_t prompt_len = 0;
  std::int64_t cached_len = 0;
  std::int64_t arrival_time = 0;
  std::int64_t finish_time = 0;
  std::int64_t forward_passes = 0;
  bool stop_hit = false;
  std::string error;  // non-empty when the request failed (e.g. constraint budget)
};

struct SchedulerMetrics {
  std::int64_t cached_prompt_tokens = 0;
  std::int64_t total_prompt_tokens = 0;
  std::int64_t prefill_compute_tokens = 0;
  std::int64_t decode_steps = 0;  // decoded tokens, one per request per forward pass
  std::int64_t finished_requests = 0;
  std::int64_t steps = 0;
  std::int64_t simulated_time = 0;
  std::int64_t evicted_tokens = 0;
  std::int64_t peak_running = 0;
  std::vector<std::int64_t> latencies;
  std::vector<std::int64_t> batch_sizes;  // running batch size per step

  /// Cached prompt tokens over prompt tokens; throws on an empty denominator.
  double hit_rate() const;
  nlohmann::json to_json() const;
};

/// Simulated execution backend as seen by the interpreter and router.
class Runtime {
 public:
  virtual ~Runtime() = default;
  virtual RequestId submit(RequestSpec spec) = 0;
  /// One scheduling iteration; returns requests that finished in it.
  virtual std::vector<Completion> step() = 0;
  virtual bool idle() const = 0;
  virtual std::int64_t now() const = 0;
  /// Moves the clock forward while idle (for timed arrivals).
  virtual void advance_to(std::int64_t time) = 0;
  virtual const Vocabulary& vocab() const = 0;
  virtual const MockModel& model() const = 0;
};

/// Cache-aware continuous-batching scheduler over a radix tree and a shared
/// memory pool.
///
/// Each step admits waiting requests, prefills them and decodes one token for
/// every running request. Prompts enter the tree as soon as they are
/// prefilled; outputs are added when a request finishes. Admission reserves
/// max_new_tokens per request, so allocation after admission cannot fail.
class Scheduler : public Runtime {
 public:
  Scheduler(std::shared_ptr<const Vocabulary> vocab, SchedulerConfig config);
  ~Scheduler() override;

  RequestId submit(RequestSpec spec) override;
  std::vector<Completion> step() override;
  bool idle() const override { return waiting_.empty() && running_.empty(); }
  std::int64_t now() const override { return metrics_.simulated_time; }
  void advance_to(std::int64_t time) override;
  const Vocabulary& vocab() const override { return *vocab_; }
  const MockModel& model() const override { return model_; }

  /// Admission half of a step: ids admitted, in admission order.
  std::vector<RequestId> schedule_step();
  /// Execution half of a step: prefill, one decode token each, retirement.
  std::vector<Completion> run_step();

  /// Runs until idle; returns all completions.
  std::vector<Completion> drain();

  const SchedulerMetrics& metrics() const { return metrics_; }
  const SchedulerConfig& config() const { return config_; }
  const RadixTree& tree() const { return tree_; }
  const MemoryPool& pool() const { return pool_; }
  std::size_t waiting_count() const { return waiting_.size(); }
  std::size_t running_count() const { return running_.size(); }
  /// Decode tokens still reserved by running requests.
  std::int64_t outstanding_tokens() const;
  const ConstraintCache& constraints() const { return constraints_; }
  double tree_op_seconds() const { return tree_seconds_; }

  /// Called with the full token path of every evicted leaf and the number of
  /// tokens removed from its end.
  using EvictionListener = std::function<void(const TokenSequence& path, std::int64_t tokens)>;
  void set_eviction_listener(EvictionListener listener) { on_evict_ = std::move(listener); }

  /// Called with every sequence inserted into the tree that added tokens.
  using InsertListener = std::function<void(const TokenSequence& path)>;
  void set_insert_listener(InsertListener listener) { on_insert_ = std::move(listener); }

  /// Token paths currently pinned by running requests.
  std::vector<TokenSequence> pinned_paths() const;

  /// Throws Error if pool accounting or tree invariants are broken.
  void check_invariants() const;

 private:
  struct Request;

  void match(Request& req);
  std::int64_t reserved_tokens(const Request& req) const;
  void allocate(std::int64_t tokens);
  void prefill(Request& req);
  bool decode_one(Request& req);
  Completion retire(Request& req);

  class TreeTimer;

  std::shared_ptr<const Vocabulary> vocab_;
  SchedulerConfig config_;
  MockModel model_;
  RadixTree tree_;
  MemoryPool pool_;
  ConstraintCache constraints_;
  Rng rng_;
  std::deque<std::unique_ptr<Request>> waiting_;
  std::vector<std::unique_ptr<Request>> running_;
  std::vector<Request*> admitted_;  // admitted in the current step, not yet prefilled
  SchedulerMetrics metrics_;
  RequestId next_id_ = 1;
  std::uint64_t next_arrival_ = 0;
  double tree_seconds_ = 0.0;
  EvictionListener on_evict_;
  InsertListener on_insert_;
};

}  // namespace radixlm
