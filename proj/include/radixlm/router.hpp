#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "radixlm/scheduler.hpp"

namespace radixlm {

/// FIFO message channel between simulated processes.
template <typename T>
class Channel {
 public:
  void send(T msg) { queue_.push_back(std::move(msg)); }
  std::optional<T> receive() {
    if (queue_.empty()) {
      return std::nullopt;
    }
    T msg = std::move(queue_.front());
    queue_.pop_front();
    return msg;
  }
  std::size_t size() const { return queue_.size(); }
  bool empty() const { return queue_.empty(); }

 private:
  std::deque<T> queue_;
};

/// Worker cache change reported to the router. Evictions remove `tokens`
/// tokens from the end of `path`; insertions add the whole path.
struct CacheEvent {
  enum class Kind { kInsert, kEvict };
  Kind kind = Kind::kInsert;
  std::size_t worker = 0;
  TokenSequence path;
  std::int64_t tokens = 0;
};

/// Trie over token sequences recording which workers cache each prefix.
///
/// Confirmed membership follows the workers' reported events. Dispatches add
/// an expected mark that lasts until the request completes, so requests sent
/// together with a shared prefix find each other before any worker reports.
class MetaTree {
 public:
  explicit MetaTree(std::size_t workers);

  /// Deepest match per worker (confirmed or expected), in tokens.
  std::vector<std::int64_t> affinity(std::span<const TokenId> tokens) const;

  void add_expected(std::size_t worker, std::span<const TokenId> tokens);
  void remove_expected(std::size_t worker, std::span<const TokenId> tokens);
  void apply(const CacheEvent& event);

  /// Maximal confirmed paths of one worker, sorted.
  std::vector<TokenSequence> worker_paths(std::size_t worker) const;
  std::size_t node_count() const { return nodes_.size() - free_.size(); }
  bool has_expected() const;

 private:
  struct Node {
    std::map<TokenId, std::int32_t> children;
    std::int32_t parent = -1;
    TokenId token = 0;
    std::uint64_t confirmed = 0;         // worker bitmask
    std::vector<std::int32_t> expected;  // per-worker in-flight count
  };

  std::int32_t child(std::int32_t node, TokenId token) const;
  std::int32_t ensure_child(std::int32_t node, TokenId token);
  void prune(std::int32_t node);
  bool empty_node(const Node& n) const;

  std::size_t workers_;
  std::vector<Node> nodes_;
  std::vector<std::int32_t> free_;
};

enum class RoutePolicy { kAffinity, kLoad, kBlend };

RoutePolicy parse_route_policy(const std::string& name);
std::string route_policy_name(RoutePolicy policy);

struct RouterConfig {
  std::size_t workers = 4;
  RoutePolicy policy = RoutePolicy::kBlend;
  // Blend: affinity tokens minus load_penalty per request queued or running.
  double load_penalty = 32.0;
  // Apply queued cache events once this many are pending, and (optionally)
  // whenever all workers are idle.
  std::size_t sync_threshold = 64;
  bool sync_when_idle = true;
};

/// Data-parallel runtime: one scheduler per worker behind an affinity router.
///
/// Workers advance as a discrete-event simulation: each step runs the busy
/// worker with the earliest clock, and the router clock is the latest start
/// time of any worker step. Throughput over this clock treats the workers as
/// running in parallel.
class Router : public Runtime {
 public:
  Router(std::shared_ptr<const Vocabulary> vocab, SchedulerConfig worker_config, RouterConfig config);
  // Workers report to the router through callbacks bound to its address.
  Router(const Router&) = delete;
  Router& operator=(const Router&) = delete;

  RequestId submit(RequestSpec spec) override;
  std::vector<Completion> step() override;
  bool idle() const override;
  std::int64_t now() const override { return now_; }
  void advance_to(std::int64_t time) override;
  const Vocabulary& vocab() const override { return *vocab_; }
  const MockModel& model() const override { return workers_.front()->model(); }

  /// Assigns each request to a worker without submitting it. Later requests
  /// see the expected marks of earlier ones.
  std::vector<std::size_t> dispatch(const std::vector<RequestSpec>& batch);

  /// Applies every queued cache event; returns the number of evictions.
  std::size_t sync_evictions();

  std::vector<Completion> drain();

  std::size_t worker_count() const { return workers_.size(); }
  const Scheduler& worker(std::size_t i) const { return *workers_.at(i); }
  const MetaTree& meta_tree() const { return meta_; }
  std::size_t pending_events() const { return events_.size(); }
  /// Makespan: the latest worker clock.
  std::int64_t makespan() const;
  const std::vector<std::int64_t>& assigned_counts() const { return assigned_; }

  /// True when the meta-tree's confirmed membership equals the workers'
  /// cached paths exactly. Meaningful once idle and synced.
  bool consistent_with_workers() const;

  nlohmann::json metrics_json() const;

 private:
  std::size_t choose(std::span<const TokenId> prompt) const;
  std::int64_t load(std::size_t worker) const;

  struct Routed {
    std::size_t worker;
    RequestId local;
    TokenSequence prompt;
  };

  std::shared_ptr<const Vocabulary> vocab_;
  RouterConfig config_;
  std::vector<std::unique_ptr<Scheduler>> workers_;
  MetaTree meta_;
  Channel<CacheEvent> events_;
  std::vector<std::int64_t> assigned_;
  std::vector<std::int64_t> queued_;  // dispatched and not yet finished
  std::map<std::pair<std::size_t, RequestId>, RequestId> global_id_;
  std::unordered_map<RequestId, Routed> routed_;
  RequestId next_id_ = 1;
  std::int64_t now_ = 0;
};

/// Maximal root-to-leaf token paths of a radix tree, sorted.
std::vector<TokenSequence> cached_paths(const RadixTree& tree);

}  // namespace radixlm
