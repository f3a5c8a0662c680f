#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <span>

#include <nlohmann/json.hpp>

#include "radixlm/types.hpp"

namespace radixlm {

class RefCountUnderflow : public Error {
 public:
  using Error::Error;
};

/// One edge of the tree together with the node it leads to. The edge label
/// holds the tokens whose KV entries this node owns.
struct RadixNode {
  TokenSequence label;
  std::map<TokenId, std::unique_ptr<RadixNode>> children;
  RadixNode* parent = nullptr;
  std::int64_t ref_count = 0;
  std::uint64_t last_access = 0;
  std::uint64_t id = 0;
  // Set on the endpoint of every inserted sequence; used by the
  // table-cache ablation that only reuses whole entries.
  bool terminal = false;

  std::int64_t cached_len() const { return static_cast<std::int64_t>(label.size()); }
  bool is_leaf() const { return children.empty(); }
};

struct PrefixMatch {
  RadixNode* node;
  std::int64_t matched_len;
};

struct EvictedLeaf {
  const RadixNode* node;  // still attached while the callback runs
  std::int64_t tokens;
};

/// Radix tree over token sequences with reference counting and LRU leaf
/// eviction.
///
/// Handles are raw node pointers. A node survives as long as it is pinned
/// (ref_count > 0) or not chosen for eviction; splitting an edge keeps the
/// lower node object, so outstanding handles stay valid across splits.
class RadixTree {
 public:
  using EvictCallback = std::function<void(const EvictedLeaf&)>;

  RadixTree();
  RadixTree(const RadixTree&) = delete;
  RadixTree& operator=(const RadixTree&) = delete;
  RadixTree(RadixTree&&) noexcept = default;
  RadixTree& operator=(RadixTree&&) noexcept = default;

  /// Longest cached prefix of `tokens`. A match ending inside an edge splits
  /// that edge so the returned node is the exact endpoint.
  PrefixMatch match_prefix(std::span<const TokenId> tokens);

  /// Makes `tokens` a root-to-node path; returns the number of tokens added.
  /// `endpoint`, when given, receives the node the path ends at.
  std::int64_t insert(std::span<const TokenId> tokens, RadixNode** endpoint = nullptr);

  /// Appends `tokens` to the edge of a non-root leaf in place, so a prompt
  /// and its continuation stay one node. Returns the number appended.
  std::int64_t extend_leaf(RadixNode* leaf, std::span<const TokenId> tokens);

  /// Pin/unpin the path from `node` to the root. Both return the signed change
  /// of evictable_size().
  std::int64_t inc_ref(RadixNode* node);
  std::int64_t dec_ref(RadixNode* node);

  /// Removes least-recently-used evictable leaves until at least `needed`
  /// tokens are gone or nothing evictable remains.
  std::int64_t evict(std::int64_t needed, const EvictCallback& on_evict = {});

  std::int64_t evictable_size() const { return total_cached_ - pinned_; }
  std::int64_t total_cached_tokens() const { return total_cached_; }
  std::int64_t pinned_tokens() const { return pinned_; }
  std::uint64_t clock() const { return clock_; }
  std::size_t node_count() const { return node_count_; }

  const RadixNode& root() const { return *root_; }
  RadixNode* root_handle() { return root_.get(); }

  /// Full token path from the root to the end of `node`'s edge.
  TokenSequence path_tokens(const RadixNode* node) const;
  std::int64_t depth_tokens(const RadixNode* node) const;

  /// Pre-order dump: edge labels, ref counts, timestamps.
  nlohmann::json dump() const;

  /// Walks the tree and throws Error describing the first broken invariant.
  void check_invariants() const;

 private:
  struct LeafOrder {
    bool operator()(const RadixNode* a, const RadixNode* b) const {
      return a->last_access != b->last_access ? a->last_access < b->last_access : a->id < b->id;
    }
  };

  RadixNode* split(RadixNode* node, std::size_t at);
  void touch(RadixNode* node);
  bool is_evictable_leaf(const RadixNode* node) const {
    return node != root_.get() && node->is_leaf() && node->ref_count == 0;
  }

  std::unique_ptr<RadixNode> root_;
  // Evictable leaves ordered by (last_access, id); keys are never mutated
  // while a node is in the set.
  std::set<RadixNode*, LeafOrder> evictable_leaves_;
  std::int64_t total_cached_ = 0;
  std::int64_t pinned_ = 0;
  std::uint64_t clock_ = 0;
  std::uint64_t next_id_ = 1;
  std::size_t node_count_ = 0;
};

}  // namespace radixlm
