#include "radixlm/radix_tree.hpp"

#include <algorithm>
#include <string>

namespace radixlm {

namespace {

std::size_t common_prefix(const TokenSequence& label, std::span<const TokenId> tokens) {
  const std::size_t n = std::min(label.size(), tokens.size());
  std::size_t k = 0;
  while (k < n && label[k] == tokens[k]) {
    ++k;
  }
  return k;
}

}  // namespace

RadixTree::RadixTree() : root_(std::make_unique<RadixNode>()) { node_count_ = 1; }

void RadixTree::touch(RadixNode* node) {
  if (node->last_access == clock_) {
    return;
  }
  if (!is_evictable_leaf(node)) {
    node->last_access = clock_;
    return;
  }
  // Reuse the set node instead of freeing and allocating one.
  auto handle = evictable_leaves_.extract(node);
  node->last_access = clock_;
  evictable_leaves_.insert(std::move(handle));
}

RadixNode* RadixTree::split(RadixNode* node, std::size_t at) {
  RadixNode* parent = node->parent;
  auto& slot = parent->children.at(node->label.front());

  auto upper = std::make_unique<RadixNode>();
  upper->label.assign(node->label.begin(), node->label.begin() + static_cast<std::ptrdiff_t>(at));
  upper->ref_count = node->ref_count;
  upper->last_access = node->last_access;
  upper->id = next_id_++;
  upper->parent = parent;

  std::unique_ptr<RadixNode> lower = std::move(slot);
  lower->label.erase(lower->label.begin(), lower->label.begin() + static_cast<std::ptrdiff_t>(at));
  lower->parent = upper.get();
  const TokenId key = lower->label.front();
  upper->children.emplace(key, std::move(lower));

  slot = std::move(upper);
  ++node_count_;
  return slot.get();
}

PrefixMatch RadixTree::match_prefix(std::span<const TokenId> tokens) {
  ++clock_;
  RadixNode* node = root_.get();
  std::size_t i = 0;
  while (i < tokens.size()) {
    auto it = node->children.find(tokens[i]);
    if (it == node->children.end()) {
      break;
    }
    RadixNode* child = it->second.get();
    const std::size_t k = common_prefix(child->label, tokens.subspan(i));
    const bool partial = k < child->label.size();
    if (partial) {
      child = split(child, k);
    }
    touch(child);
    node = child;
    i += k;
    if (partial) {
      break;
    }
  }
  return {node, static_cast<std::int64_t>(i)};
}

std::int64_t RadixTree::insert(std::span<const TokenId> tokens, RadixNode** endpoint) {
  ++clock_;
  RadixNode* node = root_.get();
  std::size_t i = 0;
  std::int64_t added = 0;
  while (i < tokens.size()) {
    auto it = node->children.find(tokens[i]);
    if (it == node->children.end()) {
      decltype(evictable_leaves_)::node_type handle;
      if (is_evictable_leaf(node)) {
        handle = evictable_leaves_.extract(node);
      }
      auto leaf = std::make_unique<RadixNode>();
      leaf->label.assign(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.end());
      leaf->parent = node;
      leaf->id = next_id_++;
      leaf->last_access = clock_;
      RadixNode* raw = leaf.get();
      node->children.emplace(tokens[i], std::move(leaf));
      ++node_count_;
      added = raw->cached_len();
      total_cached_ += added;
      if (handle) {
        handle.value() = raw;
        evictable_leaves_.insert(std::move(handle));
      } else {
        evictable_leaves_.insert(raw);
      }
      node = raw;
      break;
    }
    RadixNode* child = it->second.get();
    const std::size_t k = common_prefix(child->label, tokens.subspan(i));
    if (k < child->label.size()) {
      child = split(child, k);
    }
    touch(child);
    node = child;
    i += k;
  }
  if (node != root_.get()) {
    node->terminal = true;
  }
  if (endpoint != nullptr) {
    *endpoint = node;
  }
  return added;
}

std::int64_t RadixTree::extend_leaf(RadixNode* leaf, std::span<const TokenId> tokens) {
  if (leaf == nullptr || leaf == root_.get() || !leaf->children.empty()) {
    throw PreconditionError("extend_leaf needs a non-root leaf");
  }
  ++clock_;
  decltype(evictable_leaves_)::node_type handle;
  if (is_evictable_leaf(leaf)) {
    handle = evictable_leaves_.extract(leaf);
  }
  leaf->label.insert(leaf->label.end(), tokens.begin(), tokens.end());
  leaf->last_access = clock_;
  leaf->terminal = true;
  const auto n = static_cast<std::int64_t>(tokens.size());
  total_cached_ += n;
  if (leaf->ref_count > 0) {
    pinned_ += n;
  }
  if (handle) {
    evictable_leaves_.insert(std::move(handle));
  }
  return n;
}

std::int64_t RadixTree::inc_ref(RadixNode* node) {
  std::int64_t delta = 0;
  for (RadixNode* n = node; n != nullptr && n != root_.get(); n = n->parent) {
    if (n->ref_count == 0) {
      if (is_evictable_leaf(n)) {
        evictable_leaves_.erase(n);
      }
      pinned_ += n->cached_len();
      delta -= n->cached_len();
    }
    ++n->ref_count;
  }
  return delta;
}

std::int64_t RadixTree::dec_ref(RadixNode* node) {
  for (RadixNode* n = node; n != nullptr && n != root_.get(); n = n->parent) {
    if (n->ref_count <= 0) {
      throw RefCountUnderflow("dec_ref would make the ref count of node " + std::to_string(n->id) + " negative");
    }
  }
  std::int64_t delta = 0;
  for (RadixNode* n = node; n != nullptr && n != root_.get(); n = n->parent) {
    if (--n->ref_count == 0) {
      pinned_ -= n->cached_len();
      delta += n->cached_len();
      if (is_evictable_leaf(n)) {
        evictable_leaves_.insert(n);
      }
    }
  }
  return delta;
}

std::int64_t RadixTree::evict(std::int64_t needed, const EvictCallback& on_evict) {
  if (needed < 0) {
    throw PreconditionError("evict: needed_tokens must be non-negative");
  }
  std::int64_t evicted = 0;
  while (evicted < needed && !evictable_leaves_.empty()) {
    RadixNode* leaf = *evictable_leaves_.begin();
    evictable_leaves_.erase(evictable_leaves_.begin());
    const std::int64_t len = leaf->cached_len();
    if (on_evict) {
      on_evict(EvictedLeaf{leaf, len});
    }
    total_cached_ -= len;
    evicted += len;
    RadixNode* parent = leaf->parent;
    parent->children.erase(leaf->label.front());
    --node_count_;
    if (is_evictable_leaf(parent)) {
      evictable_leaves_.insert(parent);
    }
  }
  return evicted;
}

TokenSequence RadixTree::path_tokens(const RadixNode* node) const {
  std::vector<const RadixNode*> chain;
  for (const RadixNode* n = node; n != nullptr && n != root_.get(); n = n->parent) {
    chain.push_back(n);
  }
  TokenSequence out;
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    out.insert(out.end(), (*it)->label.begin(), (*it)->label.end());
  }
  return out;
}

std::int64_t RadixTree::depth_tokens(const RadixNode* node) const {
  std::int64_t depth = 0;
  for (const RadixNode* n = node; n != nullptr && n != root_.get(); n = n->parent) {
    depth += n->cached_len();
  }
  return depth;
}

namespace {

nlohmann::json dump_node(const RadixNode& node) {
  nlohmann::json children = nlohmann::json::array();
  for (const auto& [key, child] : node.children) {
    children.push_back(dump_node(*child));
  }
  return {{"id", node.id},
          {"label", node.label},
          {"ref_count", node.ref_count},
          {"last_access", node.last_access},
          {"children", std::move(children)}};
}

}  // namespace

nlohmann::json RadixTree::dump() const { return dump_node(*root_); }

void RadixTree::check_invariants() const {
  std::int64_t total = 0;
  std::int64_t pinned = 0;
  std::size_t nodes = 0;
  std::size_t leaves = 0;

  std::function<void(const RadixNode&)> walk = [&](const RadixNode& node) {
    ++nodes;
    const bool is_root = &node == root_.get();
    if (!is_root) {
      if (node.label.empty()) {
        throw Error("non-root node " + std::to_string(node.id) + " has an empty edge label");
      }
      total += node.cached_len();
      if (node.ref_count < 0) {
        throw Error("negative ref count on node " + std::to_string(node.id));
      }
      if (node.ref_count > 0) {
        pinned += node.cached_len();
      }
    }
    std::int64_t child_refs = 0;
    for (const auto& [key, child] : node.children) {
      if (child->label.empty() || child->label.front() != key) {
        throw Error("radix property violated under node " + std::to_string(node.id));
      }
      if (child->parent != &node) {
        throw Error("broken parent link on node " + std::to_string(child->id));
      }
      child_refs += child->ref_count;
      walk(*child);
    }
    if (!is_root && node.ref_count < child_refs) {
      throw Error("node " + std::to_string(node.id) + " has fewer refs than its children");
    }
    const bool evictable = !is_root && node.children.empty() && node.ref_count == 0;
    if (evictable) {
      ++leaves;
      if (!evictable_leaves_.contains(const_cast<RadixNode*>(&node))) {
        throw Error("evictable leaf " + std::to_string(node.id) + " missing from the LRU index");
      }
    }
  };
  walk(*root_);

  if (total != total_cached_) {
    throw Error("total_cached_tokens out of sync with edge lengths");
  }
  if (pinned != pinned_) {
    throw Error("pinned token count out of sync");
  }
  if (leaves != evictable_leaves_.size()) {
    throw Error("LRU index holds non-evictable nodes");
  }
  if (nodes != node_count_) {
    throw Error("node count out of sync");
  }
}

}  // namespace radixlm
