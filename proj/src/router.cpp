#include "radixlm/router.hpp"

#include <algorithm>
#include <functional>

namespace radixlm {

MetaTree::MetaTree(std::size_t workers) : workers_(workers) {
  if (workers == 0 || workers > 64) {
    throw ValidationError("worker count must be in [1, 64]");
  }
  nodes_.emplace_back();
  nodes_[0].expected.assign(workers, 0);
}

std::int32_t MetaTree::child(std::int32_t node, TokenId token) const {
  const auto& ch = nodes_[static_cast<std::size_t>(node)].children;
  auto it = ch.find(token);
  return it == ch.end() ? -1 : it->second;
}

std::int32_t MetaTree::ensure_child(std::int32_t node, TokenId token) {
  const std::int32_t existing = child(node, token);
  if (existing >= 0) {
    return existing;
  }
  std::int32_t id;
  if (!free_.empty()) {
    id = free_.back();
    free_.pop_back();
    nodes_[static_cast<std::size_t>(id)] = Node{};
  } else {
    id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
  }
  Node& n = nodes_[static_cast<std::size_t>(id)];
  n.parent = node;
  n.token = token;
  n.expected.assign(workers_, 0);
  nodes_[static_cast<std::size_t>(node)].children[token] = id;
  return id;
}

bool MetaTree::empty_node(const Node& n) const {
  return n.children.empty() && n.confirmed == 0 &&
         std::all_of(n.expected.begin(), n.expected.end(), [](std::int32_t c) { return c == 0; });
}

void MetaTree::prune(std::int32_t node) {
  while (node > 0 && empty_node(nodes_[static_cast<std::size_t>(node)])) {
    Node& n = nodes_[static_cast<std::size_t>(node)];
    const std::int32_t parent = n.parent;
    nodes_[static_cast<std::size_t>(parent)].children.erase(n.token);
    free_.push_back(node);
    node = parent;
  }
}

std::vector<std::int64_t> MetaTree::affinity(std::span<const TokenId> tokens) const {
  std::vector<std::int64_t> out(workers_, 0);
  std::int32_t cur = 0;
  std::int64_t depth = 0;
  for (TokenId t : tokens) {
    cur = child(cur, t);
    if (cur < 0) {
      break;
    }
    ++depth;
    const Node& n = nodes_[static_cast<std::size_t>(cur)];
    for (std::size_t w = 0; w < workers_; ++w) {
      if ((n.confirmed >> w & 1) != 0 || n.expected[w] > 0) {
        out[w] = depth;
      }
    }
  }
  return out;
}

void MetaTree::add_expected(std::size_t worker, std::span<const TokenId> tokens) {
  std::int32_t cur = 0;
  for (TokenId t : tokens) {
    cur = ensure_child(cur, t);
    ++nodes_[static_cast<std::size_t>(cur)].expected[worker];
  }
}

void MetaTree::remove_expected(std::size_t worker, std::span<const TokenId> tokens) {
  std::int32_t cur = 0;
  for (TokenId t : tokens) {
    cur = child(cur, t);
    if (cur < 0) {
      throw Error("meta-tree lost an expected path");
    }
    --nodes_[static_cast<std::size_t>(cur)].expected[worker];
  }
  prune(cur);
}

void MetaTree::apply(const CacheEvent& event) {
  const std::uint64_t bit = std::uint64_t{1} << event.worker;
  if (event.kind == CacheEvent::Kind::kInsert) {
    std::int32_t cur = 0;
    for (TokenId t : event.path) {
      cur = ensure_child(cur, t);
      nodes_[static_cast<std::size_t>(cur)].confirmed |= bit;
    }
    return;
  }
  const auto keep = static_cast<std::int64_t>(event.path.size()) - event.tokens;
  std::int32_t cur = 0;
  std::int64_t depth = 0;
  for (TokenId t : event.path) {
    cur = child(cur, t);
    if (cur < 0) {
      return;
    }
    if (++depth > keep) {
      nodes_[static_cast<std::size_t>(cur)].confirmed &= ~bit;
    }
  }
  prune(cur);
}

std::vector<TokenSequence> MetaTree::worker_paths(std::size_t worker) const {
  const std::uint64_t bit = std::uint64_t{1} << worker;
  std::vector<TokenSequence> out;
  TokenSequence path;
  std::function<void(std::int32_t)> visit = [&](std::int32_t id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    bool extended = false;
    for (const auto& [tok, c] : n.children) {
      if ((nodes_[static_cast<std::size_t>(c)].confirmed & bit) != 0) {
        extended = true;
        path.push_back(tok);
        visit(c);
        path.pop_back();
      }
    }
    if (!extended && id != 0) {
      out.push_back(path);
    }
  };
  visit(0);
  std::sort(out.begin(), out.end());
  return out;
}

bool MetaTree::has_expected() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (std::find(free_.begin(), free_.end(), static_cast<std::int32_t>(i)) != free_.end()) {
      continue;
    }
    for (auto c : nodes_[i].expected) {
      if (c != 0) {
        return true;
      }
    }
  }
  return false;
}

std::vector<TokenSequence> cached_paths(const RadixTree& tree) {
  std::vector<TokenSequence> out;
  std::function<void(const RadixNode&)> visit = [&](const RadixNode& n) {
    if (n.is_leaf() && &n != &tree.root()) {
      out.push_back(tree.path_tokens(&n));
    }
    for (const auto& [tok, c] : n.children) {
      visit(*c);
    }
  };
  visit(tree.root());
  std::sort(out.begin(), out.end());
  return out;
}

RoutePolicy parse_route_policy(const std::string& name) {
  if (name == "affinity") return RoutePolicy::kAffinity;
  if (name == "load") return RoutePolicy::kLoad;
  if (name == "blend") return RoutePolicy::kBlend;
  throw ValidationError("unknown route policy '" + name + "'");
}

std::string route_policy_name(RoutePolicy policy) {
  switch (policy) {
    case RoutePolicy::kAffinity:
      return "affinity";
    case RoutePolicy::kLoad:
      return "load";
    case RoutePolicy::kBlend:
      return "blend";
  }
  return "?";
}

Router::Router(std::shared_ptr<const Vocabulary> vocab, SchedulerConfig worker_config, RouterConfig config)
    : vocab_(std::move(vocab)), config_(config), meta_(config.workers) {
  for (std::size_t w = 0; w < config_.workers; ++w) {
    auto s = std::make_unique<Scheduler>(vocab_, worker_config);
    s->set_eviction_listener([this, w](const TokenSequence& path, std::int64_t tokens) {
      events_.send({CacheEvent::Kind::kEvict, w, path, tokens});
    });
    s->set_insert_listener([this, w](const TokenSequence& path) {
      events_.send({CacheEvent::Kind::kInsert, w, path, static_cast<std::int64_t>(path.size())});
    });
    workers_.push_back(std::move(s));
  }
  assigned_.assign(config_.workers, 0);
  queued_.assign(config_.workers, 0);
}

std::int64_t Router::load(std::size_t worker) const { return queued_[worker]; }

std::size_t Router::choose(std::span<const TokenId> prompt) const {
  const auto aff = meta_.affinity(prompt);
  std::size_t best = 0;
  auto better = [&](std::size_t a, std::size_t b) {
    // True when worker a beats worker b.
    switch (config_.policy) {
      case RoutePolicy::kAffinity:
        if (aff[a] != aff[b]) return aff[a] > aff[b];
        if (load(a) != load(b)) return load(a) < load(b);
        return a < b;
      case RoutePolicy::kLoad:
        if (load(a) != load(b)) return load(a) < load(b);
        if (aff[a] != aff[b]) return aff[a] > aff[b];
        return a < b;
      case RoutePolicy::kBlend: {
        const double sa = static_cast<double>(aff[a]) - config_.load_penalty * static_cast<double>(load(a));
        const double sb = static_cast<double>(aff[b]) - config_.load_penalty * static_cast<double>(load(b));
        if (sa != sb) return sa > sb;
        if (load(a) != load(b)) return load(a) < load(b);
        return a < b;
      }
    }
    return a < b;
  };
  for (std::size_t w = 1; w < workers_.size(); ++w) {
    if (better(w, best)) {
      best = w;
    }
  }
  return best;
}

std::vector<std::size_t> Router::dispatch(const std::vector<RequestSpec>& batch) {
  std::vector<std::size_t> out;
  for (const auto& spec : batch) {
    const std::size_t w = choose(spec.prompt);
    meta_.add_expected(w, spec.prompt);
    ++queued_[w];
    out.push_back(w);
  }
  // Dry run: undo the marks.
  for (std::size_t i = 0; i < batch.size(); ++i) {
    meta_.remove_expected(out[i], batch[i].prompt);
    --queued_[out[i]];
  }
  return out;
}

RequestId Router::submit(RequestSpec spec) {
  const std::size_t w = choose(spec.prompt);
  Scheduler& worker = *workers_[w];
  if (worker.idle()) {
    worker.advance_to(now_);
  }
  TokenSequence prompt = spec.prompt;
  const RequestId local = worker.submit(std::move(spec));
  meta_.add_expected(w, prompt);
  ++queued_[w];
  ++assigned_[w];
  const RequestId id = next_id_++;
  global_id_[{w, local}] = id;
  routed_[id] = {w, local, std::move(prompt)};
  return id;
}

bool Router::idle() const {
  return std::all_of(workers_.begin(), workers_.end(), [](const auto& w) { return w->idle(); });
}

void Router::advance_to(std::int64_t time) {
  now_ = std::max(now_, time);
  for (auto& w : workers_) {
    if (w->idle()) {
      w->advance_to(now_);
    }
  }
}

std::vector<Completion> Router::step() {
  std::size_t pick = workers_.size();
  for (std::size_t w = 0; w < workers_.size(); ++w) {
    if (!workers_[w]->idle() && (pick == workers_.size() || workers_[w]->now() < workers_[pick]->now())) {
      pick = w;
    }
  }
  if (pick == workers_.size()) {
    return {};
  }
  now_ = std::max(now_, workers_[pick]->now());
  auto done = workers_[pick]->step();
  for (auto& c : done) {
    auto it = global_id_.find({pick, c.id});
    const RequestId id = it->second;
    global_id_.erase(it);
    auto r = routed_.find(id);
    meta_.remove_expected(pick, r->second.prompt);
    routed_.erase(r);
    --queued_[pick];
    c.id = id;
  }
  if (events_.size() >= config_.sync_threshold || (config_.sync_when_idle && idle())) {
    sync_evictions();
  }
  return done;
}

std::size_t Router::sync_evictions() {
  std::size_t evictions = 0;
  while (auto ev = events_.receive()) {
    meta_.apply(*ev);
    evictions += ev->kind == CacheEvent::Kind::kEvict ? 1 : 0;
  }
  return evictions;
}

std::vector<Completion> Router::drain() {
  std::vector<Completion> out;
  while (!idle()) {
    auto done = step();
    out.insert(out.end(), std::make_move_iterator(done.begin()), std::make_move_iterator(done.end()));
  }
  if (config_.sync_when_idle) {
    sync_evictions();
  }
  return out;
}

std::int64_t Router::makespan() const {
  std::int64_t m = 0;
  for (const auto& w : workers_) {
    m = std::max(m, w->now());
  }
  return m;
}

bool Router::consistent_with_workers() const {
  for (std::size_t w = 0; w < workers_.size(); ++w) {
    if (meta_.worker_paths(w) != cached_paths(workers_[w]->tree())) {
      return false;
    }
  }
  return true;
}

nlohmann::json Router::metrics_json() const {
  nlohmann::json per_worker = nlohmann::json::array();
  std::int64_t cached = 0;
  std::int64_t total = 0;
  std::int64_t finished = 0;
  for (std::size_t w = 0; w < workers_.size(); ++w) {
    const auto& m = workers_[w]->metrics();
    cached += m.cached_prompt_tokens;
    total += m.total_prompt_tokens;
    finished += m.finished_requests;
    auto j = m.to_json();
    j["worker"] = w;
    j["assigned"] = assigned_[w];
    per_worker.push_back(std::move(j));
  }
  nlohmann::json out = {{"policy", route_policy_name(config_.policy)},
                        {"workers", workers_.size()},
                        {"makespan", makespan()},
                        {"finished_requests", finished},
                        {"cached_prompt_tokens", cached},
                        {"total_prompt_tokens", total},
                        {"per_worker", std::move(per_worker)}};
  out["hit_rate"] = total > 0 ? static_cast<double>(cached) / static_cast<double>(total) : 0.0;
  return out;
}

}  // namespace radixlm
