#include "radixlm/oracles.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace radixlm {

namespace {

// Token-per-node trie with LRU leaf eviction. Deliberately unrelated to
// RadixTree so agreement between the two means something.
class TokenLruCache {
 public:
  explicit TokenLruCache(std::int64_t capacity) : capacity_(capacity) { nodes_.push_back({}); }

  // Runs one request; returns its number of cached prompt tokens.
  std::int64_t run(const TokenSequence& req) {
    ++clock_;
    std::vector<std::size_t> path;
    std::size_t cur = 0;
    std::size_t i = 0;
    while (i < req.size()) {
      auto it = nodes_[cur].children.find(req[i]);
      if (it == nodes_[cur].children.end()) {
        break;
      }
      cur = it->second;
      path.push_back(cur);
      ++i;
    }
    const auto hits = static_cast<std::int64_t>(i);
    for (auto n : path) {
      nodes_[n].stamp = clock_;
      nodes_[n].is_protected = true;
    }
    const auto need = static_cast<std::int64_t>(req.size() - i);
    while (size_ + need > capacity_ && evict_one()) {
    }
    for (; i < req.size() && size_ < capacity_; ++i) {
      const std::size_t id = nodes_.size();
      nodes_.push_back({});
      nodes_[id].parent = cur;
      nodes_[id].token = req[i];
      nodes_[id].stamp = clock_;
      nodes_[cur].children[req[i]] = id;
      ++size_;
      path.push_back(id);
      cur = id;
    }
    for (auto n : path) {
      nodes_[n].is_protected = false;
    }
    return hits;
  }

 private:
  struct Node {
    std::map<TokenId, std::size_t> children;
    std::size_t parent = 0;
    TokenId token = 0;
    std::uint64_t stamp = 0;
    bool alive = true;
    bool is_protected = false;
  };

  bool evict_one() {
    std::size_t victim = 0;
    for (std::size_t id = 1; id < nodes_.size(); ++id) {
      const Node& n = nodes_[id];
      if (!n.alive || n.is_protected || !n.children.empty()) {
        continue;
      }
      if (victim == 0 || n.stamp < nodes_[victim].stamp) {
        victim = id;
      }
    }
    if (victim == 0) {
      return false;
    }
    nodes_[victim].alive = false;
    nodes_[nodes_[victim].parent].children.erase(nodes_[victim].token);
    --size_;
    return true;
  }

  std::int64_t capacity_;
  std::int64_t size_ = 0;
  std::uint64_t clock_ = 0;
  std::vector<Node> nodes_;
};

std::int64_t total_tokens(const std::vector<TokenSequence>& requests) {
  std::int64_t total = 0;
  for (const auto& r : requests) {
    total += static_cast<std::int64_t>(r.size());
  }
  return total;
}

std::int64_t max_length(const std::vector<TokenSequence>& requests) {
  std::int64_t m = 0;
  for (const auto& r : requests) {
    m = std::max(m, static_cast<std::int64_t>(r.size()));
  }
  return m;
}

double ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) {
    throw PreconditionError("hit rate is undefined without prompt tokens");
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double sequential_lru_hit_rate(const std::vector<TokenSequence>& requests, const std::vector<std::size_t>& order,
                               std::int64_t capacity) {
  TokenLruCache cache(capacity);
  std::int64_t hits = 0;
  for (auto idx : order) {
    hits += cache.run(requests.at(idx));
  }
  return ratio(hits, total_tokens(requests));
}

BruteForceResult optimal_hit_rate_bruteforce(const std::vector<TokenSequence>& requests, std::int64_t capacity) {
  if (requests.size() > 8) {
    throw PreconditionError("brute force is limited to 8 requests");
  }
  if (requests.empty()) {
    throw PreconditionError("brute force needs at least one request");
  }
  std::vector<std::size_t> order(requests.size());
  std::iota(order.begin(), order.end(), 0);
  const std::int64_t total = total_tokens(requests);
  BruteForceResult best;
  std::int64_t best_hits = -1;
  do {
    TokenLruCache cache(capacity);
    std::int64_t hits = 0;
    for (auto idx : order) {
      hits += cache.run(requests[idx]);
    }
    if (hits > best_hits) {
      best_hits = hits;
      best.best_order = order;
    }
  } while (std::next_permutation(order.begin(), order.end()));
  best.best_rate = ratio(best_hits, total);
  return best;
}

double prefix_sharing_bound(const std::vector<TokenSequence>& requests) {
  std::vector<TokenSequence> sorted = requests;
  std::sort(sorted.begin(), sorted.end());
  std::int64_t distinct_prefixes = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    std::size_t lcp = 0;
    if (i > 0) {
      const auto& a = sorted[i - 1];
      const auto& b = sorted[i];
      while (lcp < a.size() && lcp < b.size() && a[lcp] == b[lcp]) {
        ++lcp;
      }
    }
    distinct_prefixes += static_cast<std::int64_t>(sorted[i].size() - lcp);
  }
  const std::int64_t total = total_tokens(requests);
  return ratio(total - distinct_prefixes, total);
}

double optimal_hit_rate(const std::vector<TokenSequence>& prompts, const std::vector<TokenSequence>& outputs) {
  if (prompts.size() != outputs.size()) {
    throw PreconditionError("optimal_hit_rate: prompts and outputs differ in count");
  }
  // Trie of prompt prefixes keyed by (parent, token); node 0 is the root.
  std::map<std::pair<std::size_t, TokenId>, std::size_t> edges;
  std::vector<char> covered(1, 1);
  for (const auto& p : prompts) {
    std::size_t node = 0;
    for (TokenId t : p) {
      auto [it, fresh] = edges.try_emplace({node, t}, covered.size());
      if (fresh) {
        covered.push_back(0);
      }
      node = it->second;
    }
  }
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    std::size_t node = 0;
    std::size_t depth = 0;
    auto walk = [&](const TokenSequence& seq) {
      for (TokenId t : seq) {
        const auto it = edges.find({node, t});
        if (it == edges.end()) {
          return false;
        }
        node = it->second;
        if (++depth > prompts[i].size()) {
          covered[node] = 1;
        }
      }
      return true;
    };
    if (walk(prompts[i])) {
      walk(outputs[i]);
    }
  }
  const auto computed = static_cast<std::int64_t>(std::count(covered.begin(), covered.end(), 0));
  const std::int64_t total = total_tokens(prompts);
  return ratio(total - computed, total);
}

double dfs_hit_rate(const std::vector<TokenSequence>& requests, std::int64_t capacity) {
  if (capacity < max_length(requests)) {
    throw PreconditionError("capacity " + std::to_string(capacity) + " is below the longest request (" +
                            std::to_string(max_length(requests)) + " tokens)");
  }
  return prefix_sharing_bound(requests);
}

double scheduler_hit_rate(const std::vector<TokenSequence>& requests, std::int64_t capacity, SchedulePolicy policy,
                          std::int64_t max_running) {
  TokenId max_id = 0;
  for (const auto& r : requests) {
    for (auto t : r) {
      max_id = std::max(max_id, t);
    }
  }
  const std::int64_t merges = std::max<std::int64_t>(0, static_cast<std::int64_t>(max_id) - 255);
  auto vocab = std::make_shared<const Vocabulary>(Vocabulary::build(0, merges));
  SchedulerConfig cfg;
  cfg.pool_capacity = capacity;
  cfg.policy = policy;
  cfg.max_running = max_running;
  Scheduler s(vocab, cfg);
  for (const auto& r : requests) {
    RequestSpec spec;
    spec.prompt = r;
    s.submit(std::move(spec));
  }
  s.drain();
  return s.metrics().hit_rate();
}

nlohmann::json TheoremReport::to_json() const {
  return {{"workload_seed", workload_seed},
          {"capacity", capacity},
          {"precondition_met", precondition_met},
          {"brute_force", brute_force},
          {"closed_form", closed_form},
          {"scheduler_achieved", scheduler_achieved},
          {"batched_scheduler", batched_scheduler},
          {"best_order", best_order},
          {"holds", holds},
          {"detail", detail}};
}

TheoremReport verify_theorem_1(const std::vector<TokenSequence>& requests, std::int64_t capacity,
                               std::uint64_t workload_seed) {
  TheoremReport r;
  r.workload_seed = workload_seed;
  r.capacity = capacity > 0 ? capacity : max_length(requests);
  r.precondition_met = r.capacity >= max_length(requests);
  const auto bf = optimal_hit_rate_bruteforce(requests, r.capacity);
  r.brute_force = bf.best_rate;
  r.best_order = bf.best_order;
  r.closed_form = prefix_sharing_bound(requests);
  if (!r.precondition_met) {
    // The scheduler rejects requests larger than its pool, so only the
    // reference cache is run here.
    r.holds = true;
    r.detail = "capacity below the longest request; equality not asserted";
    return r;
  }
  r.scheduler_achieved = scheduler_hit_rate(requests, r.capacity, SchedulePolicy::kCacheAware, 1);
  r.batched_scheduler = scheduler_hit_rate(requests, r.capacity, SchedulePolicy::kCacheAware, 0);
  r.holds = r.brute_force == r.closed_form && r.scheduler_achieved == r.closed_form;
  if (!r.holds) {
    r.detail = "mismatch: brute force " + std::to_string(r.brute_force) + ", closed form " +
               std::to_string(r.closed_form) + ", scheduler " + std::to_string(r.scheduler_achieved);
  }
  return r;
}

std::vector<TokenSequence> random_prefix_workload(std::uint64_t seed, std::size_t max_requests, std::size_t max_len) {
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(rng.uniform(1, static_cast<std::int64_t>(max_requests)));
  std::vector<TokenSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    TokenSequence p;
    if (!out.empty() && rng.uniform(0, 3) != 0) {
      const auto& base = out[static_cast<std::size_t>(rng.uniform(0, static_cast<std::int64_t>(out.size()) - 1))];
      const auto cut = static_cast<std::size_t>(rng.uniform(0, static_cast<std::int64_t>(base.size())));
      p.assign(base.begin(), base.begin() + static_cast<std::ptrdiff_t>(cut));
    }
    const auto room = static_cast<std::int64_t>(max_len - p.size());
    const auto extra = rng.uniform(p.empty() ? 1 : 0, room);
    for (std::int64_t k = 0; k < extra; ++k) {
      p.push_back(static_cast<TokenId>(rng.uniform(0, 9)));
    }
    if (p.empty()) {
      p.push_back(static_cast<TokenId>(rng.uniform(0, 9)));
    }
    out.push_back(std::move(p));
  }
  return out;
}

DecodeResult naive_constrained_decode(const MockModel& model, std::string_view regex, const Vocabulary& vocab,
                                      std::int64_t max_tokens, std::uint64_t salt) {
  const Dfa dfa = compile_regex(regex);
  if (dfa.empty_language()) {
    throw DeadEndError("pattern accepts no string");
  }
  DecodeResult out;
  std::int32_t state = dfa.start;
  std::uint64_t h = initial_text_hash(salt);
  const std::size_t byte_budget = static_cast<std::size_t>(max_tokens) * vocab.max_piece_len();
  while (dfa.out_degree(state) > 0) {
    // Preferred continuation: greedy byte walk, end-of-sequence included
    // where the walk reaches an accepting state.
    std::string walk;
    std::int32_t cur = state;
    std::uint64_t wh = h;
    while (walk.size() < vocab.max_piece_len()) {
      int best = -1;
      std::uint64_t best_pref = 0;
      if (dfa.is_accepting(cur)) {
        best = MockModel::kEosSymbol;
        best_pref = model.byte_preference(wh, best, salt);
      }
      for (int b = 0; b < 256; ++b) {
        if (dfa.step(cur, static_cast<unsigned char>(b)) >= 0) {
          const auto pref = model.byte_preference(wh, b, salt);
          if (best < 0 || pref > best_pref) {
            best = b;
            best_pref = pref;
          }
        }
      }
      if (best == MockModel::kEosSymbol) {
        break;
      }
      walk.push_back(static_cast<char>(best));
      wh = MockModel::extend_text(wh, static_cast<unsigned char>(best));
      cur = dfa.step(cur, static_cast<unsigned char>(best));
    }
    ++out.forward_passes;
    if (walk.empty()) {
      break;
    }
    // Longest allowed piece along the walk, found by scanning the vocabulary.
    TokenId chosen = -1;
    std::size_t chosen_len = 0;
    for (std::size_t t = 0; t < vocab.size(); ++t) {
      const std::string& piece = vocab.piece(static_cast<TokenId>(t));
      if (piece.size() <= chosen_len || piece.size() > walk.size() || walk.compare(0, piece.size(), piece) != 0) {
        continue;
      }
      std::int32_t s = state;
      for (unsigned char c : piece) {
        s = s < 0 ? -1 : dfa.step(s, c);
      }
      if (s >= 0) {
        chosen = static_cast<TokenId>(t);
        chosen_len = piece.size();
      }
    }
    for (unsigned char c : vocab.piece(chosen)) {
      state = dfa.step(state, c);
      h = MockModel::extend_text(h, c);
    }
    out.text += vocab.piece(chosen);
    out.trace.push_back(chosen);
    if (out.text.size() > byte_budget) {
      throw BudgetExceededError("constrained output exceeds " + std::to_string(max_tokens) + " tokens");
    }
  }
  if (static_cast<std::int64_t>(vocab.encode(out.text).size()) > max_tokens) {
    throw BudgetExceededError("constrained output exceeds " + std::to_string(max_tokens) + " tokens");
  }
  return out;
}

}  // namespace radixlm
