#include "radixlm/scheduler.hpp"

#include <algorithm>
#include <cmath>

namespace radixlm {

SchedulePolicy parse_policy(const std::string& name) {
  if (name == "cache_aware" || name == "lpm") return SchedulePolicy::kCacheAware;
  if (name == "fcfs") return SchedulePolicy::kFcfs;
  if (name == "random") return SchedulePolicy::kRandom;
  throw ValidationError("unknown schedule policy '" + name + "'");
}

std::string policy_name(SchedulePolicy policy) {
  switch (policy) {
    case SchedulePolicy::kCacheAware: return "cache_aware";
    case SchedulePolicy::kFcfs: return "fcfs";
    case SchedulePolicy::kRandom: return "random";
  }
  return "unknown";
}

double SchedulerMetrics::hit_rate() const {
  if (total_prompt_tokens == 0) {
    throw PreconditionError("hit rate is undefined without prompt tokens");
  }
  return static_cast<double>(cached_prompt_tokens) / static_cast<double>(total_prompt_tokens);
}

nlohmann::json SchedulerMetrics::to_json() const {
  nlohmann::json j;
  j["cached_prompt_tokens"] = cached_prompt_tokens;
  j["total_prompt_tokens"] = total_prompt_tokens;
  j["hit_rate"] = total_prompt_tokens > 0 ? nlohmann::json(hit_rate()) : nlohmann::json(nullptr);
  j["prefill_compute"] = prefill_compute_tokens;
  j["decode_steps"] = decode_steps;
  j["finished_requests"] = finished_requests;
  j["steps"] = steps;
  j["simulated_time"] = simulated_time;
  j["evicted_tokens"] = evicted_tokens;
  j["peak_running"] = peak_running;
  return j;
}

struct Scheduler::Request {
  RequestId id = 0;
  RequestSpec spec;
  std::uint64_t arrival_seq = 0;
  std::int64_t arrival_time = 0;
  RadixNode* prefix_node = nullptr;
  std::int64_t prefix_len = 0;
  bool pinned = false;
  std::int64_t owned = 0;  // pool tokens held outside the tree
  TokenSequence produced;
  std::string text;
  std::uint64_t context = 0;
  std::int64_t passes = 0;
  std::unique_ptr<DecodeSession> session;
  bool finished = false;
  bool stop_hit = false;
  std::size_t stop_pos = 0;
  std::string error;
};

class Scheduler::TreeTimer {
 public:
  explicit TreeTimer(Scheduler& s) : s_(s), on_(s.config_.profile_tree_ops) {
    if (on_) {
      t0_ = std::chrono::steady_clock::now();
    }
  }
  ~TreeTimer() {
    if (on_) {
      s_.tree_seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }
  }

 private:
  Scheduler& s_;
  bool on_;
  std::chrono::steady_clock::time_point t0_;
};

Scheduler::Scheduler(std::shared_ptr<const Vocabulary> vocab, SchedulerConfig config)
    : vocab_(std::move(vocab)),
      config_(config),
      model_(config.model_seed, vocab_->size()),
      pool_(config.pool_capacity),
      constraints_(config.constraint_reuse),
      rng_(config.policy_seed) {
  if (config_.step_overhead < 0) {
    throw ValidationError("step_overhead must be non-negative");
  }
  if (config_.hit_cap < 0.0 || config_.hit_cap > 1.0) {
    throw ValidationError("hit_cap must lie in [0, 1]");
  }
}

Scheduler::~Scheduler() = default;

RequestId Scheduler::submit(RequestSpec spec) {
  if (spec.prompt.empty()) {
    throw ValidationError("request prompt must not be empty");
  }
  if (spec.max_new_tokens < 0) {
    throw ValidationError("max_new_tokens must be non-negative");
  }
  for (TokenId t : spec.prompt) {
    if (!vocab_->contains(t)) {
      throw UnknownTokenError("prompt contains unknown token id " + std::to_string(t));
    }
  }
  const auto footprint = static_cast<std::int64_t>(spec.prompt.size()) + spec.max_new_tokens;
  if (footprint > pool_.capacity()) {
    throw CapacityError("request needs " + std::to_string(footprint) + " tokens but the pool holds " +
                        std::to_string(pool_.capacity()));
  }
  auto req = std::make_unique<Request>();
  req->id = next_id_++;
  req->spec = std::move(spec);
  req->arrival_seq = next_arrival_++;
  req->arrival_time = metrics_.simulated_time;
  const RequestId id = req->id;
  waiting_.push_back(std::move(req));
  return id;
}

void Scheduler::advance_to(std::int64_t time) {
  if (idle() && time > metrics_.simulated_time) {
    metrics_.simulated_time = time;
  }
}

void Scheduler::match(Request& req) {
  if (!config_.cache_enabled) {
    req.prefix_node = tree_.root_handle();
    req.prefix_len = 0;
    return;
  }
  const PrefixMatch m = tree_.match_prefix(req.spec.prompt);
  RadixNode* node = m.node;
  std::int64_t usable = m.matched_len;
  if (!config_.tree_structure) {
    while (node != tree_.root_handle() && !node->terminal) {
      node = node->parent;
    }
    usable = tree_.depth_tokens(node);
  }
  if (config_.hit_cap < 1.0) {
    usable = static_cast<std::int64_t>(std::floor(config_.hit_cap * static_cast<double>(usable)));
    node = usable == 0 ? tree_.root_handle()
                       : tree_.match_prefix(std::span(req.spec.prompt).first(static_cast<std::size_t>(usable))).node;
  }
  req.prefix_node = node;
  req.prefix_len = usable;
}

std::int64_t Scheduler::reserved_tokens(const Request& req) const {
  const auto produced = req.session ? static_cast<std::int64_t>(req.session->trace().size())
                                    : static_cast<std::int64_t>(req.produced.size());
  return std::max<std::int64_t>(0, req.spec.max_new_tokens - produced);
}

std::int64_t Scheduler::outstanding_tokens() const {
  std::int64_t total = 0;
  for (const auto& r : running_) {
    total += reserved_tokens(*r);
  }
  return total;
}

namespace {

std::size_t common_prefix_len(const TokenSequence& a, const TokenSequence& b) {
  const std::size_t n = std::min(a.size(), b.size());
  std::size_t k = 0;
  while (k < n && a[k] == b[k]) {
    ++k;
  }
  return k;
}

}  // namespace

std::vector<RequestId> Scheduler::schedule_step() {
  std::vector<RequestId> ids;
  if (waiting_.empty()) {
    return ids;
  }
  std::vector<Request*> order;
  order.reserve(waiting_.size());
  {
    // One timed scope for the whole queue; a clock read per request costs
    // about as much as a short match.
    TreeTimer timer(*this);
    for (auto& r : waiting_) {
      match(*r);
      order.push_back(r.get());
    }
  }
  switch (config_.policy) {
    case SchedulePolicy::kCacheAware:
      std::stable_sort(order.begin(), order.end(),
                       [](const Request* a, const Request* b) { return a->prefix_len > b->prefix_len; });
      break;
    case SchedulePolicy::kRandom:
      rng_.shuffle(order);
      break;
    case SchedulePolicy::kFcfs:
      break;
  }

  const bool defer = config_.policy == SchedulePolicy::kCacheAware && config_.in_batch_deferral &&
                     config_.cache_enabled;
  std::int64_t budget = tree_.evictable_size() + pool_.available() - outstanding_tokens();
  std::vector<const TokenSequence*> admitted_prompts;
  for (Request* req : order) {
    if (config_.max_running > 0 &&
        static_cast<std::int64_t>(running_.size() + admitted_.size()) >= config_.max_running) {
      break;
    }
    if (defer) {
      std::size_t shared = 0;
      for (const auto* p : admitted_prompts) {
        shared = std::max(shared, common_prefix_len(*p, req->spec.prompt));
      }
      if (static_cast<std::int64_t>(shared) > req->prefix_len) {
        continue;
      }
    }
    const auto footprint =
        static_cast<std::int64_t>(req->spec.prompt.size()) - req->prefix_len + req->spec.max_new_tokens;
    std::int64_t delta = 0;
    {
      TreeTimer timer(*this);
      delta = tree_.inc_ref(req->prefix_node);
    }
    // Pinning the prefix removes its tokens from the evictable set, so the
    // pin cost counts against the budget alongside the footprint.
    if (footprint - delta <= budget) {
      budget -= footprint - delta;
      req->pinned = true;
      admitted_.push_back(req);
      admitted_prompts.push_back(&req->spec.prompt);
      ids.push_back(req->id);
    } else {
      TreeTimer timer(*this);
      tree_.dec_ref(req->prefix_node);
      if (config_.policy == SchedulePolicy::kFcfs) {
        break;
      }
    }
  }

  if (!ids.empty()) {
    std::deque<std::unique_ptr<Request>> still_waiting;
    for (auto& r : waiting_) {
      if (r->pinned) {
        metrics_.cached_prompt_tokens += r->prefix_len;
        metrics_.total_prompt_tokens += static_cast<std::int64_t>(r->spec.prompt.size());
        running_.push_back(std::move(r));
      } else {
        still_waiting.push_back(std::move(r));
      }
    }
    waiting_ = std::move(still_waiting);
  }
  return ids;
}

void Scheduler::allocate(std::int64_t tokens) {
  if (tokens <= 0) {
    return;
  }
  if (pool_.try_allocate(tokens)) {
    return;
  }
  const std::int64_t shortfall = tokens - pool_.available();
  std::int64_t evicted = 0;
  {
    TreeTimer timer(*this);
    evicted = tree_.evict(shortfall, [&](const EvictedLeaf& leaf) {
      if (on_evict_) {
        on_evict_(tree_.path_tokens(leaf.node), leaf.tokens);
      }
    });
  }
  metrics_.evicted_tokens += evicted;
  pool_.release(evicted);
  if (!pool_.try_allocate(tokens)) {
    throw CapacityError("pool exhausted: need " + std::to_string(tokens) + ", available " +
                        std::to_string(pool_.available()));
  }
}

void Scheduler::prefill(Request& req) {
  const auto& prompt = req.spec.prompt;
  const std::int64_t need = static_cast<std::int64_t>(prompt.size()) - req.prefix_len;
  allocate(need);
  req.owned += need;
  metrics_.prefill_compute_tokens += need;
  if (config_.cache_enabled) {
    TreeTimer timer(*this);
    RadixNode* full = nullptr;
    const std::int64_t added = tree_.insert(prompt, &full);
    if (on_insert_ && added > 0) {
      on_insert_(prompt);
    }
    // The prompt now lives in the tree; tokens another request inserted
    // first are duplicates and go back to the pool.
    req.owned -= need;
    pool_.release(need - added);
    tree_.inc_ref(full);
    tree_.dec_ref(req.prefix_node);
    req.prefix_node = full;
  }
  req.context = MockModel::context_of(prompt);
  if (!req.spec.regex.empty() && req.spec.max_new_tokens > 0) {
    try {
      DecodeOptions opts{config_.compressed_fsm, req.spec.max_new_tokens, hash_combine(req.spec.salt, req.context)};
      req.session = std::make_unique<DecodeSession>(constraints_.get(req.spec.regex, *vocab_), *vocab_, model_, opts);
    } catch (const Error& e) {
      req.error = e.what();
      req.finished = true;
    }
  }
}

bool Scheduler::decode_one(Request& req) {
  if (req.finished || req.spec.max_new_tokens == 0) {
    return true;
  }
  if (req.session) {
    DecodeSession::Step st;
    try {
      st = req.session->advance();
    } catch (const Error& e) {
      req.error = e.what();
      return true;
    }
    const std::int64_t sampled = st.model_pass && !st.finished ? 1 : 0;
    if (st.model_pass) {
      ++metrics_.decode_steps;
      ++req.passes;
    }
    metrics_.prefill_compute_tokens += std::max<std::int64_t>(0, st.new_tokens - sampled);
    const std::int64_t delta = st.new_tokens - st.dropped_tokens;
    if (delta > 0) {
      allocate(delta);
    } else {
      pool_.release(-delta);
    }
    req.owned += delta;
    return st.finished;
  }
  ++metrics_.decode_steps;
  ++req.passes;
  const TokenId tok = model_.next_token(req.context, req.spec.salt, config_.eos_probability);
  if (tok == model_.eos_id()) {
    return true;
  }
  allocate(1);
  req.owned += 1;
  req.produced.push_back(tok);
  req.context = MockModel::extend(req.context, tok);
  const std::string& piece = vocab_->piece(tok);
  req.text += piece;
  if (!req.spec.stop.empty()) {
    const std::size_t window = piece.size() + req.spec.stop.size() - 1;
    const std::size_t from = req.text.size() > window ? req.text.size() - window : 0;
    const auto pos = req.text.find(req.spec.stop, from);
    if (pos != std::string::npos) {
      req.stop_hit = true;
      req.stop_pos = pos;
      return true;
    }
  }
  return static_cast<std::int64_t>(req.produced.size()) >= req.spec.max_new_tokens;
}

Completion Scheduler::retire(Request& req) {
  Completion c;
  c.id = req.id;
  c.prompt_len = static_cast<std::int64_t>(req.spec.prompt.size());
  c.cached_len = req.prefix_len;
  c.arrival_time = req.arrival_time;
  c.finish_time = metrics_.simulated_time;
  c.forward_passes = req.passes;
  c.error = req.error;
  c.stop_hit = req.stop_hit;
  if (req.session) {
    c.output = req.session->trace();
    c.text = req.session->text();
  } else {
    c.output = req.produced;
    c.text = req.stop_hit ? req.text.substr(0, req.stop_pos) : req.text;
  }
  if (config_.cache_enabled) {
    TreeTimer timer(*this);
    if (!c.output.empty()) {
      auto full = [&] {
        TokenSequence t = req.spec.prompt;
        t.insert(t.end(), c.output.begin(), c.output.end());
        return t;
      };
      RadixNode* node = req.prefix_node;
      // A prompt leaf only this request holds grows in place with its output.
      const bool own_leaf = node != tree_.root_handle() && node->children.empty() && node->ref_count == 1 &&
                            req.prefix_len < static_cast<std::int64_t>(req.spec.prompt.size());
      const std::int64_t added = own_leaf ? tree_.extend_leaf(node, c.output) : tree_.insert(full());
      if (on_insert_ && added > 0) {
        on_insert_(full());
      }
      pool_.release(req.owned - added);
    } else {
      pool_.release(req.owned);
    }
    tree_.dec_ref(req.prefix_node);
  } else {
    pool_.release(req.owned);
  }
  req.owned = 0;
  req.pinned = false;
  ++metrics_.finished_requests;
  metrics_.latencies.push_back(c.finish_time - c.arrival_time);
  return c;
}

std::vector<Completion> Scheduler::run_step() {
  std::vector<Completion> done;
  if (running_.empty()) {
    admitted_.clear();
    return done;
  }
  const std::int64_t prefill_before = metrics_.prefill_compute_tokens;
  const std::int64_t decode_before = metrics_.decode_steps;
  for (Request* req : admitted_) {
    prefill(*req);
  }
  admitted_.clear();
  for (auto& req : running_) {
    if (decode_one(*req)) {
      req->finished = true;
    }
  }
  metrics_.simulated_time += config_.step_overhead +
      (metrics_.prefill_compute_tokens - prefill_before) + (metrics_.decode_steps - decode_before);
  ++metrics_.steps;
  metrics_.batch_sizes.push_back(static_cast<std::int64_t>(running_.size()));
  metrics_.peak_running = std::max(metrics_.peak_running, static_cast<std::int64_t>(running_.size()));

  std::vector<std::unique_ptr<Request>> still_running;
  for (auto& req : running_) {
    if (req->finished) {
      done.push_back(retire(*req));
    } else {
      still_running.push_back(std::move(req));
    }
  }
  running_ = std::move(still_running);
  return done;
}

std::vector<Completion> Scheduler::step() {
  schedule_step();
  return run_step();
}

std::vector<Completion> Scheduler::drain() {
  std::vector<Completion> all;
  while (!idle()) {
    auto done = step();
    all.insert(all.end(), std::make_move_iterator(done.begin()), std::make_move_iterator(done.end()));
  }
  return all;
}

std::vector<TokenSequence> Scheduler::pinned_paths() const {
  std::vector<TokenSequence> out;
  for (const auto& r : running_) {
    out.push_back(tree_.path_tokens(r->prefix_node));
  }
  return out;
}

void Scheduler::check_invariants() const {
  tree_.check_invariants();
  std::int64_t owned = 0;
  for (const auto& r : running_) {
    owned += r->owned;
  }
  if (pool_.in_use() != tree_.total_cached_tokens() + owned) {
    throw Error("pool in_use " + std::to_string(pool_.in_use()) + " != cached " +
                std::to_string(tree_.total_cached_tokens()) + " + owned " + std::to_string(owned));
  }
  if (pool_.in_use() > pool_.capacity()) {
    throw Error("pool over capacity");
  }
}

}  // namespace radixlm
