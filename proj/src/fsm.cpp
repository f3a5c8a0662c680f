#include "radixlm/fsm.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>

namespace radixlm {

CompressedFsm::CompressedFsm(const Dfa& dfa)
    : start_(dfa.start),
      accepting_(dfa.accepting),
      junction_index_(dfa.size(), -1),
      position_(dfa.size()) {
  const auto n = static_cast<std::int32_t>(dfa.size());
  auto singular = [&](std::int32_t s) { return !dfa.is_accepting(s) && dfa.out_degree(s) == 1; };
  for (std::int32_t s = 0; s < n; ++s) {
    if (s == dfa.start || !singular(s)) {
      junction_index_[s] = static_cast<std::int32_t>(junctions_.size());
      junctions_.push_back(s);
    }
  }
  edges_.resize(junctions_.size());
  for (std::size_t j = 0; j < junctions_.size(); ++j) {
    const std::int32_t from = junctions_[j];
    for (int b = 0; b < 256; ++b) {
      std::int32_t cur = dfa.next[from][b];
      if (cur < 0) {
        continue;
      }
      Edge edge{std::string(1, static_cast<char>(b)), -1};
      const auto edge_id = static_cast<std::int32_t>(edges_[j].size());
      // Singular chains cannot cycle: a cycle of non-accepting single-exit
      // states never reaches acceptance and was pruned during compilation.
      while (junction_index_[cur] < 0) {
        if (position_[cur].junction < 0) {
          position_[cur] = {static_cast<std::int32_t>(j), edge_id, static_cast<std::int32_t>(edge.label.size())};
        }
        const auto& row = dfa.next[cur];
        const auto it = std::find_if(row.begin(), row.end(), [](auto t) { return t >= 0; });
        edge.label.push_back(static_cast<char>(it - row.begin()));
        cur = *it;
      }
      edge.target = cur;
      edges_[j].push_back(std::move(edge));
    }
  }
}

const std::vector<CompressedFsm::Edge>& CompressedFsm::edges(std::int32_t junction) const {
  const auto idx = junction_index_.at(junction);
  if (idx < 0) {
    throw PreconditionError("state " + std::to_string(junction) + " is not a junction");
  }
  return edges_[idx];
}

std::size_t CompressedFsm::edge_count() const {
  std::size_t total = 0;
  for (const auto& e : edges_) {
    total += e.size();
  }
  return total;
}

std::pair<std::string, std::int32_t> CompressedFsm::jump_forward(std::int32_t state) const {
  std::string forced;
  std::int32_t cur = state;
  if (junction_index_[cur] < 0) {
    const Position& pos = position_[cur];
    const Edge& e = edges_[pos.junction][pos.edge];
    forced.append(e.label, static_cast<std::size_t>(pos.offset));
    cur = e.target;
  }
  for (std::size_t guard = 0; guard <= junctions_.size(); ++guard) {
    const auto& out = edges_[junction_index_[cur]];
    if (accepting_[cur] || out.size() != 1) {
      break;
    }
    forced += out.front().label;
    cur = out.front().target;
  }
  return {forced, cur};
}

bool CompressedFsm::accepts(std::string_view text) const {
  std::int32_t cur = start_;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto& out = edges_[junction_index_[cur]];
    const auto it = std::find_if(out.begin(), out.end(), [&](const Edge& e) { return e.label.front() == text[i]; });
    if (it == out.end() || text.substr(i, it->label.size()) != it->label) {
      return false;
    }
    i += it->label.size();
    cur = it->target;
  }
  return accepting_[cur] != 0;
}

namespace {

std::string escape_label(std::string_view label) {
  std::string out;
  for (unsigned char c : label) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += static_cast<char>(c);
    } else if (c >= 0x20 && c < 0x7f) {
      out += static_cast<char>(c);
    } else {
      static constexpr char kHex[] = "0123456789abcdef";
      out += "\\\\x";
      out += kHex[c >> 4];
      out += kHex[c & 15];
    }
  }
  return out;
}

}  // namespace

std::string CompressedFsm::to_dot() const {
  std::ostringstream os;
  os << "digraph compressed_fsm {\n  rankdir=LR;\n  __start [shape=point];\n";
  for (auto s : junctions_) {
    os << "  s" << s << " [shape=" << (accepting_[s] ? "doublecircle" : "circle") << "];\n";
  }
  os << "  __start -> s" << start_ << ";\n";
  for (std::size_t j = 0; j < junctions_.size(); ++j) {
    for (const auto& e : edges_[j]) {
      os << "  s" << junctions_[j] << " -> s" << e.target << " [label=\"" << escape_label(e.label) << "\"];\n";
    }
  }
  os << "}\n";
  return os.str();
}

nlohmann::json CompressedFsm::to_json() const {
  nlohmann::json states = nlohmann::json::array();
  for (std::size_t j = 0; j < junctions_.size(); ++j) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : edges_[j]) {
      edges.push_back({{"label", base64_encode(e.label)}, {"text", escape_label(e.label)}, {"target", e.target}});
    }
    states.push_back({{"id", junctions_[j]}, {"accepting", accepting_[junctions_[j]] != 0}, {"edges", std::move(edges)}});
  }
  return {{"start", start_}, {"states", std::move(states)}};
}

MaskTable::MaskTable(const Dfa& dfa, const Vocabulary& vocab)
    : vocab_size_(vocab.size()), allowed_(dfa.size()), eos_(dfa.accepting) {
  const auto& trie = vocab.trie();
  std::vector<std::pair<std::int32_t, std::int32_t>> stack;
  for (std::size_t s = 0; s < dfa.size(); ++s) {
    auto& out = allowed_[s];
    stack.assign(1, {0, static_cast<std::int32_t>(s)});
    while (!stack.empty()) {
      const auto [node, state] = stack.back();
      stack.pop_back();
      for (int b = 0; b < 256; ++b) {
        const auto child = trie[node].next[b];
        const auto next = dfa.next[state][b];
        if (child < 0 || next < 0) {
          continue;
        }
        if (trie[child].token >= 0) {
          out.push_back(trie[child].token);
        }
        stack.emplace_back(child, next);
      }
    }
    std::sort(out.begin(), out.end());
  }
}

bool MaskTable::is_allowed(std::int32_t state, TokenId token) const {
  if (token == static_cast<TokenId>(vocab_size_)) {
    return eos_allowed(state);
  }
  const auto& a = allowed_[state];
  return std::binary_search(a.begin(), a.end(), token);
}

CompiledConstraint::CompiledConstraint(std::string pattern_in, Dfa dfa_in, const Vocabulary& vocab)
    : pattern(std::move(pattern_in)), dfa(std::move(dfa_in)), fsm(dfa), masks(dfa, vocab) {}

std::shared_ptr<const CompiledConstraint> CompiledConstraint::compile(std::string_view pattern,
                                                                      const Vocabulary& vocab) {
  return std::make_shared<const CompiledConstraint>(std::string(pattern), compile_regex(pattern), vocab);
}

std::shared_ptr<const CompiledConstraint> ConstraintCache::get(const std::string& pattern, const Vocabulary& vocab) {
  std::lock_guard lock(mu_);
  if (reuse_) {
    if (auto it = entries_.find(pattern); it != entries_.end()) {
      return it->second;
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto compiled = CompiledConstraint::compile(pattern, vocab);
  compile_seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ++compilations_;
  if (reuse_) {
    entries_.emplace(pattern, compiled);
  }
  return compiled;
}

std::uint64_t initial_text_hash(std::uint64_t salt) { return hash_combine(MockModel::kEmptyContext, salt); }

DecodeSession::DecodeSession(std::shared_ptr<const CompiledConstraint> constraint, const Vocabulary& vocab,
                             const MockModel& model, DecodeOptions options)
    : constraint_(std::move(constraint)),
      vocab_(&vocab),
      model_(&model),
      options_(options),
      state_(constraint_->dfa.start),
      text_hash_(initial_text_hash(options.salt)) {
  if (constraint_->dfa.empty_language()) {
    throw DeadEndError("pattern '" + constraint_->pattern + "' accepts no string");
  }
}

void DecodeSession::append_text(std::string_view s) {
  for (unsigned char c : s) {
    state_ = constraint_->dfa.step(state_, c);
    text_hash_ = MockModel::extend_text(text_hash_, c);
  }
  text_ += s;
  if (text_.size() > static_cast<std::size_t>(options_.max_tokens) * vocab_->max_piece_len()) {
    throw BudgetExceededError("constrained output exceeds " + std::to_string(options_.max_tokens) + " tokens");
  }
}

TokenSequence DecodeSession::retokenize_and_continue(std::string_view forced_text) {
  if (forced_text.empty()) {
    return {};
  }
  const std::size_t previous_len = text_.size();
  const std::size_t old_size = trace_.size();
  append_text(forced_text);
  const std::size_t replaced = retokenize_tail(*vocab_, text_, previous_len, trace_);
  const std::size_t kept = old_size - replaced;
  return TokenSequence(trace_.begin() + static_cast<std::ptrdiff_t>(kept), trace_.end());
}

TokenId DecodeSession::sample() const {
  const Dfa& dfa = constraint_->dfa;
  const std::size_t limit = vocab_->max_piece_len();
  std::string walk;
  std::int32_t cur = state_;
  std::uint64_t h = text_hash_;
  while (walk.size() < limit) {
    int best = -1;
    std::uint64_t best_pref = 0;
    if (dfa.is_accepting(cur)) {
      best = MockModel::kEosSymbol;
      best_pref = model_->byte_preference(h, best, options_.salt);
    }
    for (int b = 0; b < 256; ++b) {
      if (dfa.next[cur][b] < 0) {
        continue;
      }
      const std::uint64_t pref = model_->byte_preference(h, b, options_.salt);
      if (best < 0 || pref > best_pref) {
        best = b;
        best_pref = pref;
      }
    }
    if (best == MockModel::kEosSymbol) {
      break;
    }
    walk.push_back(static_cast<char>(best));
    h = MockModel::extend_text(h, static_cast<unsigned char>(best));
    cur = dfa.next[cur][best];
  }
  if (walk.empty()) {
    return vocab_->eos_id();
  }
  TokenId token = -1;
  vocab_->longest_match(walk, &token);
  return token;
}

void DecodeSession::finish() {
  finished_ = true;
  const std::size_t tokens = options_.compressed ? trace_.size() : vocab_->encode(text_).size();
  if (static_cast<std::int64_t>(tokens) > options_.max_tokens) {
    throw BudgetExceededError("constrained output needs " + std::to_string(tokens) + " tokens, budget is " +
                              std::to_string(options_.max_tokens));
  }
}

DecodeSession::Step DecodeSession::advance() {
  Step step;
  if (finished_) {
    step.finished = true;
    return step;
  }
  const Dfa& dfa = constraint_->dfa;
  if (options_.compressed) {
    auto [forced, target] = constraint_->fsm.jump_forward(state_);
    if (!forced.empty()) {
      const std::size_t before = trace_.size();
      const TokenSequence fed = retokenize_and_continue(forced);
      step.new_tokens += static_cast<std::int64_t>(fed.size());
      step.dropped_tokens += static_cast<std::int64_t>(before - (trace_.size() - fed.size()));
    }
  }
  // Only end-of-sequence is possible: terminate without consulting the model.
  if (dfa.out_degree(state_) == 0) {
    finish();
    step.finished = true;
    return step;
  }
  const TokenId token = sample();
  ++passes_;
  step.model_pass = true;
  if (token == vocab_->eos_id()) {
    finish();
    step.finished = true;
    return step;
  }
  if (options_.compressed) {
    const std::size_t before = trace_.size();
    const TokenSequence fed = retokenize_and_continue(vocab_->piece(token));
    step.new_tokens += static_cast<std::int64_t>(fed.size());
    step.dropped_tokens += static_cast<std::int64_t>(before - (trace_.size() - fed.size()));
  } else {
    append_text(vocab_->piece(token));
    trace_.push_back(token);
    step.new_tokens += 1;
  }
  return step;
}

DecodeResult constrained_decode(const MockModel& model, std::shared_ptr<const CompiledConstraint> constraint,
                                const Vocabulary& vocab, const DecodeOptions& options) {
  DecodeSession session(std::move(constraint), vocab, model, options);
  while (!session.finished()) {
    session.advance();
  }
  return {session.text(), session.forward_passes(), session.trace()};
}

DecodeResult constrained_decode(const MockModel& model, std::string_view regex, const Vocabulary& vocab,
                                std::int64_t max_tokens, bool compressed, std::uint64_t salt) {
  return constrained_decode(model, CompiledConstraint::compile(regex, vocab), vocab,
                            DecodeOptions{compressed, max_tokens, salt});
}

}  // namespace radixlm
