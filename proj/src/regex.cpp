#include "radixlm/regex.hpp"

#include <algorithm>
#include <deque>
#include <map>

namespace radixlm {

namespace {

ByteSet range_set(int lo, int hi) {
  ByteSet s;
  for (int c = lo; c <= hi; ++c) {
    s.set(static_cast<std::size_t>(c));
  }
  return s;
}

ByteSet digit_set() { return range_set('0', '9'); }

ByteSet word_set() { return range_set('a', 'z') | range_set('A', 'Z') | range_set('0', '9') | range_set('_', '_'); }

ByteSet space_set() {
  ByteSet s;
  for (char c : std::string_view(" \t\n\v\f\r")) {
    s.set(static_cast<unsigned char>(c));
  }
  return s;
}

ByteSet single(unsigned char c) {
  ByteSet s;
  s.set(c);
  return s;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

class Parser {
 public:
  explicit Parser(std::string_view p) : p_(p) {}

  RegexNode parse() {
    RegexNode node = alternation();
    if (pos_ < p_.size()) {
      throw RegexError("unmatched ')'", pos_);
    }
    return node;
  }

 private:
  bool at_end() const { return pos_ >= p_.size(); }
  char peek() const { return p_[pos_]; }

  RegexNode alternation() {
    RegexNode first = concatenation();
    if (at_end() || peek() != '|') {
      return first;
    }
    RegexNode alt;
    alt.kind = RegexNode::Kind::kAlternate;
    alt.children.push_back(std::move(first));
    while (!at_end() && peek() == '|') {
      ++pos_;
      alt.children.push_back(concatenation());
    }
    return alt;
  }

  RegexNode concatenation() {
    RegexNode cat;
    cat.kind = RegexNode::Kind::kConcat;
    while (!at_end() && peek() != '|' && peek() != ')') {
      cat.children.push_back(repetition());
    }
    if (cat.children.empty()) {
      return RegexNode{};
    }
    if (cat.children.size() == 1) {
      return std::move(cat.children.front());
    }
    return cat;
  }

  bool parse_int(int& out) {
    const std::size_t begin = pos_;
    long value = 0;
    while (!at_end() && peek() >= '0' && peek() <= '9') {
      value = value * 10 + (peek() - '0');
      if (value > 100000) {
        throw RegexError("repetition count too large", begin);
      }
      ++pos_;
    }
    out = static_cast<int>(value);
    return pos_ > begin;
  }

  RegexNode repetition() {
    RegexNode atom_node = atom();
    if (at_end()) {
      return atom_node;
    }
    const std::size_t qpos = pos_;
    int min = 0;
    int max = -1;
    const char c = peek();
    if (c == '*') {
      ++pos_;
    } else if (c == '+') {
      min = 1;
      ++pos_;
    } else if (c == '?') {
      max = 1;
      ++pos_;
    } else if (c == '{') {
      ++pos_;
      if (!parse_int(min)) {
        throw RegexError("expected repetition count", pos_);
      }
      if (!at_end() && peek() == ',') {
        ++pos_;
        if (!parse_int(max)) {
          max = -1;
        }
      } else {
        max = min;
      }
      if (at_end() || peek() != '}') {
        throw RegexError("expected '}'", pos_);
      }
      ++pos_;
      if (max >= 0 && max < min) {
        throw RegexError("repetition range out of order", qpos);
      }
    } else {
      return atom_node;
    }
    if (!at_end() && peek() == '?') {
      throw UnsupportedRegexError("lazy quantifiers are not supported", pos_);
    }
    if (!at_end() && (peek() == '*' || peek() == '+' || peek() == '{')) {
      throw RegexError("nothing to repeat", pos_);
    }
    RegexNode rep;
    rep.kind = RegexNode::Kind::kRepeat;
    rep.min = min;
    rep.max = max;
    rep.children.push_back(std::move(atom_node));
    return rep;
  }

  static RegexNode class_node(const ByteSet& s) {
    RegexNode n;
    n.kind = RegexNode::Kind::kClass;
    n.bytes = s;
    return n;
  }

  // Parses the escape after a backslash. Returns true and fills `set` for
  // class escapes; otherwise fills `byte`.
  bool escape(bool in_class, ByteSet& set, unsigned char& byte) {
    const std::size_t at = pos_ - 1;
    if (at_end()) {
      throw RegexError("trailing backslash", at);
    }
    const char c = p_[pos_++];
    switch (c) {
      case 'd': set = digit_set(); return true;
      case 'D': set = ~digit_set(); return true;
      case 'w': set = word_set(); return true;
      case 'W': set = ~word_set(); return true;
      case 's': set = space_set(); return true;
      case 'S': set = ~space_set(); return true;
      case 'n': byte = '\n'; return false;
      case 'r': byte = '\r'; return false;
      case 't': byte = '\t'; return false;
      case 'f': byte = '\f'; return false;
      case 'v': byte = '\v'; return false;
      case '0': byte = 0; return false;
      case 'x': {
        if (pos_ + 2 > p_.size() || hex_value(p_[pos_]) < 0 || hex_value(p_[pos_ + 1]) < 0) {
          throw RegexError("malformed \\x escape", at);
        }
        byte = static_cast<unsigned char>(hex_value(p_[pos_]) * 16 + hex_value(p_[pos_ + 1]));
        pos_ += 2;
        return false;
      }
      case 'b':
        if (in_class) {
          byte = '\b';
          return false;
        }
        throw UnsupportedRegexError("word-boundary assertions are not supported", at);
      case 'B':
        throw UnsupportedRegexError("word-boundary assertions are not supported", at);
      default:
        break;
    }
    if (c >= '1' && c <= '9') {
      throw UnsupportedRegexError("backreferences are not supported", at);
    }
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) {
      throw RegexError(std::string("unknown escape \\") + c, at);
    }
    byte = static_cast<unsigned char>(c);
    return false;
  }

  RegexNode bracket() {
    const std::size_t open = pos_ - 1;
    bool negate = false;
    if (!at_end() && peek() == '^') {
      negate = true;
      ++pos_;
    }
    ByteSet set;
    while (true) {
      if (at_end()) {
        throw RegexError("unterminated character class", open);
      }
      if (peek() == ']') {
        ++pos_;
        break;
      }
      ByteSet item_set;
      unsigned char lo = 0;
      bool is_set = false;
      char c = p_[pos_++];
      if (c == '\\') {
        is_set = escape(true, item_set, lo);
      } else {
        lo = static_cast<unsigned char>(c);
      }
      if (!is_set && pos_ + 1 < p_.size() && peek() == '-' && p_[pos_ + 1] != ']') {
        const std::size_t dash = pos_;
        ++pos_;
        unsigned char hi = 0;
        c = p_[pos_++];
        if (c == '\\') {
          ByteSet tmp;
          if (escape(true, tmp, hi)) {
            throw RegexError("class escape used as range bound", dash);
          }
        } else {
          hi = static_cast<unsigned char>(c);
        }
        if (hi < lo) {
          throw RegexError("character range out of order", dash);
        }
        set |= range_set(lo, hi);
      } else if (is_set) {
        set |= item_set;
      } else {
        set.set(lo);
      }
    }
    return class_node(negate ? ~set : set);
  }

  RegexNode atom() {
    const std::size_t at = pos_;
    const char c = p_[pos_++];
    switch (c) {
      case '(': {
        if (!at_end() && peek() == '?') {
          if (pos_ + 1 < p_.size() && p_[pos_ + 1] == ':') {
            pos_ += 2;
          } else {
            throw UnsupportedRegexError("lookaround and group flags are not supported", at);
          }
        }
        RegexNode inner = alternation();
        if (at_end() || peek() != ')') {
          throw RegexError("unmatched '('", at);
        }
        ++pos_;
        return inner;
      }
      case '[':
        return bracket();
      case '.': {
        ByteSet s;
        s.set();
        s.reset('\n');
        s.reset('\r');
        return class_node(s);
      }
      case '\\': {
        ByteSet s;
        unsigned char b = 0;
        if (escape(false, s, b)) {
          return class_node(s);
        }
        return class_node(single(b));
      }
      case '^':
      case '$':
        throw UnsupportedRegexError("anchors are not supported", at);
      case '*':
      case '+':
      case '?':
      case '{':
        throw RegexError("nothing to repeat", at);
      default:
        return class_node(single(static_cast<unsigned char>(c)));
    }
  }

  std::string_view p_;
  std::size_t pos_ = 0;
};

// Thompson NFA. A state has at most one byte transition (to `out` on any
// byte of classes[cls]) plus epsilon edges.
struct Nfa {
  struct State {
    std::int32_t cls = -1;
    std::int32_t out = -1;
    std::vector<std::int32_t> eps;
  };
  std::vector<State> states;
  std::vector<ByteSet> classes;
  std::size_t limit;

  std::int32_t add() {
    if (states.size() >= limit) {
      throw ValidationError("regex expands beyond the NFA state limit");
    }
    states.emplace_back();
    return static_cast<std::int32_t>(states.size() - 1);
  }

  struct Frag {
    std::int32_t in;
    std::int32_t out;
  };

  Frag build(const RegexNode& n) {
    switch (n.kind) {
      case RegexNode::Kind::kEmpty: {
        const auto s = add();
        return {s, s};
      }
      case RegexNode::Kind::kClass: {
        const auto s = add();
        const auto a = add();
        classes.push_back(n.bytes);
        states[s].cls = static_cast<std::int32_t>(classes.size() - 1);
        states[s].out = a;
        return {s, a};
      }
      case RegexNode::Kind::kConcat: {
        Frag f = build(n.children.front());
        for (std::size_t i = 1; i < n.children.size(); ++i) {
          const Frag g = build(n.children[i]);
          states[f.out].eps.push_back(g.in);
          f.out = g.out;
        }
        return f;
      }
      case RegexNode::Kind::kAlternate: {
        const auto s = add();
        const auto a = add();
        for (const auto& child : n.children) {
          const Frag g = build(child);
          states[s].eps.push_back(g.in);
          states[g.out].eps.push_back(a);
        }
        return {s, a};
      }
      case RegexNode::Kind::kRepeat: {
        const RegexNode& body = n.children.front();
        const auto s = add();
        Frag f{s, s};
        for (int i = 0; i < n.min; ++i) {
          const Frag g = build(body);
          states[f.out].eps.push_back(g.in);
          f.out = g.out;
        }
        if (n.max < 0) {
          const Frag g = build(body);
          const auto a = add();
          states[f.out].eps.push_back(g.in);
          states[f.out].eps.push_back(a);
          states[g.out].eps.push_back(g.in);
          states[g.out].eps.push_back(a);
          f.out = a;
        } else {
          for (int i = n.min; i < n.max; ++i) {
            const Frag g = build(body);
            const auto a = add();
            states[f.out].eps.push_back(g.in);
            states[f.out].eps.push_back(a);
            states[g.out].eps.push_back(a);
            f.out = a;
          }
        }
        return f;
      }
    }
    throw Error("unreachable regex node kind");
  }

  std::vector<std::int32_t> closure(std::vector<std::int32_t> seeds) const {
    std::vector<std::uint8_t> seen(states.size(), 0);
    std::vector<std::int32_t> stack;
    for (auto s : seeds) {
      if (!seen[s]) {
        seen[s] = 1;
        stack.push_back(s);
      }
    }
    std::vector<std::int32_t> out;
    while (!stack.empty()) {
      const auto s = stack.back();
      stack.pop_back();
      out.push_back(s);
      for (auto t : states[s].eps) {
        if (!seen[t]) {
          seen[t] = 1;
          stack.push_back(t);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }
};

std::array<std::int32_t, 256> no_transitions() {
  std::array<std::int32_t, 256> a;
  a.fill(-1);
  return a;
}

Dfa determinize(const Nfa& nfa, std::int32_t nfa_start, std::int32_t nfa_accept, std::size_t max_states) {
  Dfa dfa;
  std::map<std::vector<std::int32_t>, std::int32_t> ids;
  std::deque<std::vector<std::int32_t>> work;
  auto intern = [&](std::vector<std::int32_t> set) {
    auto [it, inserted] = ids.emplace(set, static_cast<std::int32_t>(dfa.next.size()));
    if (inserted) {
      if (dfa.next.size() >= max_states) {
        throw ValidationError("regex expands beyond the DFA state limit");
      }
      dfa.next.push_back(no_transitions());
      dfa.accepting.push_back(std::binary_search(set.begin(), set.end(), nfa_accept) ? 1 : 0);
      work.push_back(std::move(set));
    }
    return it->second;
  };
  dfa.start = intern(nfa.closure({nfa_start}));
  while (!work.empty()) {
    const std::vector<std::int32_t> set = std::move(work.front());
    work.pop_front();
    const std::int32_t id = ids.at(set);
    std::array<std::vector<std::int32_t>, 256> targets;
    for (auto s : set) {
      const auto& st = nfa.states[s];
      if (st.cls < 0) {
        continue;
      }
      const ByteSet& cls = nfa.classes[st.cls];
      for (int b = 0; b < 256; ++b) {
        if (cls.test(b)) {
          targets[b].push_back(st.out);
        }
      }
    }
    for (int b = 0; b < 256; ++b) {
      if (!targets[b].empty()) {
        const auto t = intern(nfa.closure(std::move(targets[b])));
        dfa.next[id][b] = t;
      }
    }
  }
  return dfa;
}

// Drops states that cannot reach acceptance. An empty language collapses to
// a single non-accepting start state.
Dfa prune(const Dfa& dfa) {
  const std::size_t n = dfa.size();
  std::vector<std::vector<std::int32_t>> reverse(n);
  for (std::size_t s = 0; s < n; ++s) {
    for (int b = 0; b < 256; ++b) {
      if (dfa.next[s][b] >= 0) {
        reverse[dfa.next[s][b]].push_back(static_cast<std::int32_t>(s));
      }
    }
  }
  std::vector<std::uint8_t> live(n, 0);
  std::vector<std::int32_t> stack;
  for (std::size_t s = 0; s < n; ++s) {
    if (dfa.accepting[s]) {
      live[s] = 1;
      stack.push_back(static_cast<std::int32_t>(s));
    }
  }
  while (!stack.empty()) {
    const auto s = stack.back();
    stack.pop_back();
    for (auto p : reverse[s]) {
      if (!live[p]) {
        live[p] = 1;
        stack.push_back(p);
      }
    }
  }
  Dfa out;
  if (!live[dfa.start]) {
    out.next.push_back(no_transitions());
    out.accepting.push_back(0);
    out.start = 0;
    return out;
  }
  out = dfa;
  for (std::size_t s = 0; s < n; ++s) {
    for (int b = 0; b < 256; ++b) {
      const auto t = out.next[s][b];
      if (t >= 0 && !live[t]) {
        out.next[s][b] = -1;
      }
    }
  }
  return out;
}

// Moore partition refinement followed by BFS renumbering from the start so
// that equal languages yield identical automata.
Dfa minimize(const Dfa& dfa) {
  const std::size_t n = dfa.size();
  std::vector<std::int32_t> cls(n);
  for (std::size_t s = 0; s < n; ++s) {
    cls[s] = dfa.accepting[s] ? 1 : 0;
  }
  std::size_t count = 0;
  while (true) {
    std::map<std::vector<std::int32_t>, std::int32_t> sigs;
    std::vector<std::int32_t> next_cls(n);
    for (std::size_t s = 0; s < n; ++s) {
      std::vector<std::int32_t> sig;
      sig.reserve(257);
      sig.push_back(cls[s]);
      for (int b = 0; b < 256; ++b) {
        const auto t = dfa.next[s][b];
        sig.push_back(t < 0 ? -1 : cls[t]);
      }
      next_cls[s] = sigs.emplace(std::move(sig), static_cast<std::int32_t>(sigs.size())).first->second;
    }
    cls = std::move(next_cls);
    if (sigs.size() == count) {
      break;
    }
    count = sigs.size();
  }

  std::vector<std::int32_t> rep(count, -1);
  for (std::size_t s = 0; s < n; ++s) {
    if (rep[cls[s]] < 0) {
      rep[cls[s]] = static_cast<std::int32_t>(s);
    }
  }
  std::vector<std::int32_t> order(count, -1);
  Dfa out;
  std::deque<std::int32_t> queue;
  auto visit = [&](std::int32_t c) {
    if (order[c] < 0) {
      order[c] = static_cast<std::int32_t>(out.next.size());
      out.next.push_back(no_transitions());
      out.accepting.push_back(dfa.accepting[rep[c]]);
      queue.push_back(c);
    }
    return order[c];
  };
  out.start = visit(cls[dfa.start]);
  while (!queue.empty()) {
    const auto c = queue.front();
    queue.pop_front();
    const auto id = order[c];
    for (int b = 0; b < 256; ++b) {
      const auto t = dfa.next[rep[c]][b];
      if (t >= 0) {
        out.next[id][b] = visit(cls[t]);
      }
    }
  }
  return out;
}

}  // namespace

RegexNode parse_regex(std::string_view pattern) { return Parser(pattern).parse(); }

std::size_t Dfa::out_degree(std::int32_t state) const {
  return static_cast<std::size_t>(std::count_if(next[state].begin(), next[state].end(), [](auto t) { return t >= 0; }));
}

std::size_t Dfa::transition_count() const {
  std::size_t total = 0;
  for (std::size_t s = 0; s < size(); ++s) {
    total += out_degree(static_cast<std::int32_t>(s));
  }
  return total;
}

bool Dfa::empty_language() const { return size() == 1 && !accepting[start] && out_degree(start) == 0; }

bool Dfa::accepts(std::string_view text) const {
  std::int32_t s = start;
  for (unsigned char c : text) {
    s = next[s][c];
    if (s < 0) {
      return false;
    }
  }
  return accepting[s] != 0;
}

Dfa compile_regex(std::string_view pattern, const RegexLimits& limits) {
  const RegexNode ast = parse_regex(pattern);
  Nfa nfa;
  nfa.limit = limits.max_nfa_states;
  const Nfa::Frag f = nfa.build(ast);
  const Dfa raw = determinize(nfa, f.in, f.out, limits.max_dfa_states);
  return minimize(prune(raw));
}

}  // namespace radixlm
