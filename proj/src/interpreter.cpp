#include <algorithm>
#include <map>
#include <unordered_map>

#include "radixlm/hash.hpp"
#include "radixlm/program.hpp"

namespace radixlm {

namespace {

struct Stream {
  enum class State { kReady, kWaitRequests, kWaitHint, kWaitChildren, kDone };

  std::size_t program = 0;
  int parent = -1;
  std::int64_t branch = 0;   // index among siblings
  std::int64_t width = 1;    // sibling count, for per-fork extends
  std::uint64_t key = 0;     // identifies the stream within its program
  const std::vector<Op>* body = nullptr;
  std::size_t pc = 0;
  std::string text;
  TokenSequence tokens;
  std::map<std::string, std::string> vars;
  std::map<std::string, std::string> own_vars;  // created in this stream
  State state = State::kReady;

  // Outstanding call.
  std::vector<RequestId> pending;
  std::vector<Completion> arrived;

  // Fork bookkeeping while children run.
  std::vector<int> children;
  std::size_t fork_text = 0;
  std::size_t fork_tokens = 0;
};

struct ProgramState {
  bool started = false;
  bool finished = false;
  std::int64_t outstanding = 0;
  int root = -1;
};

class Interpreter {
 public:
  Interpreter(const std::vector<Program>& programs, Runtime& rt, const InterpreterOptions& opts)
      : programs_(programs), rt_(rt), opts_(opts), state_(programs.size()), results_(programs.size()) {}

  std::vector<ProgramResult> run() {
    std::vector<std::size_t> order(programs_.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return programs_[a].arrival_time < programs_[b].arrival_time; });
    std::size_t next_start = 0;
    std::size_t finished = 0;
    while (finished < programs_.size()) {
      while (next_start < order.size() && programs_[order[next_start]].arrival_time <= rt_.now()) {
        start(order[next_start++]);
      }
      bool progressed = true;
      while (progressed) {
        progressed = false;
        for (std::size_t i = 0; i < streams_.size(); ++i) {
          progressed |= advance(static_cast<int>(i));
        }
      }
      finished = static_cast<std::size_t>(std::count_if(state_.begin(), state_.end(), [](const ProgramState& p) { return p.finished; }));
      if (finished == programs_.size()) {
        break;
      }
      if (rt_.idle()) {
        if (next_start < order.size()) {
          rt_.advance_to(programs_[order[next_start]].arrival_time);
          continue;
        }
        throw Error("interpreter stalled with no outstanding requests");
      }
      for (auto& c : rt_.step()) {
        deliver(std::move(c));
      }
    }
    return std::move(results_);
  }

 private:
  void start(std::size_t p) {
    state_[p].started = true;
    results_[p].start_time = rt_.now();
    Stream s;
    s.program = p;
    s.body = &programs_[p].ops;
    streams_.push_back(std::move(s));
    state_[p].root = static_cast<int>(streams_.size()) - 1;
  }

  void fail(std::size_t p, const std::string& msg) {
    if (state_[p].finished) {
      return;
    }
    state_[p].finished = true;
    results_[p].error = msg;
    results_[p].finish_time = rt_.now();
    for (auto& s : streams_) {
      if (s.program == p) {
        s.state = Stream::State::kDone;
      }
    }
  }

  bool can_submit(const Stream& s) const { return opts_.parallel || state_[s.program].outstanding == 0; }

  RequestId submit(Stream& s, RequestSpec spec, bool is_gen) {
    const RequestId id = rt_.submit(std::move(spec));
    owner_[id] = static_cast<int>(&s - streams_.data());
    s.pending.push_back(id);
    ++state_[s.program].outstanding;
    ++results_[s.program].requests;
    results_[s.program].gen_requests += is_gen ? 1 : 0;
    return id;
  }

  void deliver(Completion c) {
    auto it = owner_.find(c.id);
    if (it == owner_.end()) {
      return;
    }
    Stream& s = streams_[static_cast<std::size_t>(it->second)];
    owner_.erase(it);
    --state_[s.program].outstanding;
    if (s.state == Stream::State::kDone) {
      return;
    }
    if (!c.error.empty()) {
      fail(s.program, c.error);
      return;
    }
    s.arrived.push_back(std::move(c));
  }

  void append(Stream& s, const std::string& text, const TokenSequence& tokens) {
    s.text += text;
    s.tokens.insert(s.tokens.end(), tokens.begin(), tokens.end());
  }

  void define(Stream& s, const std::string& name, const std::string& value) {
    s.vars[name] = value;
    s.own_vars[name] = value;
  }

  // Runs the stream until it blocks; returns whether anything happened.
  bool advance(int idx) {
    Stream* s = &streams_[static_cast<std::size_t>(idx)];
    if (s->state == Stream::State::kDone) {
      return false;
    }
    bool progressed = false;
    try {
      if (s->state == Stream::State::kWaitRequests || s->state == Stream::State::kWaitHint) {
        if (s->arrived.size() < s->pending.size()) {
          return false;
        }
        if (s->state == Stream::State::kWaitHint) {
          clear_pending(*s);
          spawn_children(idx);
          s = &streams_[static_cast<std::size_t>(idx)];
        } else {
          finish_call(*s);
        }
        progressed = true;
      }
      if (s->state == Stream::State::kWaitChildren) {
        for (int c : s->children) {
          if (streams_[static_cast<std::size_t>(c)].state != Stream::State::kDone) {
            return progressed;
          }
        }
        join(*s);
        progressed = true;
      }
      while (s->state == Stream::State::kReady && s->pc < s->body->size()) {
        const Op& op = (*s->body)[s->pc];
        if (const auto* e = std::get_if<ExtendOp>(&op)) {
          std::string t;
          if (!e->var.empty()) {
            auto v = s->vars.find(e->var);
            if (v == s->vars.end()) {
              throw ProgramError("variable '" + e->var + "' is not defined");
            }
            t = v->second;
          } else {
            t = e->texts.size() == 1 ? e->texts[0] : e->texts.at(static_cast<std::size_t>(s->branch));
          }
          append(*s, t, rt_.vocab().encode(t));
          ++s->pc;
        } else if (const auto* im = std::get_if<ImageOp>(&op)) {
          append(*s, "<image:" + im->content_hash + ">", image_tokens(im->content_hash, opts_.image_tokens));
          ++s->pc;
        } else if (const auto* g = std::get_if<GenOp>(&op)) {
          if (!can_submit(*s)) {
            return progressed;
          }
          RequestSpec spec;
          spec.prompt = s->tokens;
          spec.max_new_tokens = g->max_new_tokens;
          spec.regex = g->regex;
          spec.stop = g->stop;
          spec.salt = g->sample ? hash_combine(programs_[s->program].seed, s->key) : 0;
          submit(*s, std::move(spec), true);
          s->state = Stream::State::kWaitRequests;
        } else if (const auto* sel = std::get_if<SelectOp>(&op)) {
          if (!can_submit(*s)) {
            return progressed;
          }
          for (const auto& choice : sel->choices) {
            RequestSpec spec;
            spec.prompt = s->tokens;
            const auto ct = rt_.vocab().encode(choice);
            spec.prompt.insert(spec.prompt.end(), ct.begin(), ct.end());
            submit(*s, std::move(spec), false);
          }
          s->state = Stream::State::kWaitRequests;
        } else {
          const ForkOp& f = *std::get<std::shared_ptr<ForkOp>>(op);
          if (opts_.fork_hints && f.n > 1 && !s->tokens.empty()) {
            if (!can_submit(*s)) {
              return progressed;
            }
            RequestSpec hint;
            hint.prompt = s->tokens;
            submit(*s, std::move(hint), false);
            s->state = Stream::State::kWaitHint;
          } else {
            spawn_children(idx);
            s = &streams_[static_cast<std::size_t>(idx)];
          }
        }
        progressed = true;
      }
      if (s->state == Stream::State::kReady && s->pc == s->body->size()) {
        s->state = Stream::State::kDone;
        progressed = true;
        if (s->parent < 0) {
          ProgramResult& r = results_[s->program];
          r.variables = s->vars;
          r.text = s->text;
          r.tokens = s->tokens;
          r.finish_time = rt_.now();
          state_[s->program].finished = true;
        }
      }
    } catch (const Error& e) {
      fail(s->program, e.what());
      return true;
    }
    return progressed;
  }

  void clear_pending(Stream& s) {
    s.pending.clear();
    s.arrived.clear();
  }

  void finish_call(Stream& s) {
    const Op& op = (*s.body)[s.pc];
    std::sort(s.arrived.begin(), s.arrived.end(), [](const Completion& a, const Completion& b) { return a.id < b.id; });
    if (const auto* g = std::get_if<GenOp>(&op)) {
      const Completion& c = s.arrived.front();
      // A stop string ends the value; the prompt continues from the cut text.
      append(s, c.text, c.stop_hit ? rt_.vocab().encode(c.text) : c.output);
      define(s, g->name, c.text);
    } else {
      const auto& sel = std::get<SelectOp>(op);
      std::size_t best = 0;
      double best_score = -1.0;
      for (std::size_t i = 0; i < sel.choices.size(); ++i) {
        const auto ct = rt_.vocab().encode(sel.choices[i]);
        const double sc = rt_.model().score(s.tokens, ct, 0);
        if (sc > best_score) {
          best = i;
          best_score = sc;
        }
      }
      append(s, sel.choices[best], rt_.vocab().encode(sel.choices[best]));
      define(s, sel.name, sel.choices[best]);
    }
    clear_pending(s);
    ++s.pc;
    s.state = Stream::State::kReady;
  }

  void spawn_children(int idx) {
    const Stream& parent = streams_[static_cast<std::size_t>(idx)];
    const ForkOp& f = *std::get<std::shared_ptr<ForkOp>>((*parent.body)[parent.pc]);
    std::vector<Stream> kids;
    for (std::int64_t i = 0; i < f.n; ++i) {
      Stream c;
      c.program = parent.program;
      c.parent = idx;
      c.branch = i;
      c.width = f.n;
      c.key = hash_combine(parent.key, static_cast<std::uint64_t>(i) + 1);
      c.body = &f.body;
      c.text = parent.text;
      c.tokens = parent.tokens;
      c.vars = parent.vars;
      kids.push_back(std::move(c));
    }
    std::vector<int> ids;
    for (auto& k : kids) {
      ids.push_back(static_cast<int>(streams_.size()));
      streams_.push_back(std::move(k));
    }
    Stream& p = streams_[static_cast<std::size_t>(idx)];
    p.children = std::move(ids);
    p.fork_text = p.text.size();
    p.fork_tokens = p.tokens.size();
    p.state = Stream::State::kWaitChildren;
  }

  void join(Stream& s) {
    const ForkOp& f = *std::get<std::shared_ptr<ForkOp>>((*s.body)[s.pc]);
    std::vector<std::int64_t> order = f.merge_order;
    if (order.empty()) {
      for (std::int64_t i = 0; i < f.n; ++i) {
        order.push_back(i);
      }
    }
    for (std::size_t i = 0; i < s.children.size(); ++i) {
      const Stream& c = streams_[static_cast<std::size_t>(s.children[i])];
      for (const auto& [name, value] : c.own_vars) {
        define(s, name + "." + std::to_string(i), value);
      }
    }
    if (f.merge_text) {
      for (auto i : order) {
        const Stream& c = streams_[static_cast<std::size_t>(s.children[static_cast<std::size_t>(i)])];
        const std::string text = c.text.substr(s.fork_text);
        const TokenSequence tokens(c.tokens.begin() + static_cast<std::ptrdiff_t>(s.fork_tokens), c.tokens.end());
        append(s, text, tokens);
      }
    }
    s.children.clear();
    ++s.pc;
    s.state = Stream::State::kReady;
  }

  const std::vector<Program>& programs_;
  Runtime& rt_;
  InterpreterOptions opts_;
  std::vector<ProgramState> state_;
  std::vector<ProgramResult> results_;
  std::vector<Stream> streams_;
  std::unordered_map<RequestId, int> owner_;
};

}  // namespace

std::vector<ProgramResult> run_programs(const std::vector<Program>& programs, Runtime& runtime,
                                        const InterpreterOptions& options) {
  for (const auto& p : programs) {
    p.validate();
  }
  return Interpreter(programs, runtime, options).run();
}

}  // namespace radixlm
