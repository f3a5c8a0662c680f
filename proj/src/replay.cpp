#include "radixlm/replay.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>

#include "radixlm/scheduler.hpp"
#include "radixlm/workloads.hpp"

namespace radixlm {

using nlohmann::json;

json ReplayReport::to_json() const {
  json steps_json = json::array();
  for (const auto& s : steps) {
    steps_json.push_back({{"step", s.step},
                          {"ok", s.diff.empty()},
                          {"tree", s.actual_tree},
                          {"evicted", s.actual_evicted},
                          {"diff", s.diff}});
  }
  return {{"ok", ok}, {"steps", std::move(steps_json)}};
}

namespace {

class SegmentNamer {
 public:
  void bind(const std::string& name, TokenSequence tokens) { tokens_[name] = std::move(tokens); }
  const TokenSequence& tokens(const std::string& name) const {
    const auto it = tokens_.find(name);
    if (it == tokens_.end()) {
      throw ValidationError("replay: segment '" + name + "' is not defined yet");
    }
    return it->second;
  }
  void remember(std::vector<std::string> sequence) { sequences_.push_back(std::move(sequence)); }

  TokenSequence concat(const std::vector<std::string>& names) const {
    TokenSequence out;
    for (const auto& n : names) {
      const auto& t = tokens(n);
      out.insert(out.end(), t.begin(), t.end());
    }
    return out;
  }

  // Names the span [from, path.size()) of a root path by the segments of any
  // remembered sequence the path is a prefix of.
  std::string label(const TokenSequence& path, std::size_t from) const {
    for (const auto& seq : sequences_) {
      const TokenSequence full = concat(seq);
      if (full.size() < path.size() || !std::equal(path.begin(), path.end(), full.begin())) {
        continue;
      }
      std::string out;
      std::size_t start = 0;
      for (const auto& name : seq) {
        const std::size_t len = tokens(name).size();
        const std::size_t end = start + len;
        const std::size_t lo = std::max(start, from);
        const std::size_t hi = std::min(end, path.size());
        if (lo < hi) {
          if (!out.empty()) {
            out += ' ';
          }
          out += name;
          if (lo != start || hi != end) {
            out += "[" + std::to_string(lo - start) + ":" + std::to_string(hi - start) + "]";
          }
        }
        start = end;
      }
      return out;
    }
    return "?";
  }

 private:
  std::map<std::string, TokenSequence> tokens_;
  std::vector<std::vector<std::string>> sequences_;
};

json dump_shape(const RadixTree& tree, const RadixNode& node, const SegmentNamer& namer) {
  json out = json::object();
  for (const auto& [first, child] : node.children) {
    const TokenSequence path = tree.path_tokens(child.get());
    out[namer.label(path, path.size() - child->label.size())] = dump_shape(tree, *child, namer);
  }
  return out;
}

void diff_trees(const json& expected, const json& actual, const std::string& where, std::vector<std::string>& out) {
  for (const auto& [label, sub] : expected.items()) {
    if (!actual.contains(label)) {
      out.push_back("missing edge '" + label + "' under " + where);
    } else {
      diff_trees(sub, actual.at(label), where + "/" + label, out);
    }
  }
  for (const auto& [label, sub] : actual.items()) {
    if (!expected.contains(label)) {
      out.push_back("unexpected edge '" + label + "' under " + where);
    }
  }
}

}  // namespace

ReplayReport replay_tree_trace(const json& golden) {
  const json vocab_cfg = golden.value("vocab", json::object());
  auto vocab = std::make_shared<const Vocabulary>(
      Vocabulary::build(vocab_cfg.value("seed", std::uint64_t{0}), vocab_cfg.value("merges", std::int64_t{128})));
  TextSource src(exact_alphabet(*vocab), golden.value("text_seed", std::uint64_t{0}));

  SegmentNamer namer;
  std::size_t tag = 0;
  for (const auto& [name, len] : golden.at("segments").items()) {
    namer.bind(name, vocab->encode(src.tagged(tag++, len.get<std::int64_t>())));
  }

  SchedulerConfig config;
  config.pool_capacity = golden.at("capacity").get<std::int64_t>();
  config.model_seed = golden.value("model_seed", std::uint64_t{0});
  Scheduler sched(vocab, config);
  std::vector<std::pair<TokenSequence, std::int64_t>> evictions;
  sched.set_eviction_listener(
      [&](const TokenSequence& path, std::int64_t tokens) { evictions.emplace_back(path, tokens); });

  ReplayReport report;
  for (const auto& step : golden.at("steps")) {
    ReplayStep rs;
    rs.step = step.at("step").get<int>();
    evictions.clear();
    std::map<RequestId, std::pair<std::vector<std::string>, std::string>> pending;
    for (const auto& req : step.value("requests", json::array())) {
      const auto prompt = req.at("prompt").get<std::vector<std::string>>();
      RequestSpec spec;
      spec.prompt = namer.concat(prompt);
      spec.max_new_tokens = req.value("max_new_tokens", std::int64_t{0});
      spec.salt = req.value("salt", std::uint64_t{0});
      const RequestId id = sched.submit(std::move(spec));
      pending[id] = {prompt, req.value("output", std::string())};
    }
    for (const auto& c : sched.drain()) {
      auto& [prompt, output] = pending.at(c.id);
      std::vector<std::string> seq = prompt;
      if (!output.empty()) {
        namer.bind(output, c.output);
        seq.push_back(output);
      }
      namer.remember(std::move(seq));
    }
    for (const auto& [path, tokens] : evictions) {
      rs.actual_evicted.push_back(namer.label(path, path.size() - static_cast<std::size_t>(tokens)));
    }
    rs.actual_tree = dump_shape(sched.tree(), sched.tree().root(), namer);
    rs.expected_tree = step.value("tree", json::object());
    rs.expected_evicted = step.value("evicted", std::vector<std::string>{});

    diff_trees(rs.expected_tree, rs.actual_tree, "root", rs.diff);
    auto exp = rs.expected_evicted;
    auto act = rs.actual_evicted;
    std::sort(exp.begin(), exp.end());
    std::sort(act.begin(), act.end());
    if (exp != act) {
      std::string e;
      std::string a;
      for (const auto& s : exp) e += "'" + s + "' ";
      for (const auto& s : act) a += "'" + s + "' ";
      rs.diff.push_back("evicted: expected " + (e.empty() ? "none " : e) + "got " + (a.empty() ? "none" : a));
    }
    report.ok = report.ok && rs.diff.empty();
    report.steps.push_back(std::move(rs));
  }
  return report;
}

ReplayReport replay_tree_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open golden trace '" + path + "'");
  }
  json golden;
  try {
    golden = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("golden trace '" + path + "' is not valid JSON: " + e.what());
  }
  return replay_tree_trace(golden);
}

}  // namespace radixlm
