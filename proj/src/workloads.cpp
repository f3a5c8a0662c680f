#include "radixlm/workloads.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>

namespace radixlm {

using nlohmann::json;

std::string exact_alphabet(const Vocabulary& vocab) {
  std::array<bool, 256> used{};
  for (const auto& p : vocab.pieces()) {
    if (p.size() > 1) {
      for (unsigned char c : p) {
        used[c] = true;
      }
    }
  }
  std::string out;
  for (int c = 0x21; c < 0x7f; ++c) {
    if (!used[static_cast<std::size_t>(c)]) {
      out.push_back(static_cast<char>(c));
    }
  }
  if (out.size() < 8) {
    throw ValidationError("vocabulary leaves fewer than 8 isolated printable bytes");
  }
  return out;
}

TextSource::TextSource(std::string alphabet, std::uint64_t seed) : alphabet_(std::move(alphabet)), rng_(seed) {
  if (alphabet_.empty()) {
    throw ValidationError("empty alphabet");
  }
}

std::string TextSource::text(std::int64_t n) {
  std::string s;
  s.reserve(static_cast<std::size_t>(std::max<std::int64_t>(n, 0)));
  for (std::int64_t i = 0; i < n; ++i) {
    s.push_back(alphabet_[rng_.next() % alphabet_.size()]);
  }
  return s;
}

std::string TextSource::tagged(std::size_t index, std::int64_t n) {
  if (n <= 0) {
    return {};
  }
  std::string s(1, alphabet_[index % alphabet_.size()]);
  return s + text(n - 1);
}

WorkloadSpec WorkloadSpec::from_json(const json& j) {
  if (!j.is_object()) {
    throw ValidationError("workload spec must be an object");
  }
  WorkloadSpec s;
  s.kind = j.at("kind").get<std::string>();
  s.seed = j.value("seed", std::uint64_t{0});
  s.scale = j.value("scale", 1.0);
  if (j.contains("params")) {
    s.params = j.at("params");
  }
  if (!s.params.is_object()) {
    throw ValidationError("workload params must be an object");
  }
  if (!(s.scale > 0.0)) {
    throw ValidationError("workload scale must be positive");
  }
  return s;
}

json WorkloadSpec::to_json() const { return {{"kind", kind}, {"seed", seed}, {"scale", scale}, {"params", params}}; }

std::vector<std::string> workload_kinds() {
  return {"few_shot",       "multi_turn_chat", "tree_of_thought", "self_consistency",
          "json_decode",    "branch_solve_merge", "random_prompts", "mixed_replay"};
}

namespace {

struct Range {
  std::int64_t lo = 1;
  std::int64_t hi = 1;
};

// Reads params with defaults and rejects keys nobody asked for.
class Params {
 public:
  Params(const WorkloadSpec& spec) : spec_(spec) {}

  std::int64_t count(const std::string& key, std::int64_t def) {
    seen_.insert(key);
    const std::int64_t v = spec_.params.value(key, def);
    if (v < 1) {
      throw ValidationError(spec_.kind + ": '" + key + "' must be at least 1");
    }
    return v;
  }

  // Token length range, scaled.
  Range length(const std::string& key, Range def) {
    seen_.insert(key);
    Range r = def;
    if (spec_.params.contains(key)) {
      const json& v = spec_.params.at(key);
      if (v.is_array()) {
        if (v.size() != 2) {
          throw ValidationError(spec_.kind + ": '" + key + "' range needs two bounds");
        }
        r = {v[0].get<std::int64_t>(), v[1].get<std::int64_t>()};
      } else {
        r = {v.get<std::int64_t>(), v.get<std::int64_t>()};
      }
      if (r.lo < 1 || r.hi < r.lo) {
        throw ValidationError(spec_.kind + ": '" + key + "' must be a positive length or range");
      }
    }
    return {scaled(r.lo), scaled(r.hi)};
  }

  std::string str(const std::string& key, const std::string& def) {
    seen_.insert(key);
    return spec_.params.value(key, def);
  }

  double real(const std::string& key, double def) {
    seen_.insert(key);
    const double v = spec_.params.value(key, def);
    if (v < 0.0) {
      throw ValidationError(spec_.kind + ": '" + key + "' must be non-negative");
    }
    return v;
  }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    return spec_.params.contains(key) ? &spec_.params.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : spec_.params.items()) {
      if (!seen_.count(key)) {
        throw ValidationError(spec_.kind + ": unknown param '" + key + "'");
      }
    }
  }

 private:
  std::int64_t scaled(std::int64_t n) const {
    return std::max<std::int64_t>(1, std::llround(static_cast<double>(n) * spec_.scale));
  }

  const WorkloadSpec& spec_;
  std::set<std::string> seen_;
};

std::int64_t draw(Rng& rng, Range r) { return rng.uniform(r.lo, r.hi); }

ExtendOp extend(std::string text) { return ExtendOp{{std::move(text)}, ""}; }

GenOp gen(std::string name, std::int64_t n, bool sample = false) {
  GenOp g;
  g.name = std::move(name);
  g.max_new_tokens = n;
  g.sample = sample;
  return g;
}

// Exponential gaps with the given mean, in simulated steps.
void assign_arrivals(std::vector<Program>& programs, double mean_gap, Rng& rng) {
  double t = 0.0;
  for (auto& p : programs) {
    p.arrival_time = static_cast<std::int64_t>(t);
    if (mean_gap > 0.0) {
      t += -mean_gap * std::log(1.0 - rng.unit());
    }
  }
}

std::vector<Program> few_shot(Params& p, TextSource& src, std::uint64_t seed) {
  const std::int64_t batches = p.count("batches", 1);
  const std::int64_t n = p.count("n", 8);
  const Range k = p.length("k", {128, 128});
  const Range q = p.length("q", {16, 16});
  const std::int64_t answer = p.count("answer", 1);
  const json* choices = p.raw("choices");
  const Range choice = p.length("choice", {8, 8});
  std::int64_t n_choices = 0;
  if (choices != nullptr) {
    n_choices = choices->get<std::int64_t>();
    if (n_choices < 0) {
      throw ValidationError("few_shot: 'choices' must be non-negative");
    }
  }
  std::vector<Program> out;
  std::size_t tag = 0;
  for (std::int64_t b = 0; b < batches; ++b) {
    const std::string examples = src.tagged(tag++, draw(src.rng(), k));
    for (std::int64_t i = 0; i < n; ++i) {
      Program prog;
      prog.seed = hash_combine(seed, out.size());
      prog.ops.push_back(extend(examples));
      prog.ops.push_back(extend(src.text(draw(src.rng(), q))));
      if (n_choices > 0) {
        SelectOp s;
        s.name = "answer";
        for (std::int64_t c = 0; c < n_choices; ++c) {
          s.choices.push_back(src.tagged(static_cast<std::size_t>(c), draw(src.rng(), choice)));
        }
        prog.ops.push_back(std::move(s));
      } else {
        prog.ops.push_back(gen("answer", answer));
      }
      out.push_back(std::move(prog));
    }
  }
  return out;
}

std::vector<Program> multi_turn_chat(Params& p, TextSource& src, std::uint64_t seed) {
  const std::int64_t sessions = p.count("sessions", 16);
  const std::int64_t turns = p.count("turns", 4);
  const std::string variant = p.str("variant", "short");
  if (variant != "short" && variant != "long") {
    throw ValidationError("multi_turn_chat: variant must be 'short' or 'long'");
  }
  const Range input = p.length("input", {256, 512});
  const Range output = p.length("output", variant == "short" ? Range{4, 8} : Range{256, 512});
  const json* sys = p.raw("system");
  const std::int64_t system_len = sys != nullptr ? sys->get<std::int64_t>() : 0;
  const std::string system = system_len > 0 ? src.tagged(0, system_len) : std::string();
  std::vector<Program> out;
  for (std::int64_t s = 0; s < sessions; ++s) {
    Program prog;
    prog.seed = hash_combine(seed, out.size());
    if (!system.empty()) {
      prog.ops.push_back(extend(system));
    }
    for (std::int64_t t = 0; t < turns; ++t) {
      const std::size_t tag = system.empty() && t == 0 ? static_cast<std::size_t>(s) : 0;
      std::string user = t == 0 && system.empty() ? src.tagged(tag, draw(src.rng(), input))
                                                   : src.text(draw(src.rng(), input));
      prog.ops.push_back(extend(std::move(user)));
      prog.ops.push_back(gen("reply" + std::to_string(t), draw(src.rng(), output)));
    }
    out.push_back(std::move(prog));
  }
  return out;
}

std::vector<Op> thought_level(std::int64_t level, std::int64_t depth, std::int64_t branching, Range step,
                              Range thought, TextSource& src) {
  std::vector<Op> ops;
  if (level == depth) {
    return ops;
  }
  auto f = std::make_shared<ForkOp>();
  f->n = branching;
  f->merge_text = false;
  ExtendOp prompt;
  for (std::int64_t i = 0; i < branching; ++i) {
    prompt.texts.push_back(src.tagged(static_cast<std::size_t>(i), draw(src.rng(), step)));
  }
  f->body.push_back(std::move(prompt));
  f->body.push_back(gen("thought" + std::to_string(level), draw(src.rng(), thought), true));
  for (auto& op : thought_level(level + 1, depth, branching, step, thought, src)) {
    f->body.push_back(std::move(op));
  }
  ops.push_back(std::move(f));
  return ops;
}

std::vector<Program> tree_of_thought(Params& p, TextSource& src, std::uint64_t seed) {
  const std::int64_t problems = p.count("problems", 4);
  const std::int64_t branching = p.count("branching", 3);
  const std::int64_t depth = p.count("depth", 3);
  const Range question = p.length("question", {128, 256});
  const Range step = p.length("step", {8, 16});
  const Range thought = p.length("thought", {32, 64});
  const Range answer = p.length("answer", {8, 16});
  std::vector<Program> out;
  for (std::int64_t i = 0; i < problems; ++i) {
    Program prog;
    prog.seed = hash_combine(seed, out.size());
    prog.ops.push_back(extend(src.tagged(static_cast<std::size_t>(i), draw(src.rng(), question))));
    for (auto& op : thought_level(0, depth, branching, step, thought, src)) {
      prog.ops.push_back(std::move(op));
    }
    prog.ops.push_back(extend(src.text(draw(src.rng(), step))));
    prog.ops.push_back(gen("answer", draw(src.rng(), answer)));
    out.push_back(std::move(prog));
  }
  return out;
}

std::vector<Program> self_consistency(Params& p, TextSource& src, std::uint64_t seed) {
  const std::int64_t questions = p.count("questions", 1);
  const std::int64_t samples = p.count("samples", 8);
  const Range question = p.length("question", {256, 256});
  const Range answer = p.length("answer", {16, 16});
  std::vector<Program> out;
  for (std::int64_t q = 0; q < questions; ++q) {
    const std::string text = src.tagged(static_cast<std::size_t>(q), draw(src.rng(), question));
    const std::int64_t len = draw(src.rng(), answer);
    for (std::int64_t s = 0; s < samples; ++s) {
      Program prog;
      prog.seed = hash_combine(seed, out.size());
      prog.ops.push_back(extend(text));
      prog.ops.push_back(gen("answer", len, true));
      out.push_back(std::move(prog));
    }
  }
  return out;
}

std::vector<Program> json_decode(Params& p, TextSource& src, std::uint64_t seed) {
  const std::int64_t requests = p.count("requests", 16);
  const Range instruction = p.length("instruction", {64, 64});
  const Range document = p.length("document", {64, 128});
  const std::int64_t max_new = p.count("max_new_tokens", 96);
  const std::string regex = p.str("regex", kJudgeRegex);
  const std::string shared = src.tagged(0, draw(src.rng(), instruction));
  std::vector<Program> out;
  for (std::int64_t i = 0; i < requests; ++i) {
    Program prog;
    prog.seed = hash_combine(seed, out.size());
    prog.ops.push_back(extend(shared));
    prog.ops.push_back(extend(src.text(draw(src.rng(), document))));
    GenOp g = gen("json", max_new);
    g.regex = regex;
    prog.ops.push_back(std::move(g));
    out.push_back(std::move(prog));
  }
  return out;
}

std::vector<Program> branch_solve_merge(Params& p, TextSource& src, std::uint64_t seed) {
  const std::int64_t programs = p.count("programs", 8);
  const std::int64_t dims = p.count("dimensions", 3);
  const Range header = p.length("header", {32, 32});
  const Range essay = p.length("essay", {128, 256});
  const Range dimension = p.length("dimension", {8, 8});
  const std::int64_t judgment = p.count("judgment", 16);
  const std::int64_t summary = p.count("summary", 16);
  const std::string head = src.tagged(0, draw(src.rng(), header));
  ExtendOp per_dim;
  for (std::int64_t d = 0; d < dims; ++d) {
    per_dim.texts.push_back(src.tagged(static_cast<std::size_t>(d), draw(src.rng(), dimension)));
  }
  const std::string summary_prompt = src.text(draw(src.rng(), dimension));
  const std::string grade_prompt = src.text(draw(src.rng(), dimension));
  std::vector<Program> out;
  for (std::int64_t i = 0; i < programs; ++i) {
    Program prog;
    prog.seed = hash_combine(seed, out.size());
    prog.ops.push_back(extend(head));
    prog.ops.push_back(extend(src.text(draw(src.rng(), essay))));
    auto f = std::make_shared<ForkOp>();
    f->n = dims;
    f->body.push_back(per_dim);
    f->body.push_back(gen("judgment", judgment));
    prog.ops.push_back(std::move(f));
    prog.ops.push_back(extend(summary_prompt));
    prog.ops.push_back(gen("summary", summary));
    prog.ops.push_back(extend(grade_prompt));
    GenOp grade = gen("grade", 4);
    grade.regex = "[ABCD][+-]?";
    prog.ops.push_back(std::move(grade));
    out.push_back(std::move(prog));
  }
  return out;
}

std::vector<Program> random_prompts(Params& p, TextSource& src, std::uint64_t seed) {
  const std::int64_t requests = p.count("requests", 1000);
  const Range prompt = p.length("prompt", {32, 128});
  const Range output = p.length("output", {1, 16});
  std::vector<Program> out;
  for (std::int64_t i = 0; i < requests; ++i) {
    Program prog;
    prog.seed = hash_combine(seed, out.size());
    prog.ops.push_back(extend(src.tagged(static_cast<std::size_t>(i), draw(src.rng(), prompt))));
    prog.ops.push_back(gen("out", draw(src.rng(), output)));
    out.push_back(std::move(prog));
  }
  return out;
}

std::vector<Program> mixed_replay(Params& p) {
  json trace;
  if (const json* inline_programs = p.raw("programs")) {
    trace = *inline_programs;
  }
  if (const json* path = p.raw("trace")) {
    std::ifstream in(path->get<std::string>());
    if (!in) {
      throw ValidationError("mixed_replay: cannot open trace '" + path->get<std::string>() + "'");
    }
    try {
      trace = json::parse(in);
    } catch (const json::exception& e) {
      throw ValidationError(std::string("mixed_replay: bad trace: ") + e.what());
    }
  }
  if (trace.is_object() && trace.contains("programs")) {
    trace = trace.at("programs");
  }
  if (!trace.is_array() || trace.empty()) {
    throw ValidationError("mixed_replay needs a non-empty program list ('trace' file or 'programs')");
  }
  std::vector<Program> out;
  for (const auto& j : trace) {
    out.push_back(Program::from_json(j));
  }
  return out;
}

}  // namespace

std::vector<Program> generate_workload(const WorkloadSpec& spec, const Vocabulary& vocab) {
  Params p(spec);
  TextSource src(exact_alphabet(vocab), hash_combine(spec.seed, 0x77));
  using Gen = std::function<std::vector<Program>(Params&, TextSource&, std::uint64_t)>;
  static const std::map<std::string, Gen> generators = {
      {"few_shot", few_shot},
      {"multi_turn_chat", multi_turn_chat},
      {"tree_of_thought", tree_of_thought},
      {"self_consistency", self_consistency},
      {"json_decode", json_decode},
      {"branch_solve_merge", branch_solve_merge},
      {"random_prompts", random_prompts},
      {"mixed_replay", [](Params& params, TextSource&, std::uint64_t) { return mixed_replay(params); }},
  };
  const auto it = generators.find(spec.kind);
  if (it == generators.end()) {
    throw ValidationError("unknown workload kind '" + spec.kind + "'");
  }
  const double gap = p.real("interarrival", 0.0);
  std::vector<Program> programs = it->second(p, src, spec.seed);
  p.finish();
  if (spec.kind != "mixed_replay" || gap > 0.0) {
    assign_arrivals(programs, gap, src.rng());
  }
  for (const auto& prog : programs) {
    prog.validate();
  }
  return programs;
}

}  // namespace radixlm
