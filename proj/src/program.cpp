#include "radixlm/program.hpp"

#include <algorithm>
#include <set>

#include "radixlm/hash.hpp"
#include "radixlm/regex.hpp"

namespace radixlm {

namespace {

using nlohmann::json;

Op parse_op(const json& j) {
  const std::string kind = j.at("op").get<std::string>();
  if (kind == "extend") {
    ExtendOp op;
    if (j.contains("var")) {
      op.var = j.at("var").get<std::string>();
    } else if (j.at("text").is_array()) {
      op.texts = j.at("text").get<std::vector<std::string>>();
    } else {
      op.texts = {j.at("text").get<std::string>()};
    }
    return op;
  }
  if (kind == "gen") {
    GenOp op;
    op.name = j.at("name").get<std::string>();
    op.max_new_tokens = j.value("max_new_tokens", op.max_new_tokens);
    op.regex = j.value("regex", "");
    op.stop = j.value("stop", "");
    op.sample = j.value("sample", false);
    return op;
  }
  if (kind == "select") {
    return SelectOp{j.at("name").get<std::string>(), j.at("choices").get<std::vector<std::string>>()};
  }
  if (kind == "image") {
    return ImageOp{j.at("hash").get<std::string>()};
  }
  throw ProgramError("unknown op '" + kind + "'");
}

std::vector<Op> parse_ops(const json& arr) {
  std::vector<Op> root;
  std::vector<std::pair<std::vector<Op>*, std::shared_ptr<ForkOp>>> stack;
  std::vector<Op>* cur = &root;
  for (const auto& j : arr) {
    const std::string kind = j.at("op").get<std::string>();
    if (kind == "fork") {
      auto f = std::make_shared<ForkOp>();
      f->n = j.at("n").get<std::int64_t>();
      cur->push_back(f);
      stack.emplace_back(cur, f);
      cur = &f->body;
    } else if (kind == "join") {
      if (stack.empty()) {
        throw ProgramError("join without a matching fork");
      }
      auto f = stack.back().second;
      f->merge_order = j.value("order", std::vector<std::int64_t>{});
      f->merge_text = j.value("merge", std::string("text")) == "text";
      cur = stack.back().first;
      stack.pop_back();
    } else {
      cur->push_back(parse_op(j));
    }
  }
  if (!stack.empty()) {
    throw ProgramError("fork without a matching join");
  }
  return root;
}

void dump_ops(const std::vector<Op>& ops, json& out) {
  for (const auto& op : ops) {
    if (const auto* e = std::get_if<ExtendOp>(&op)) {
      if (!e->var.empty()) {
        out.push_back({{"op", "extend"}, {"var", e->var}});
      } else if (e->texts.size() == 1) {
        out.push_back({{"op", "extend"}, {"text", e->texts[0]}});
      } else {
        out.push_back({{"op", "extend"}, {"text", e->texts}});
      }
    } else if (const auto* g = std::get_if<GenOp>(&op)) {
      json r = {{"op", "gen"}, {"name", g->name}, {"max_new_tokens", g->max_new_tokens}};
      if (!g->regex.empty()) r["regex"] = g->regex;
      if (!g->stop.empty()) r["stop"] = g->stop;
      if (g->sample) r["sample"] = true;
      out.push_back(std::move(r));
    } else if (const auto* s = std::get_if<SelectOp>(&op)) {
      out.push_back({{"op", "select"}, {"name", s->name}, {"choices", s->choices}});
    } else if (const auto* im = std::get_if<ImageOp>(&op)) {
      out.push_back({{"op", "image"}, {"hash", im->content_hash}});
    } else {
      const auto& f = *std::get<std::shared_ptr<ForkOp>>(op);
      out.push_back({{"op", "fork"}, {"n", f.n}});
      dump_ops(f.body, out);
      json join = {{"op", "join"}};
      if (!f.merge_order.empty()) join["order"] = f.merge_order;
      if (!f.merge_text) join["merge"] = "vars";
      out.push_back(std::move(join));
    }
  }
}

std::int64_t count_gens(const std::vector<Op>& ops) {
  std::int64_t n = 0;
  for (const auto& op : ops) {
    if (std::holds_alternative<GenOp>(op)) {
      ++n;
    } else if (const auto* f = std::get_if<std::shared_ptr<ForkOp>>(&op)) {
      n += (*f)->n * count_gens((*f)->body);
    }
  }
  return n;
}

// Names a stream running `ops` defines, including names exported by nested joins.
std::vector<std::string> defined_names(const std::vector<Op>& ops) {
  std::vector<std::string> out;
  for (const auto& op : ops) {
    if (const auto* g = std::get_if<GenOp>(&op)) {
      out.push_back(g->name);
    } else if (const auto* s = std::get_if<SelectOp>(&op)) {
      out.push_back(s->name);
    } else if (const auto* f = std::get_if<std::shared_ptr<ForkOp>>(&op)) {
      const auto inner = defined_names((*f)->body);
      for (std::int64_t i = 0; i < (*f)->n; ++i) {
        for (const auto& name : inner) {
          out.push_back(name + "." + std::to_string(i));
        }
      }
    }
  }
  return out;
}

void validate_ops(const std::vector<Op>& ops, std::set<std::string> names, std::int64_t width) {
  auto define = [&](const std::string& name) {
    if (name.empty()) {
      throw ProgramError("variable name must not be empty");
    }
    if (!names.insert(name).second) {
      throw ProgramError("variable '" + name + "' defined twice in one stream");
    }
  };
  for (const auto& op : ops) {
    if (const auto* e = std::get_if<ExtendOp>(&op)) {
      if (e->var.empty() && e->texts.size() != 1 && static_cast<std::int64_t>(e->texts.size()) != width) {
        throw ProgramError("per-fork extend has " + std::to_string(e->texts.size()) + " texts for " +
                           std::to_string(width) + " branches");
      }
    } else if (const auto* g = std::get_if<GenOp>(&op)) {
      define(g->name);
      if (g->max_new_tokens < 0) {
        throw ProgramError("gen '" + g->name + "' has negative max_new_tokens");
      }
      if (!g->regex.empty()) {
        parse_regex(g->regex);
      }
    } else if (const auto* s = std::get_if<SelectOp>(&op)) {
      define(s->name);
      if (s->choices.empty()) {
        throw ProgramError("select '" + s->name + "' has no choices");
      }
    } else if (const auto* f = std::get_if<std::shared_ptr<ForkOp>>(&op)) {
      const ForkOp& fork = **f;
      if (fork.n < 1) {
        throw ProgramError("fork needs n >= 1");
      }
      for (auto i : fork.merge_order) {
        if (i < 0 || i >= fork.n) {
          throw ProgramError("join order names branch " + std::to_string(i) + " of " + std::to_string(fork.n));
        }
      }
      validate_ops(fork.body, names, fork.n);
      const auto child = defined_names(fork.body);
      for (std::int64_t i = 0; i < fork.n; ++i) {
        for (const auto& name : child) {
          define(name + "." + std::to_string(i));
        }
      }
    }
  }
}

}  // namespace

Program Program::from_json(const json& j) {
  Program p;
  const json* ops = &j;
  if (j.is_object()) {
    const int version = j.value("version", kVersion);
    if (version != kVersion) {
      throw ProgramError("unsupported program version " + std::to_string(version));
    }
    ops = &j.at("ops");
    p.arrival_time = j.value("arrival_time", std::int64_t{0});
    p.seed = j.value("seed", std::uint64_t{0});
  }
  if (!ops->is_array()) {
    throw ProgramError("program ops must be an array");
  }
  try {
    p.ops = parse_ops(*ops);
  } catch (const json::exception& e) {
    throw ProgramError(std::string("malformed program: ") + e.what());
  }
  p.validate();
  return p;
}

json Program::to_json() const {
  json ops_json = json::array();
  dump_ops(ops, ops_json);
  return {{"version", kVersion}, {"arrival_time", arrival_time}, {"seed", seed}, {"ops", std::move(ops_json)}};
}

std::int64_t Program::gen_count() const { return count_gens(ops); }

void Program::validate() const { validate_ops(ops, {}, 1); }

TokenSequence image_tokens(const std::string& content_hash, std::size_t length) {
  TokenSequence out(length);
  std::uint64_t h = hash_bytes(content_hash);
  for (auto& t : out) {
    h = splitmix64(h);
    t = static_cast<TokenId>(h % 256);
  }
  return out;
}

}  // namespace radixlm
