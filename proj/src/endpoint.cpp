#include "radixlm/endpoint.hpp"

#include "radixlm/hash.hpp"

namespace radixlm {

EndpointModel::EndpointModel(const Vocabulary& vocab, std::uint64_t seed, double input_price, double output_price)
    : vocab_(&vocab), seed_(seed), input_price_(input_price), output_price_(output_price) {}

char EndpointModel::next_byte(std::string_view text) const {
  const std::size_t d = document_.size();
  for (std::size_t k = std::min(text.size(), d > 0 ? d - 1 : 0); k >= 1; --k) {
    const std::string_view suffix = text.substr(text.size() - k);
    for (std::size_t pos = document_.find(suffix); pos != std::string::npos; pos = document_.find(suffix, pos + 1)) {
      if (pos + k < d) {
        return document_[pos + k];
      }
    }
  }
  const std::string_view tail = text.substr(text.size() > 16 ? text.size() - 16 : 0);
  const std::uint64_t h = hash_combine(seed_, hash_bytes(tail));
  if (h % 29 == 0) {
    return '\n';
  }
  if (h % 7 == 0) {
    return ' ';
  }
  return static_cast<char>('a' + (h >> 8) % 26);
}

std::string EndpointModel::generate(std::string_view prompt, std::int64_t max_bytes, std::string_view stop) {
  std::string text(prompt);
  std::string out;
  while (static_cast<std::int64_t>(out.size()) < max_bytes) {
    const char b = next_byte(text);
    text.push_back(b);
    out.push_back(b);
    if (!stop.empty() && out.size() >= stop.size() && out.compare(out.size() - stop.size(), stop.size(), stop) == 0) {
      break;
    }
  }
  calls_.push_back({static_cast<std::int64_t>(vocab_->encode(prompt).size()),
                    static_cast<std::int64_t>(vocab_->encode(out).size())});
  if (!stop.empty() && out.size() >= stop.size() && out.compare(out.size() - stop.size(), stop.size(), stop) == 0) {
    out.resize(out.size() - stop.size());
  }
  return out;
}

std::int64_t EndpointModel::input_tokens() const {
  std::int64_t n = 0;
  for (const auto& c : calls_) {
    n += c.input_tokens;
  }
  return n;
}

std::int64_t EndpointModel::output_tokens() const {
  std::int64_t n = 0;
  for (const auto& c : calls_) {
    n += c.output_tokens;
  }
  return n;
}

double EndpointModel::cost() const {
  return input_price_ * static_cast<double>(input_tokens()) + output_price_ * static_cast<double>(output_tokens());
}

namespace {

// Value a plain call would have returned, if `raw` (a continuation generated
// without a stop) determines it. Sets `rest` to what follows the value.
bool value_from(const std::string& raw, std::int64_t max_bytes, const std::string& stop, std::string& value,
                std::string& rest) {
  const auto m = static_cast<std::size_t>(max_bytes);
  if (!stop.empty()) {
    const std::size_t pos = raw.find(stop);
    if (pos != std::string::npos && pos + stop.size() <= m) {
      value = raw.substr(0, pos);
      rest = raw.substr(pos);
      return true;
    }
  }
  if (raw.size() >= m) {
    value = raw.substr(0, m);
    rest = raw.substr(m);
    return true;
  }
  return false;
}

}  // namespace

EndpointResult run_on_endpoint(const Program& program, EndpointModel& endpoint, const EndpointOptions& options) {
  program.validate();
  EndpointResult r;
  std::string surplus;
  for (const auto& op : program.ops) {
    if (const auto* e = std::get_if<ExtendOp>(&op)) {
      std::string t;
      if (!e->var.empty()) {
        auto it = r.variables.find(e->var);
        if (it == r.variables.end()) {
          throw ProgramError("variable '" + e->var + "' is not defined");
        }
        t = it->second;
      } else {
        t = e->texts.front();
      }
      if (!surplus.empty()) {
        if (surplus.compare(0, t.size(), t) == 0 && surplus.size() >= t.size()) {
          surplus.erase(0, t.size());
        } else {
          surplus.clear();
          ++r.speculation_misses;
        }
      }
      r.text += t;
    } else if (const auto* g = std::get_if<GenOp>(&op)) {
      if (!g->regex.empty()) {
        throw ProgramError("endpoint programs cannot use regex constraints");
      }
      std::string value;
      std::string rest;
      if (!surplus.empty() && value_from(surplus, g->max_new_tokens, g->stop, value, rest)) {
        ++r.speculation_hits;
        surplus = std::move(rest);
      } else {
        if (!surplus.empty()) {
          ++r.speculation_misses;
        }
        surplus.clear();
        ++r.calls;
        if (options.speculative) {
          const std::string raw = endpoint.generate(r.text, g->max_new_tokens + options.speculation_tokens, "");
          if (!value_from(raw, g->max_new_tokens, g->stop, value, rest)) {
            throw Error("endpoint returned a short continuation");
          }
          surplus = std::move(rest);
        } else {
          value = endpoint.generate(r.text, g->max_new_tokens, g->stop);
        }
      }
      r.text += value;
      r.variables[g->name] = value;
    } else {
      throw ProgramError("endpoint programs support only extend and gen");
    }
  }
  return r;
}

}  // namespace radixlm
