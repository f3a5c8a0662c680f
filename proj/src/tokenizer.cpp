#include "radixlm/tokenizer.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include <nlohmann/json.hpp>

#include "corpus.hpp"
#include "radixlm/hash.hpp"

namespace radixlm {

namespace {

std::vector<std::string> byte_pieces() {
  std::vector<std::string> pieces;
  pieces.reserve(256);
  for (int b = 0; b < 256; ++b) {
    pieces.emplace_back(1, static_cast<char>(b));
  }
  return pieces;
}

void merge_in_place(std::vector<TokenId>& seq, TokenId a, TokenId b, TokenId merged) {
  std::size_t out = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i + 1 < seq.size() && seq[i] == a && seq[i + 1] == b) {
      seq[out++] = merged;
      ++i;
    } else {
      seq[out++] = seq[i];
    }
  }
  seq.resize(out);
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> pieces) : pieces_(std::move(pieces)) {
  trie_.emplace_back();
  for (std::size_t id = 0; id < pieces_.size(); ++id) {
    const std::string& p = pieces_[id];
    std::int32_t node = 0;
    for (unsigned char c : p) {
      if (trie_[node].next[c] < 0) {
        trie_[node].next[c] = static_cast<std::int32_t>(trie_.size());
        trie_.emplace_back();
      }
      node = trie_[node].next[c];
    }
    trie_[node].token = static_cast<TokenId>(id);
    max_piece_len_ = std::max(max_piece_len_, p.size());
  }
}

Vocabulary Vocabulary::build(std::uint64_t seed, std::int64_t merge_count) {
  if (merge_count < 0) {
    throw ValidationError("merge_count must be non-negative");
  }
  std::vector<std::string> pieces = byte_pieces();
  std::unordered_set<std::string> known(pieces.begin(), pieces.end());

  const auto& corpus = detail::merge_corpus();
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<std::vector<TokenId>> seqs;
  for (std::size_t idx : order) {
    std::vector<TokenId> s;
    for (unsigned char c : corpus[idx]) {
      s.push_back(static_cast<TokenId>(c));
    }
    seqs.push_back(std::move(s));
  }

  std::int64_t added = 0;
  while (added < merge_count) {
    std::map<std::pair<TokenId, TokenId>, std::int64_t> counts;
    for (const auto& s : seqs) {
      for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        ++counts[{s[i], s[i + 1]}];
      }
    }
    const std::pair<TokenId, TokenId>* best = nullptr;
    std::int64_t best_count = 0;
    for (const auto& [pair, count] : counts) {
      if (known.contains(pieces[pair.first] + pieces[pair.second])) {
        continue;
      }
      const bool better =
          best == nullptr || count > best_count ||
          (count == best_count && std::tie(pieces[pair.first], pieces[pair.second]) <
                                      std::tie(pieces[best->first], pieces[best->second]));
      if (better) {
        best = &pair;
        best_count = count;
      }
    }
    if (best == nullptr) {
      break;
    }
    const auto merged = static_cast<TokenId>(pieces.size());
    const auto [a, b] = *best;
    pieces.push_back(pieces[a] + pieces[b]);
    known.insert(pieces.back());
    for (auto& s : seqs) {
      merge_in_place(s, a, b, merged);
    }
    ++added;
  }

  // Corpus exhausted: extend with concatenations in id order so the size
  // contract still holds.
  while (added < merge_count) {
    const std::size_t n = pieces.size();
    for (std::size_t i = 0; i < n && added < merge_count; ++i) {
      for (std::size_t j = 0; j < n && added < merge_count; ++j) {
        std::string cand = pieces[i] + pieces[j];
        if (known.insert(cand).second) {
          pieces.push_back(std::move(cand));
          ++added;
        }
      }
    }
  }
  return Vocabulary(std::move(pieces));
}

Vocabulary Vocabulary::from_pieces(std::vector<std::string> pieces) {
  if (pieces.size() < 256) {
    throw ValidationError("vocabulary must contain all 256 single-byte pieces");
  }
  std::unordered_set<std::string> seen;
  for (std::size_t id = 0; id < pieces.size(); ++id) {
    if (pieces[id].empty()) {
      throw ValidationError("empty piece at id " + std::to_string(id));
    }
    if (!seen.insert(pieces[id]).second) {
      throw ValidationError("duplicate piece at id " + std::to_string(id));
    }
  }
  for (int b = 0; b < 256; ++b) {
    if (!seen.contains(std::string(1, static_cast<char>(b)))) {
      throw ValidationError("missing single-byte piece " + std::to_string(b));
    }
  }
  return Vocabulary(std::move(pieces));
}

Vocabulary Vocabulary::from_json(std::string_view text) {
  const auto doc = nlohmann::json::parse(text);
  if (!doc.is_array()) {
    throw ValidationError("vocabulary json must be an array");
  }
  std::vector<std::string> pieces(doc.size());
  std::vector<bool> filled(doc.size(), false);
  for (const auto& entry : doc) {
    const auto id = entry.at("id").get<std::int64_t>();
    if (id < 0 || static_cast<std::size_t>(id) >= pieces.size() || filled[id]) {
      throw ValidationError("vocabulary ids must be dense and unique");
    }
    pieces[id] = base64_decode(entry.at("piece").get<std::string>());
    filled[id] = true;
  }
  return from_pieces(std::move(pieces));
}

std::string Vocabulary::to_json() const {
  nlohmann::json doc = nlohmann::json::array();
  for (std::size_t id = 0; id < pieces_.size(); ++id) {
    doc.push_back({{"id", id}, {"piece", base64_encode(pieces_[id])}});
  }
  return doc.dump();
}

const std::string& Vocabulary::piece(TokenId id) const {
  if (!contains(id)) {
    throw UnknownTokenError("unknown token id " + std::to_string(id));
  }
  return pieces_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::find(std::string_view piece) const {
  std::int32_t node = 0;
  for (unsigned char c : piece) {
    node = trie_[node].next[c];
    if (node < 0) {
      return -1;
    }
  }
  return piece.empty() ? -1 : trie_[node].token;
}

std::size_t Vocabulary::longest_match(std::string_view text, TokenId* id) const {
  std::int32_t node = 0;
  std::size_t best_len = 0;
  TokenId best = -1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    node = trie_[node].next[static_cast<unsigned char>(text[i])];
    if (node < 0) {
      break;
    }
    if (trie_[node].token >= 0) {
      best_len = i + 1;
      best = trie_[node].token;
    }
  }
  if (id != nullptr) {
    *id = best;
  }
  return best_len;
}

TokenSequence Vocabulary::encode(std::string_view text) const {
  TokenSequence out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    TokenId id = -1;
    const std::size_t len = longest_match(text.substr(pos), &id);
    out.push_back(id);
    pos += len;
  }
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> tokens) const {
  std::string out;
  for (TokenId t : tokens) {
    out += piece(t);
  }
  return out;
}

std::size_t retokenize_tail(const Vocabulary& vocab, std::string_view text, std::size_t previous_len,
                            TokenSequence& previous) {
  const std::size_t max_len = vocab.max_piece_len();
  std::size_t keep = 0;
  std::size_t start = 0;
  // A token starting at `start` is unaffected if every candidate piece at
  // that position lies inside the old text.
  while (keep < previous.size()) {
    if (start + max_len > previous_len) {
      break;
    }
    start += vocab.piece(previous[keep]).size();
    ++keep;
  }
  const TokenSequence old_tail(previous.begin() + static_cast<std::ptrdiff_t>(keep), previous.end());
  const TokenSequence tail = vocab.encode(text.substr(start));
  std::size_t same = 0;
  while (same < old_tail.size() && same < tail.size() && old_tail[same] == tail[same]) {
    ++same;
  }
  // Unchanged tokens are kept; anything after the first difference is stale.
  previous.resize(keep);
  previous.insert(previous.end(), tail.begin(), tail.end());
  return old_tail.size() - same;
}

namespace {
constexpr std::string_view kB64 = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8) | static_cast<unsigned char>(bytes[i + 2]);
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) {
    throw ValidationError("base64 length must be a multiple of 4");
  }
  std::string out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '=') {
      if (i + 2 < text.size()) {
        throw ValidationError("misplaced base64 padding");
      }
      break;
    }
    const auto pos = kB64.find(c);
    if (pos == std::string_view::npos) {
      throw ValidationError("invalid base64 character");
    }
    acc = (acc << 6) | static_cast<std::uint32_t>(pos);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out += static_cast<char>((acc >> bits) & 0xff);
    }
  }
  return out;
}

}  // namespace radixlm
