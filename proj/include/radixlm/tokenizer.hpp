#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "radixlm/types.hpp"

namespace radixlm {

/// Byte-level vocabulary with greedy longest-match segmentation.
///
/// Ids 0..255 are the single bytes; higher ids are merged pieces in the order
/// the merge procedure produced them. The id equal to size() is reserved as
/// end-of-sequence and has no piece.
class Vocabulary {
 public:
  /// Builds 256 byte pieces plus `merge_count` merged pieces. The merge
  /// procedure repeatedly joins the most frequent adjacent pair over the
  /// embedded corpus (ties broken by comparing the two pieces as byte
  /// strings); `seed` fixes the corpus passage order.
  static Vocabulary build(std::uint64_t seed, std::int64_t merge_count);

  /// Reconstructs a vocabulary from an explicit piece list (index == id).
  /// Throws ValidationError when byte coverage or uniqueness is violated.
  static Vocabulary from_pieces(std::vector<std::string> pieces);

  static Vocabulary from_json(std::string_view text);
  std::string to_json() const;

  std::size_t size() const { return pieces_.size(); }
  TokenId eos_id() const { return static_cast<TokenId>(pieces_.size()); }
  const std::string& piece(TokenId id) const;
  const std::vector<std::string>& pieces() const { return pieces_; }
  std::size_t max_piece_len() const { return max_piece_len_; }
  bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < pieces_.size(); }
  /// Returns -1 when `piece` is not in the vocabulary.
  TokenId find(std::string_view piece) const;

  TokenSequence encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> tokens) const;

  /// Length of the longest piece that is a prefix of `text` (0 only for empty text).
  std::size_t longest_match(std::string_view text, TokenId* id = nullptr) const;

  /// Trie over pieces; exposed so mask construction can walk pieces and a
  /// DFA side by side.
  struct TrieNode {
    std::array<std::int32_t, 256> next;
    TokenId token = -1;
    TrieNode() { next.fill(-1); }
  };
  const std::vector<TrieNode>& trie() const { return trie_; }

 private:
  explicit Vocabulary(std::vector<std::string> pieces);

  std::vector<std::string> pieces_;
  std::vector<TrieNode> trie_;
  std::size_t max_piece_len_ = 1;
};

/// Re-encodes `text` reusing the unaffected head of a previous segmentation.
///
/// `previous` must equal encode(text[0:previous_len]). Tokens that start at
/// least max_piece_len bytes before previous_len cannot change, so only the
/// tail is recomputed. Returns the number of trailing tokens of `previous`
/// that were replaced.
std::size_t retokenize_tail(const Vocabulary& vocab, std::string_view text, std::size_t previous_len,
                            TokenSequence& previous);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace radixlm
