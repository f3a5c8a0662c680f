#pragma once

#include <cstdint>
#include <span>

#include "radixlm/hash.hpp"
#include "radixlm/types.hpp"

namespace radixlm {

/// Deterministic stand-in for a language model. Every output is a hash of the
/// model seed, a caller-supplied salt and the context.
///
/// Contexts are tracked as rolling hashes so callers can extend them one
/// token (or byte) at a time.
class MockModel {
 public:
  /// `vocab_size` excludes the end-of-sequence id, which is `vocab_size`.
  MockModel(std::uint64_t seed, std::size_t vocab_size) : seed_(seed), vocab_size_(vocab_size) {}

  std::uint64_t seed() const { return seed_; }
  std::size_t vocab_size() const { return vocab_size_; }
  TokenId eos_id() const { return static_cast<TokenId>(vocab_size_); }

  static constexpr std::uint64_t kEmptyContext = 0x6a09e667f3bcc909ULL;
  static std::uint64_t extend(std::uint64_t context, TokenId token) {
    return hash_combine(context, static_cast<std::uint64_t>(static_cast<std::uint32_t>(token)));
  }
  static std::uint64_t context_of(std::span<const TokenId> tokens) {
    std::uint64_t h = kEmptyContext;
    for (TokenId t : tokens) {
      h = extend(h, t);
    }
    return h;
  }

  /// Logit of `token` after `context`, in [0, 1).
  double logit(std::uint64_t context, TokenId token, std::uint64_t salt) const {
    const std::uint64_t h = hash_combine(hash_combine(hash_combine(seed_, context), salt), static_cast<std::uint64_t>(token));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

  /// Next token of an unconstrained generation: argmax of logit() over the
  /// vocabulary (lowest id wins ties). End-of-sequence is emitted with
  /// probability `eos_probability`.
  TokenId next_token(std::uint64_t context, std::uint64_t salt, double eos_probability = 0.0) const {
    if (eos_probability > 0.0) {
      const std::uint64_t h = hash_combine(hash_combine(hash_combine(seed_ ^ 0x5bd1e995ULL, context), salt), 1);
      if (static_cast<double>(splitmix64(h) >> 11) * 0x1.0p-53 < eos_probability) {
        return eos_id();
      }
    }
    TokenId best = 0;
    double best_logit = -1.0;
    for (std::size_t t = 0; t < vocab_size_; ++t) {
      const double l = logit(context, static_cast<TokenId>(t), salt);
      if (l > best_logit) {
        best_logit = l;
        best = static_cast<TokenId>(t);
      }
    }
    return best;
  }

  /// Mean logit of `choice` continuing `prompt`; used by select.
  double score(std::span<const TokenId> prompt, std::span<const TokenId> choice, std::uint64_t salt = 0) const {
    if (choice.empty()) {
      return 0.0;
    }
    std::uint64_t ctx = context_of(prompt);
    double total = 0.0;
    for (TokenId t : choice) {
      total += logit(ctx, t, salt);
      ctx = extend(ctx, t);
    }
    return total / static_cast<double>(choice.size());
  }

  /// Text-level preference used by constrained decoding: how much the model
  /// wants `symbol` (a byte, or 256 for end-of-sequence) after a text whose
  /// rolling byte hash is `text_hash`.
  static constexpr int kEosSymbol = 256;
  static std::uint64_t extend_text(std::uint64_t text_hash, unsigned char byte) {
    return hash_combine(text_hash, static_cast<std::uint64_t>(byte) + 0x100);
  }
  std::uint64_t byte_preference(std::uint64_t text_hash, int symbol, std::uint64_t salt) const {
    return hash_combine(hash_combine(hash_combine(seed_ ^ 0xc2b2ae3d27d4eb4fULL, text_hash), salt),
                        static_cast<std::uint64_t>(symbol));
  }

 private:
  std::uint64_t seed_;
  std::size_t vocab_size_;
};

}  // namespace radixlm
