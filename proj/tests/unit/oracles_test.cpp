#include "radixlm/oracles.hpp"

#include <gtest/gtest.h>

namespace radixlm {
namespace {

TokenSequence seq(std::initializer_list<TokenId> t) { return TokenSequence(t); }

TokenSequence with_prefix(TokenId head, std::size_t shared, TokenId tail, std::size_t rest) {
  TokenSequence s(shared, head);
  s.insert(s.end(), rest, tail);
  return s;
}

TEST(ClosedFormTest, SingleRequestHasNoHits) {
  EXPECT_EQ(prefix_sharing_bound({seq({1, 2, 3})}), 0.0);
}

TEST(ClosedFormTest, IdenticalPairHitsHalf) {
  EXPECT_DOUBLE_EQ(prefix_sharing_bound({seq({1, 2, 3}), seq({1, 2, 3})}), 0.5);
}

TEST(ClosedFormTest, DistinctFirstTokensHitNothing) {
  EXPECT_EQ(prefix_sharing_bound({seq({1, 2}), seq({2, 2}), seq({3, 2})}), 0.0);
}

TEST(ClosedFormTest, CopiesHitAllButOne) {
  for (int n = 1; n <= 7; ++n) {
    std::vector<TokenSequence> reqs(static_cast<std::size_t>(n), seq({4, 5, 6, 7}));
    EXPECT_DOUBLE_EQ(prefix_sharing_bound(reqs), static_cast<double>(n - 1) / n);
  }
}

TEST(ClosedFormTest, SharedPrefixOfThree) {
  const std::size_t k = 5;
  std::vector<TokenSequence> reqs{with_prefix(1, k, 2, 3), with_prefix(1, k, 3, 4), with_prefix(1, k, 4, 2)};
  const double total = 3.0 * k + 9.0;
  EXPECT_DOUBLE_EQ(prefix_sharing_bound(reqs), 2.0 * k / total);
}

TEST(ClosedFormTest, CapacityPreconditionIsChecked) {
  std::vector<TokenSequence> reqs{seq({1, 2, 3, 4}), seq({1, 2})};
  EXPECT_THROW(dfs_hit_rate(reqs, 3), PreconditionError);
  EXPECT_NO_THROW(dfs_hit_rate(reqs, 4));
}

TEST(BruteForceTest, MatchesClosedFormOnSpecExample) {
  std::vector<TokenSequence> reqs{with_prefix(1, 8, 2, 4), with_prefix(3, 6, 4, 2), with_prefix(1, 8, 5, 4),
                                  with_prefix(3, 6, 6, 2)};
  const auto bf = optimal_hit_rate_bruteforce(reqs, 12);
  EXPECT_DOUBLE_EQ(bf.best_rate, prefix_sharing_bound(reqs));
}

TEST(BruteForceTest, InterleavedOrderLosesHitsUnderTightCapacity) {
  // Two families; capacity fits one request only, so alternating families
  // evicts the shared prefix each time.
  std::vector<TokenSequence> reqs{with_prefix(1, 8, 2, 4), with_prefix(3, 8, 4, 4), with_prefix(1, 8, 5, 4),
                                  with_prefix(3, 8, 6, 4)};
  const double interleaved = sequential_lru_hit_rate(reqs, {0, 1, 2, 3}, 12);
  const double grouped = sequential_lru_hit_rate(reqs, {0, 2, 1, 3}, 12);
  EXPECT_EQ(interleaved, 0.0);
  EXPECT_DOUBLE_EQ(grouped, 16.0 / 48.0);
  EXPECT_DOUBLE_EQ(optimal_hit_rate_bruteforce(reqs, 12).best_rate, grouped);
  EXPECT_LT(scheduler_hit_rate(reqs, 12, SchedulePolicy::kFcfs, 1), grouped);
  EXPECT_DOUBLE_EQ(scheduler_hit_rate(reqs, 12, SchedulePolicy::kCacheAware, 1), grouped);
}

TEST(BruteForceTest, RejectsTooManyRequests) {
  std::vector<TokenSequence> reqs(9, seq({1}));
  EXPECT_THROW(optimal_hit_rate_bruteforce(reqs, 10), PreconditionError);
}

TEST(RandomWorkloadTest, RespectsBoundsAndIsDeterministic) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto a = random_prefix_workload(seed, 6, 32);
    EXPECT_EQ(a, random_prefix_workload(seed, 6, 32));
    ASSERT_GE(a.size(), 1u);
    ASSERT_LE(a.size(), 6u);
    for (const auto& r : a) {
      EXPECT_GE(r.size(), 1u);
      EXPECT_LE(r.size(), 32u);
    }
  }
}

TEST(TheoremTest, HoldsOnRandomWorkloads) {
  int sharing = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto reqs = random_prefix_workload(seed);
    const auto report = verify_theorem_1(reqs, 0, seed);
    EXPECT_TRUE(report.precondition_met);
    EXPECT_TRUE(report.holds) << "seed " << seed << ": " << report.detail;
    sharing += report.closed_form > 0.0;
  }
  // Guard against a generator that never shares anything.
  EXPECT_GT(sharing, 50);
}

TEST(TheoremTest, NotAssertedBelowLongestRequest) {
  const auto report = verify_theorem_1({seq({1, 2, 3, 4}), seq({1, 2, 3, 5})}, 3);
  EXPECT_FALSE(report.precondition_met);
  EXPECT_TRUE(report.holds);
}

TEST(NaiveDecodeTest, AgreesWithCompressedDecoding) {
  const auto vocab = Vocabulary::build(0, 128);
  const std::vector<std::string> patterns{
      R"(\{"summary": "[a-z ]{1,8}", "grade": "[ABCD][+-]?"\})",
      "[ABCD][+-]?",
      "colou?r",
      "(yes|no|maybe)",
      "[0-9]{1,4}(\\.[0-9]{1,2})?",
      R"(\{"name": "[a-z]{2,6}", "age": [0-9]{1,2}\})",
      "(ab|cd)*e",
      "The answer is [A-E]\\.",
      "[a-z]+@[a-z]+\\.(com|org)",
      "x{3,5}y?",
  };
  for (std::size_t i = 0; i < 200; ++i) {
    const auto& pattern = patterns[i % patterns.size()];
    const std::uint64_t seed = i;
    const MockModel model(seed, vocab.size());
    const auto naive = naive_constrained_decode(model, pattern, vocab, 256, seed * 7);
    const auto compressed = constrained_decode(model, pattern, vocab, 256, true, seed * 7);
    const auto plain = constrained_decode(model, pattern, vocab, 256, false, seed * 7);
    EXPECT_EQ(naive.text, compressed.text) << pattern << " seed " << seed;
    EXPECT_EQ(naive.text, plain.text) << pattern << " seed " << seed;
    EXPECT_EQ(naive.trace, plain.trace) << pattern << " seed " << seed;
    EXPECT_EQ(naive.forward_passes, plain.forward_passes) << pattern << " seed " << seed;
    EXPECT_LE(compressed.forward_passes, naive.forward_passes) << pattern << " seed " << seed;
    EXPECT_TRUE(compile_regex(pattern).accepts(naive.text));
  }
}

TEST(NaiveDecodeTest, SameErrors) {
  const auto vocab = Vocabulary::build(0, 16);
  const MockModel model(1, vocab.size());
  EXPECT_THROW(naive_constrained_decode(model, "[]", vocab, 10), DeadEndError);
  EXPECT_THROW(naive_constrained_decode(model, "a{40}", vocab, 5), BudgetExceededError);
}

}  // namespace
}  // namespace radixlm
