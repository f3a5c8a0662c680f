#include "radixlm/scheduler.hpp"

#include <gtest/gtest.h>

#include <functional>

namespace radixlm {
namespace {

std::shared_ptr<const Vocabulary> byte_vocab() { return std::make_shared<const Vocabulary>(Vocabulary::build(0, 0)); }

TokenSequence ramp(TokenId base, int n) {
  TokenSequence out;
  for (int i = 0; i < n; ++i) {
    out.push_back(base + i % 7);
  }
  return out;
}

void expect_all_refs_zero(const RadixNode& node) {
  EXPECT_EQ(node.ref_count, 0) << "node " << node.id;
  for (const auto& [k, child] : node.children) {
    expect_all_refs_zero(*child);
  }
}

TEST(SchedulerTest, CacheAwareOrdersByMatchedLength) {
  SchedulerConfig cfg;
  cfg.in_batch_deferral = false;
  Scheduler s(byte_vocab(), cfg);
  s.submit({ramp(10, 12), 0});
  s.submit({ramp(40, 4), 0});
  s.drain();
  // Matched lengths 0, 12 and 4 respectively.
  const auto a = s.submit({ramp(70, 5), 0});
  auto p12 = ramp(10, 12);
  p12.push_back(99);
  const auto b = s.submit({p12, 0});
  auto p4 = ramp(40, 4);
  p4.push_back(99);
  const auto c = s.submit({p4, 0});
  EXPECT_EQ(s.schedule_step(), (std::vector<RequestId>{b, c, a}));
  s.run_step();
}

TEST(SchedulerTest, TiesBreakByArrival) {
  Scheduler s(byte_vocab(), {});
  s.submit({ramp(10, 8), 0});
  s.drain();
  auto first = ramp(10, 8);
  first.push_back(1);
  auto second = ramp(10, 8);
  second.push_back(2);
  const auto x = s.submit({second, 0});
  const auto y = s.submit({first, 0});
  EXPECT_EQ(s.schedule_step(), (std::vector<RequestId>{x, y}));
}

TEST(SchedulerTest, FcfsIgnoresPrefixes) {
  SchedulerConfig cfg;
  cfg.policy = SchedulePolicy::kFcfs;
  Scheduler s(byte_vocab(), cfg);
  s.submit({ramp(10, 12), 0});
  s.drain();
  const auto a = s.submit({ramp(70, 5), 0});
  auto p = ramp(10, 12);
  p.push_back(3);
  const auto b = s.submit({p, 0});
  EXPECT_EQ(s.schedule_step(), (std::vector<RequestId>{a, b}));
}

TEST(SchedulerTest, SingleRequestBookkeeping) {
  Scheduler s(byte_vocab(), {});
  const auto prompt = ramp(20, 10);
  s.submit({prompt, 2});
  EXPECT_TRUE(s.step().empty());
  const auto done = s.step();
  ASSERT_EQ(done.size(), 1u);
  EXPECT_EQ(done[0].output.size(), 2u);
  EXPECT_EQ(s.metrics().prefill_compute_tokens, 10);
  EXPECT_EQ(s.metrics().decode_steps, 2);
  EXPECT_EQ(s.metrics().simulated_time, 12);

  s.submit({prompt, 2});
  s.schedule_step();
  s.run_step();
  EXPECT_EQ(s.metrics().cached_prompt_tokens, 10);
  EXPECT_EQ(s.metrics().prefill_compute_tokens, 10);
  s.drain();
  s.check_invariants();
}

TEST(SchedulerTest, HitRateOfRepeatedPrompt) {
  Scheduler s(byte_vocab(), {});
  s.submit({ramp(3, 20), 4});
  s.drain();
  s.submit({ramp(3, 20), 4});
  s.drain();
  EXPECT_DOUBLE_EQ(s.metrics().hit_rate(), 0.5);
}

TEST(SchedulerTest, HitRateUndefinedWithoutPrompts) {
  Scheduler s(byte_vocab(), {});
  EXPECT_THROW(s.metrics().hit_rate(), PreconditionError);
}

TEST(SchedulerTest, FewShotClosedForm) {
  const int n = 8, k = 128, q = 16;
  Scheduler s(byte_vocab(), {});
  const TokenSequence shared = ramp(30, k);
  for (int i = 0; i < n; ++i) {
    TokenSequence p = shared;
    for (int j = 0; j < q; ++j) {
      p.push_back(100 + i);
    }
    s.submit({p, 4, "", "", static_cast<std::uint64_t>(i)});
  }
  s.drain();
  EXPECT_DOUBLE_EQ(s.metrics().hit_rate(), static_cast<double>((n - 1) * k) / (n * (k + q)));
}

TEST(SchedulerTest, NoCacheHasZeroHitRate) {
  SchedulerConfig cfg;
  cfg.cache_enabled = false;
  Scheduler s(byte_vocab(), cfg);
  for (int i = 0; i < 4; ++i) {
    s.submit({ramp(5, 30), 3});
  }
  s.drain();
  EXPECT_EQ(s.metrics().hit_rate(), 0.0);
  EXPECT_EQ(s.tree().total_cached_tokens(), 0);
  EXPECT_EQ(s.pool().in_use(), 0);
}

TEST(SchedulerTest, EvictsCacheForLargerBatch) {
  SchedulerConfig cfg;
  cfg.pool_capacity = 100;
  Scheduler s(byte_vocab(), cfg);
  s.submit({ramp(1, 60), 0});
  s.drain();
  EXPECT_EQ(s.pool().in_use(), 60);
  s.submit({ramp(50, 40), 10});
  s.submit({ramp(60, 40), 10});
  s.step();
  EXPECT_EQ(s.running_count(), 2u);
  EXPECT_GT(s.metrics().evicted_tokens, 0);
  s.drain();
  s.check_invariants();
}

TEST(SchedulerTest, RejectsOversizedRequest) {
  SchedulerConfig cfg;
  cfg.pool_capacity = 10;
  Scheduler s(byte_vocab(), cfg);
  EXPECT_THROW(s.submit({ramp(0, 8), 5}), CapacityError);
  EXPECT_THROW(s.submit({TokenSequence{}, 1}), ValidationError);
  EXPECT_THROW(s.submit({TokenSequence{9999}, 1}), UnknownTokenError);
}

TEST(SchedulerTest, StopStringEndsGeneration) {
  const auto vocab = byte_vocab();
  Scheduler probe(vocab, {});
  probe.submit({ramp(2, 6), 30});
  const auto free_run = probe.drain().at(0);
  const std::string stop = free_run.text.substr(5, 2);
  Scheduler s(vocab, {});
  s.submit({ramp(2, 6), 30, "", stop});
  const auto c = s.drain().at(0);
  EXPECT_TRUE(c.stop_hit);
  EXPECT_EQ(c.text, free_run.text.substr(0, free_run.text.find(stop)));
}

TEST(SchedulerTest, ConstrainedRequestMatchesStandaloneDecode) {
  const auto vocab = std::make_shared<const Vocabulary>(Vocabulary::build(0, 128));
  const std::string pattern = R"(\{"summary": "[a-z ]{1,8}", "grade": "[ABCD][+-]?"\})";
  for (bool compressed : {true, false}) {
    SchedulerConfig cfg;
    cfg.compressed_fsm = compressed;
    Scheduler s(vocab, cfg);
    const auto prompt = vocab->encode("Grade the essay: ");
    s.submit({prompt, 64, pattern, "", 5});
    const auto c = s.drain().at(0);
    const MockModel model(cfg.model_seed, vocab->size());
    const auto ref = constrained_decode(model, CompiledConstraint::compile(pattern, *vocab), *vocab,
                                        {compressed, 64, hash_combine(5, MockModel::context_of(prompt))});
    EXPECT_EQ(c.text, ref.text);
    EXPECT_EQ(c.forward_passes, ref.forward_passes);
    EXPECT_EQ(c.output, vocab->encode(c.text));
    s.check_invariants();
  }
}

// Random arrivals, prompt families and capacities; invariants after every step.
TEST(SchedulerTest, FuzzedSchedulesKeepInvariants) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    SchedulerConfig cfg;
    cfg.pool_capacity = rng.uniform(80, 400);
    cfg.policy = static_cast<SchedulePolicy>(rng.uniform(0, 2));
    cfg.hit_cap = rng.uniform(0, 1) ? 1.0 : 0.5;
    cfg.tree_structure = rng.uniform(0, 3) != 0;
    Scheduler s(byte_vocab(), cfg);
    bool violated = false;
    s.set_eviction_listener([&](const TokenSequence& path, std::int64_t) {
      for (const auto& pinned : s.pinned_paths()) {
        if (pinned.size() >= path.size() && std::equal(path.begin(), path.end(), pinned.begin())) {
          violated = true;
        }
      }
    });
    std::vector<TokenSequence> families;
    for (int f = 0; f < 4; ++f) {
      families.push_back(ramp(static_cast<TokenId>(10 * f + 1), static_cast<int>(rng.uniform(5, 30))));
    }
    for (int round = 0; round < 40; ++round) {
      const auto arrivals = rng.uniform(0, 3);
      for (int a = 0; a < arrivals; ++a) {
        TokenSequence p = families[static_cast<std::size_t>(rng.uniform(0, 3))];
        const auto extra = rng.uniform(0, 20);
        for (int e = 0; e < extra; ++e) {
          p.push_back(static_cast<TokenId>(rng.uniform(0, 5)));
        }
        s.submit({p, rng.uniform(0, 12), "", "", rng.next()});
      }
      s.step();
      ASSERT_NO_THROW(s.check_invariants()) << "seed " << seed;
    }
    s.drain();
    ASSERT_FALSE(violated) << "seed " << seed;
    s.check_invariants();
    expect_all_refs_zero(s.tree().root());
    EXPECT_EQ(s.pool().in_use(), s.tree().total_cached_tokens());
  }
}

TEST(SchedulerTest, PoliciesAgreeWithoutSharing) {
  std::int64_t prefill[2];
  for (int i = 0; i < 2; ++i) {
    SchedulerConfig cfg;
    cfg.policy = i == 0 ? SchedulePolicy::kCacheAware : SchedulePolicy::kFcfs;
    cfg.pool_capacity = 300;
    Scheduler s(byte_vocab(), cfg);
    for (int r = 0; r < 20; ++r) {
      TokenSequence p{static_cast<TokenId>(r + 1)};
      for (int j = 0; j < 30; ++j) {
        p.push_back(static_cast<TokenId>((r * 31 + j * 7) % 200 + 20));
      }
      s.submit({p, 5});
    }
    s.drain();
    prefill[i] = s.metrics().prefill_compute_tokens;
  }
  EXPECT_EQ(prefill[0], prefill[1]);
}

TEST(SchedulerTest, WorkConservation) {
  SchedulerConfig cfg;
  cfg.pool_capacity = 50;
  Scheduler s(byte_vocab(), cfg);
  s.submit({ramp(1, 30), 5});
  EXPECT_EQ(s.schedule_step().size(), 1u);
}

}  // namespace
}  // namespace radixlm
