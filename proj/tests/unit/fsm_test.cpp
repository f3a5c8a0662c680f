#include "radixlm/fsm.hpp"

#include <gtest/gtest.h>

#include <regex>

#include "support/regex_gen.hpp"

namespace radixlm {
namespace {

const char* const kJsonPattern = R"(\{"summary": "[a-z ]{1,8}", "grade": "[ABCD][+-]?"\})";

Vocabulary vocab_with(std::vector<std::string> extra) {
  std::vector<std::string> pieces;
  for (int b = 0; b < 256; ++b) {
    pieces.emplace_back(1, static_cast<char>(b));
  }
  for (auto& p : extra) {
    pieces.push_back(std::move(p));
  }
  return Vocabulary::from_pieces(std::move(pieces));
}

TEST(RegexTest, SingleLiteral) {
  const Dfa d = compile_regex("a");
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.transition_count(), 1u);
  EXPECT_TRUE(d.accepts("a"));
  EXPECT_FALSE(d.accepts(""));
}

TEST(RegexTest, GradeLanguageHasTwelveStrings) {
  const Dfa d = compile_regex("[ABCD][+-]?");
  int accepted = 0;
  for (int a = 0; a < 256; ++a) {
    const std::string one(1, static_cast<char>(a));
    accepted += d.accepts(one);
    for (int b = 0; b < 256; ++b) {
      accepted += d.accepts(one + static_cast<char>(b));
    }
  }
  EXPECT_EQ(accepted, 12);
}

TEST(RegexTest, StarThenLiteral) {
  const Dfa d = compile_regex("a*b");
  for (const char* s : {"b", "ab", "aab"}) {
    EXPECT_TRUE(d.accepts(s)) << s;
  }
  for (const char* s : {"a", "", "ba"}) {
    EXPECT_FALSE(d.accepts(s)) << s;
  }
}

TEST(RegexTest, ErrorsCarryPositions) {
  try {
    compile_regex("ab(c");
    FAIL() << "expected RegexError";
  } catch (const RegexError& e) {
    EXPECT_EQ(e.position(), 2u);
  }
  EXPECT_THROW(compile_regex("a)"), RegexError);
  EXPECT_THROW(compile_regex("*a"), RegexError);
  EXPECT_THROW(compile_regex("[b-a]"), RegexError);
  EXPECT_THROW(compile_regex("a{3,1}"), RegexError);
  EXPECT_THROW(compile_regex("\\q"), RegexError);
}

TEST(RegexTest, RejectsNonRegularFeatures) {
  for (const char* p : {"(a)\\1", "a(?=b)", "a(?!b)", "^a", "a$", "a*?", "a+?", "\\bword"}) {
    EXPECT_THROW(compile_regex(p), UnsupportedRegexError) << p;
  }
}

TEST(RegexTest, EmptyClassIsEmptyLanguage) {
  const Dfa d = compile_regex("[]");
  EXPECT_TRUE(d.empty_language());
  EXPECT_FALSE(d.accepts(""));
}

TEST(RegexTest, StateLimitIsEnforced) {
  RegexLimits limits;
  limits.max_dfa_states = 10;
  EXPECT_THROW(compile_regex("[ab]*a[ab]{6}", limits), ValidationError);
}

TEST(RegexTest, AgreesWithReferenceEngine) {
  Rng rng(11);
  for (int i = 0; i < 300; ++i) {
    const std::string pattern = testing::random_pattern(rng);
    const Dfa d = compile_regex(pattern);
    const CompressedFsm c(d);
    const std::regex ref(pattern, std::regex::ECMAScript);
    for (int j = 0; j < 40; ++j) {
      const std::string s = testing::random_subject(rng);
      const bool expected = std::regex_match(s, ref);
      ASSERT_EQ(d.accepts(s), expected) << "pattern " << pattern << " subject '" << s << "'";
      ASSERT_EQ(c.accepts(s), expected) << "pattern " << pattern << " subject '" << s << "'";
    }
  }
}

TEST(CompressedFsmTest, LiteralIsOneEdge) {
  const Dfa d = compile_regex("abc");
  const CompressedFsm c(d);
  ASSERT_EQ(c.edges(c.start()).size(), 1u);
  EXPECT_EQ(c.edges(c.start())[0].label, "abc");
  EXPECT_EQ(c.edge_count(), 1u);
}

TEST(CompressedFsmTest, BranchBlocksMerging) {
  const Dfa d = compile_regex("ab|ac");
  const CompressedFsm c(d);
  const auto& first = c.edges(c.start());
  ASSERT_EQ(first.size(), 1u);
  EXPECT_EQ(first[0].label, "a");
  const auto& branch = c.edges(first[0].target);
  ASSERT_EQ(branch.size(), 2u);
  EXPECT_EQ(branch[0].label, "b");
  EXPECT_EQ(branch[1].label, "c");
}

TEST(CompressedFsmTest, JsonConstantIsOneEdge) {
  const Dfa d = compile_regex(kJsonPattern);
  const CompressedFsm c(d);
  ASSERT_EQ(c.edges(c.start()).size(), 1u);
  EXPECT_EQ(c.edges(c.start())[0].label, "{\"summary\": \"");
}

TEST(CompressedFsmTest, NoEdgeIsFurtherCompressible) {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const Dfa d = compile_regex(testing::random_pattern(rng));
    const CompressedFsm c(d);
    for (auto j : c.junctions()) {
      const bool singular = !d.is_accepting(j) && d.out_degree(j) == 1;
      EXPECT_TRUE(j == d.start || !singular);
      for (const auto& e : c.edges(j)) {
        std::int32_t s = d.step(j, static_cast<unsigned char>(e.label[0]));
        for (std::size_t k = 1; k < e.label.size(); ++k) {
          EXPECT_FALSE(c.is_junction(s));
          EXPECT_EQ(d.out_degree(s), 1u);
          s = d.step(s, static_cast<unsigned char>(e.label[k]));
        }
        EXPECT_EQ(s, e.target);
      }
    }
  }
}

TEST(JumpForwardTest, Cases) {
  {
    const Dfa d = compile_regex("ab|ac");
    const CompressedFsm c(d);
    const auto branch = c.edges(c.start())[0].target;
    EXPECT_EQ(c.jump_forward(branch), std::make_pair(std::string(), branch));
    EXPECT_EQ(c.jump_forward(c.start()).first, "a");
  }
  {
    const Dfa d = compile_regex(kJsonPattern);
    const CompressedFsm c(d);
    EXPECT_EQ(c.jump_forward(c.start()).first, "{\"summary\": \"");
    std::int32_t s = d.start;
    for (char ch : std::string_view("{\"sum")) {
      s = d.step(s, static_cast<unsigned char>(ch));
    }
    EXPECT_EQ(c.jump_forward(s).first, "mary\": \"");
  }
  {
    const Dfa d = compile_regex("colou?r");
    const CompressedFsm c(d);
    std::int32_t s = d.start;
    for (char ch : std::string_view("colo")) {
      s = d.step(s, static_cast<unsigned char>(ch));
    }
    EXPECT_EQ(c.jump_forward(s), std::make_pair(std::string(), s));
    EXPECT_EQ(c.jump_forward(d.start).first, "colo");
  }
  {
    const Dfa d = compile_regex("ab*");
    const CompressedFsm c(d);
    const auto [forced, s] = c.jump_forward(d.start);
    EXPECT_EQ(forced, "a");
    EXPECT_EQ(c.jump_forward(s).first, "");
  }
}

TEST(MaskTableTest, PathPrefixRule) {
  const auto v = vocab_with({"su", "sum", "sx"});
  const Dfa d = compile_regex("summary");
  const MaskTable m(d, v);
  EXPECT_TRUE(m.is_allowed(d.start, 's'));
  EXPECT_TRUE(m.is_allowed(d.start, v.find("su")));
  EXPECT_TRUE(m.is_allowed(d.start, v.find("sum")));
  EXPECT_FALSE(m.is_allowed(d.start, v.find("sx")));
  EXPECT_FALSE(m.is_allowed(d.start, 'x'));
  EXPECT_FALSE(m.eos_allowed(d.start));
}

TEST(MaskTableTest, AcceptingLeafAllowsOnlyEos) {
  const auto v = vocab_with({});
  const Dfa d = compile_regex("a");
  const MaskTable m(d, v);
  const auto end = d.step(d.start, 'a');
  EXPECT_TRUE(m.allowed(end).empty());
  EXPECT_TRUE(m.eos_allowed(end));
  EXPECT_TRUE(m.is_allowed(end, v.eos_id()));
}

TEST(MaskTableTest, MatchesDirectPieceCheck) {
  const auto v = Vocabulary::build(0, 200);
  const Dfa d = compile_regex(kJsonPattern);
  const MaskTable m(d, v);
  for (std::size_t s = 0; s < d.size(); ++s) {
    for (std::size_t t = 0; t < v.size(); ++t) {
      std::int32_t cur = static_cast<std::int32_t>(s);
      for (unsigned char c : v.piece(static_cast<TokenId>(t))) {
        cur = cur < 0 ? -1 : d.step(cur, c);
      }
      ASSERT_EQ(m.is_allowed(static_cast<std::int32_t>(s), static_cast<TokenId>(t)), cur >= 0);
    }
  }
}

TEST(DecodeSessionTest, RetokenizesAcrossBoundary) {
  const auto v = vocab_with({"ab"});
  const MockModel model(0, v.size());
  auto c = CompiledConstraint::compile("ab", v);
  DecodeSession session(c, v, model, {});
  EXPECT_TRUE(session.retokenize_and_continue("").empty());
  EXPECT_EQ(session.retokenize_and_continue("a"), TokenSequence{'a'});
  EXPECT_EQ(session.retokenize_and_continue("b"), TokenSequence{v.find("ab")});
  EXPECT_EQ(session.trace(), TokenSequence{v.find("ab")});
}

TEST(ConstrainedDecodeTest, FullyForcedPatternNeedsNoPass) {
  const auto v = Vocabulary::build(0, 64);
  const MockModel model(1, v.size());
  const auto r = constrained_decode(model, "A", v, 16);
  EXPECT_EQ(r.text, "A");
  EXPECT_EQ(r.forward_passes, 0);
  const auto naive = constrained_decode(model, "A", v, 16, false);
  EXPECT_EQ(naive.text, "A");
  EXPECT_EQ(naive.forward_passes, 1);
}

TEST(ConstrainedDecodeTest, JsonSchemaSameTextFewerPasses) {
  const auto v = Vocabulary::build(0, 128);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MockModel model(seed, v.size());
    const auto on = constrained_decode(model, kJsonPattern, v, 128, true, seed);
    const auto off = constrained_decode(model, kJsonPattern, v, 128, false, seed);
    EXPECT_EQ(on.text, off.text);
    EXPECT_LT(on.forward_passes, off.forward_passes);
    EXPECT_EQ(on.trace, v.encode(on.text));
    EXPECT_EQ(off.trace, v.encode(off.text));
    EXPECT_TRUE(compile_regex(kJsonPattern).accepts(on.text));
  }
}

TEST(ConstrainedDecodeTest, EmptyLanguageIsDeadEnd) {
  const auto v = Vocabulary::build(0, 0);
  const MockModel model(0, v.size());
  EXPECT_THROW(constrained_decode(model, "[]", v, 8), DeadEndError);
  EXPECT_THROW(constrained_decode(model, "[]", v, 8, false), DeadEndError);
}

TEST(ConstrainedDecodeTest, BudgetExceeded) {
  const auto v = Vocabulary::build(0, 0);
  const MockModel model(0, v.size());
  EXPECT_THROW(constrained_decode(model, "abcdefgh", v, 4), BudgetExceededError);
  EXPECT_THROW(constrained_decode(model, "abcdefgh", v, 4, false), BudgetExceededError);
}

TEST(ConstraintCacheTest, ReuseCompilesOnce) {
  const auto v = Vocabulary::build(0, 16);
  ConstraintCache shared(true);
  ConstraintCache fresh(false);
  for (int i = 0; i < 3; ++i) {
    shared.get("[ab]+", v);
    fresh.get("[ab]+", v);
  }
  EXPECT_EQ(shared.compilations(), 1);
  EXPECT_EQ(fresh.compilations(), 3);
}

}  // namespace
}  // namespace radixlm
