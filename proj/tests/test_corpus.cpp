#include <gtest/gtest.h>

#include <set>

#include "brm/corpus.hpp"
#include "support/brute_force.hpp"
#include "support/synthetic.hpp"

namespace brm {
namespace {

constexpr const char* kTwoWords =
    "# text = the cat\n"
    "1\tthe\tthe\tDET\t_\t_\t2\tdet\t_\t_\n"
    "2\tcat\tcat\tNOUN\t_\t_\t0\troot\t_\t_\n"
    "\n";

TEST(ParseConllu, MapsColumns) {
  auto corpus = parse_conllu(std::string_view(kTwoWords));
  ASSERT_EQ(corpus.size(), 1u);
  const Sentence& s = corpus[0];
  ASSERT_EQ(s.n(), 2);
  EXPECT_EQ(s.tokens[0].id, 1);
  EXPECT_EQ(s.tokens[0].form, "the");
  EXPECT_EQ(s.tokens[0].upos, "DET");
  EXPECT_EQ(s.tokens[0].head, 2);
  EXPECT_EQ(s.tokens[1].form, "cat");
  EXPECT_EQ(s.tokens[1].upos, "NOUN");
  EXPECT_EQ(s.tokens[1].head, 0);
  EXPECT_EQ(s.comments, std::vector<std::string>{"# text = the cat"});
}

TEST(ParseConllu, EmptyInput) { EXPECT_TRUE(parse_conllu(std::string_view("")).empty()); }

TEST(ParseConllu, SkipsRangesAndEmptyNodes) {
  const char* text =
      "1\tIl\til\tPRON\t_\t_\t2\tnsubj\t_\t_\n"
      "2\tparle\tparler\tVERB\t_\t_\t0\troot\t_\t_\n"
      "3-4\tdu\t_\t_\t_\t_\t_\t_\t_\t_\n"
      "3\tde\tde\tADP\t_\t_\t5\tcase\t_\t_\n"
      "4\tle\tle\tDET\t_\t_\t5\tdet\t_\t_\n"
      "4.1\tx\tx\tX\t_\t_\t_\t_\t_\t_\n"
      "5\tvin\tvin\tNOUN\t_\t_\t2\tobl\t_\t_\n"
      "\n";
  auto corpus = parse_conllu(std::string_view(text));
  ASSERT_EQ(corpus.size(), 1u);
  ASSERT_EQ(corpus[0].n(), 5);
  EXPECT_EQ(corpus[0].tokens[2].form, "de");
  EXPECT_EQ(corpus[0].tokens[3].form, "le");
}

TEST(ParseConllu, HandlesCrlfAndMissingFinalBlankLine) {
  auto corpus = parse_conllu(std::string_view("1\ta\ta\tX\t_\t_\t0\troot\t_\t_\r\n"));
  ASSERT_EQ(corpus.size(), 1u);
  EXPECT_EQ(corpus[0].tokens[0].misc, "_");
}

TEST(ParseConllu, WrongColumnCountReportsLine) {
  const char* text =
      "1\tthe\tthe\tDET\t_\t_\t2\tdet\t_\t_\n"
      "2\tcat\tcat\tNOUN\t_\t0\troot\t_\t_\n";
  try {
    parse_conllu(std::string_view(text));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(ParseConllu, NonIntegerHeadReportsLine) {
  const char* text = "# c\n1\tthe\tthe\tDET\t_\t_\tX\tdet\t_\t_\n";
  try {
    parse_conllu(std::string_view(text));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(ParseConllu, HeadOutOfRangeIsValidationError) {
  const char* text = "1\tthe\tthe\tDET\t_\t_\t3\tdet\t_\t_\n2\tcat\tcat\tNOUN\t_\t_\t0\troot\t_\t_\n";
  EXPECT_THROW(parse_conllu(std::string_view(text)), ValidationError);
}

TEST(ParseConllu, CycleIsValidationError) {
  const char* text = "1\ta\ta\tX\t_\t_\t2\tx\t_\t_\n2\tb\tb\tX\t_\t_\t1\tx\t_\t_\n";
  EXPECT_THROW(parse_conllu(std::string_view(text)), ValidationError);
}

TEST(ParseConllu, RoundTripOnRandomCorpora) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Sentence> corpus;
    const int count = 1 + static_cast<int>(rng.below(5));
    for (int i = 0; i < count; ++i) {
      const int n = 1 + static_cast<int>(rng.below(9));
      std::vector<std::string> forms, tags;
      for (int j = 0; j < n; ++j) {
        forms.push_back("f" + std::to_string(rng.below(100)));
        tags.push_back(rng.bernoulli(0.2) ? "_" : "T" + std::to_string(rng.below(4)));
      }
      Sentence s = testing::make_sentence(forms, tags, testing::random_heads(n, rng));
      if (rng.bernoulli(0.5)) s.comments.push_back("# sent_id = " + std::to_string(i));
      corpus.push_back(s);
    }
    auto text = to_conllu(corpus);
    auto back = parse_conllu(std::string_view(text));
    EXPECT_EQ(back, corpus);
    EXPECT_EQ(to_conllu(back), text);
  }
}

TEST(IsProjective, Examples) {
  EXPECT_TRUE(is_projective(std::vector<int>{2, 0}));
  EXPECT_TRUE(is_projective(std::vector<int>{0}));
  EXPECT_FALSE(is_projective(std::vector<int>{0, 4, 1, 2}));
  EXPECT_FALSE(is_projective(std::vector<int>{3, 4, 0, 3}));
}

TEST(IsProjective, AgreesWithCrossingChecker) {
  Rng rng(5);
  int non_projective = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(8));
    auto heads = testing::random_heads(n, rng);
    const bool expected = testing::crossing_free(heads);
    non_projective += !expected;
    ASSERT_EQ(is_projective(heads), expected);
  }
  EXPECT_GT(non_projective, 100);
}

TEST(IsProjective, GeneratorProducesProjectiveTrees) {
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(12));
    Sentence s = testing::random_projective_sentence(n, rng);
    EXPECT_NO_THROW(validate(s));
    EXPECT_TRUE(is_projective(s));
  }
}

TEST(KfoldSplit, TenFoldsOfTen) {
  auto splits = kfold_split(10, 10, 42, {0.8, 0.1, 0.1});
  ASSERT_EQ(splits.size(), 10u);
  for (const auto& s : splits) {
    EXPECT_EQ(s.train.size(), 8u);
    EXPECT_EQ(s.dev.size(), 1u);
    EXPECT_EQ(s.test.size(), 1u);
  }
}

TEST(KfoldSplit, Deterministic) {
  auto a = kfold_split(37, 5, 9, {0.6, 0.2, 0.2});
  auto b = kfold_split(37, 5, 9, {0.6, 0.2, 0.2});
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].train, b[i].train);
    EXPECT_EQ(a[i].dev, b[i].dev);
    EXPECT_EQ(a[i].test, b[i].test);
  }
  auto c = kfold_split(37, 5, 10, {0.6, 0.2, 0.2});
  EXPECT_NE(a[0].test, c[0].test);
}

TEST(KfoldSplit, TwoFoldsDisjointTests) {
  auto splits = kfold_split(4, 2, 1, {0.5, 0.0, 0.5});
  ASSERT_EQ(splits.size(), 2u);
  std::set<std::size_t> t0(splits[0].test.begin(), splits[0].test.end());
  for (auto i : splits[1].test) EXPECT_FALSE(t0.count(i));
  EXPECT_EQ(splits[0].test.size(), 2u);
}

TEST(KfoldSplit, SplitsAreDisjointAndTestsCoverCorpus) {
  for (std::size_t size : {10u, 23u, 101u}) {
    auto splits = kfold_split(size, 10, size, {0.8, 0.1, 0.1});
    std::vector<int> covered(size, 0);
    for (const auto& s : splits) {
      std::set<std::size_t> all;
      for (auto i : s.train) all.insert(i);
      for (auto i : s.dev) all.insert(i);
      for (auto i : s.test) all.insert(i);
      EXPECT_EQ(all.size(), s.train.size() + s.dev.size() + s.test.size());
      EXPECT_EQ(all.size(), size);
      for (auto i : s.test) ++covered[i];
    }
    for (int c : covered) EXPECT_EQ(c, 1);
  }
}

TEST(KfoldSplit, Errors) {
  EXPECT_THROW(kfold_split(5, 10, 1), UsageError);
  EXPECT_THROW(kfold_split(20, 1, 1), UsageError);
  EXPECT_THROW(kfold_split(20, 4, 1, {0.5, 0.2, 0.2}), UsageError);
  EXPECT_THROW(kfold_split(20, 10, 1, {0.6, 0.2, 0.2}), UsageError);
}

TEST(Fnv1a, KnownValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
}

}  // namespace
}  // namespace brm
