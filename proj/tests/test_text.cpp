#include <gtest/gtest.h>

#include <set>

#include "mqmeval/random.hpp"
#include "mqmeval/text.hpp"
#include "mqmeval/types.hpp"

using namespace mqmeval;

TEST(Text, DecodeRoundTripsValidUtf8) {
  const std::string s = "Größe Ж 中文 😀";
  std::string back;
  for (const auto& cp : text::decode(s)) text::append_utf8(back, cp.value);
  EXPECT_EQ(back, s);
}

TEST(Text, DecodeReplacesInvalidBytes) {
  const std::string s = "a\xC3" "b\xFF";
  const auto cps = text::decode(s);
  ASSERT_EQ(cps.size(), 4u);
  EXPECT_EQ(cps[1].value, U'�');
  EXPECT_EQ(cps[3].value, U'�');
}

TEST(Text, TokenizeSplitsOnUnicodeWhitespace) {
  // U+00A0 and U+3000 separate words; leading/trailing space is ignored.
  const std::string s = "  Die\xC2\xA0Katze\tsitzt\xE3\x80\x80hier ";
  EXPECT_EQ(text::word_count(s), 4);
  const auto w = text::tokenize(s);
  EXPECT_EQ(s.substr(w[1].begin, w[1].end - w[1].begin), "Katze");
  EXPECT_EQ(text::word_count(""), 0);
  EXPECT_EQ(text::word_count("   "), 0);
}

TEST(Text, FoldLowercasesLatinGreekCyrillic) {
  EXPECT_EQ(text::fold(U'A'), U'a');
  EXPECT_EQ(text::fold(U'Ä'), U'ä');
  EXPECT_EQ(text::fold(U'Σ'), U'σ');
  EXPECT_EQ(text::fold(U'Ж'), U'ж');
  EXPECT_EQ(text::fold(U'Ё'), U'ё');
  EXPECT_EQ(text::fold(U'中'), U'中');
  EXPECT_EQ(text::fold(U'×'), U'×');
}

TEST(Text, SplitKeepsEmptyFields) {
  EXPECT_EQ(text::split("a,,b", ','), (std::vector<std::string>{"a", "", "b"}));
  EXPECT_EQ(text::split("", ','), (std::vector<std::string>{""}));
}

TEST(Random, SameSeedSameSequence) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs |= x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Random, StreamsAreDistinct) {
  Rng s0(7, 0), s1(7, 1);
  EXPECT_NE(s0.next(), s1.next());
}

TEST(Random, BelowStaysInRangeAndCoversIt) {
  Rng r(1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto x = r.below(7);
    ASSERT_LT(x, 7u);
    seen.insert(x);
  }
  EXPECT_EQ(seen.size(), 7u);
  EXPECT_EQ(r.below(0), 0u);
  EXPECT_EQ(r.below(1), 0u);
}

TEST(Random, ShuffleIsAPermutation) {
  Rng r(3);
  std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto w = v;
  r.shuffle(w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(Random, SampleIndicesDistinctSorted) {
  Rng r(5);
  const auto idx = r.sample_indices(50, 20);
  ASSERT_EQ(idx.size(), 20u);
  EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 20u);
  EXPECT_LT(idx.back(), 50u);
  EXPECT_EQ(r.sample_indices(5, 5).size(), 5u);
}

TEST(Random, CoinIsRoughlyFair) {
  Rng r(9);
  int heads = 0;
  for (int i = 0; i < 10000; ++i) heads += r.coin();
  EXPECT_NEAR(heads, 5000, 300);
}

TEST(Types, LanguagePairFromCode) {
  const auto lp = LanguagePair::from_code("En-De");
  EXPECT_EQ(lp.code, "en-de");
  EXPECT_EQ(lp.source_lang, "English");
  EXPECT_EQ(lp.target_lang, "German");
  EXPECT_EQ(LanguagePair::from_code("zh-en").source_lang, "Chinese");
  EXPECT_EQ(LanguagePair::from_code("en-ru").target_lang, "Russian");
  EXPECT_THROW(LanguagePair::from_code("ende"), DataError);
  EXPECT_THROW(LanguagePair::from_code("en-en"), DataError);
  EXPECT_THROW(LanguagePair::from_code("xx-yy"), DataError);
  EXPECT_EQ(LanguagePair::from_code("xx-yy", "Foo", "Bar").target_lang, "Bar");
}

TEST(Types, InputModeFlags) {
  EXPECT_FALSE(includes_source(InputMode::T));
  EXPECT_FALSE(includes_reference(InputMode::T));
  EXPECT_TRUE(includes_source(InputMode::ST));
  EXPECT_FALSE(includes_reference(InputMode::ST));
  EXPECT_FALSE(includes_source(InputMode::RT));
  EXPECT_TRUE(includes_reference(InputMode::RT));
  EXPECT_TRUE(includes_source(InputMode::SRT));
  EXPECT_TRUE(includes_reference(InputMode::SRT));
  for (auto m : kAllModes) EXPECT_EQ(parse_input_mode(to_string(m)), m);
  EXPECT_EQ(parse_input_mode("srt"), InputMode::SRT);
  EXPECT_THROW(parse_input_mode("X-T"), ConfigError);
}

TEST(Types, CategoryCanonicalisation) {
  EXPECT_EQ(CategoryLabel::from_raw("Accuracy/Mistranslation").canonical, Category::Accuracy);
  EXPECT_EQ(CategoryLabel::from_raw("Fluency/Grammar").canonical, Category::Fluency);
  EXPECT_EQ(CategoryLabel::from_raw("Locale convention/Date format").canonical, Category::LocaleConvention);
  EXPECT_EQ(CategoryLabel::from_raw("locale-convention").canonical, Category::LocaleConvention);
  EXPECT_EQ(CategoryLabel::from_raw("Terminology").canonical, Category::Terminology);
  EXPECT_EQ(CategoryLabel::from_raw("Style/Awkward").canonical, Category::Style);
  EXPECT_EQ(CategoryLabel::from_raw("Non-translation!").canonical, Category::Other);
  EXPECT_TRUE(CategoryLabel::from_raw("Non-translation!").is_non_translation());
  EXPECT_EQ(CategoryLabel::from_raw("Source issue").canonical, Category::Other);
  EXPECT_EQ(CategoryLabel::from_raw("Accuracy/Mistranslation").raw, "Accuracy/Mistranslation");
}
