#include <gtest/gtest.h>

#include "gen.hpp"
#include "mcsim/tokens.hpp"

using namespace mcsim;

namespace {

SystemShape shape(std::uint32_t chips, std::uint32_t cores) { return {chips, cores, 4, 64}; }

}  // namespace

TEST(FullSet, OneGoldSilverPerChipBronzePerCore) {
  EXPECT_EQ(full_set(shape(2, 4)), (TokenSet{1, 2, 8}));
  EXPECT_EQ(full_set(shape(1, 1)), (TokenSet{1, 1, 1}));
  EXPECT_EQ(full_set(shape(4, 4)), (TokenSet{1, 4, 16}));
}

TEST(Merge, SumsWithinBounds) {
  EXPECT_EQ(merge({1, 1, 4}, {0, 1, 4}, shape(2, 4)), (TokenSet{1, 2, 8}));
  EXPECT_EQ(merge({0, 0, 0}, {1, 2, 8}, shape(2, 4)), (TokenSet{1, 2, 8}));
}

TEST(Merge, ExceedingFullSetIsConservationViolation) {
  EXPECT_THROW(merge({1, 2, 8}, {0, 0, 1}, shape(2, 4)), ConservationViolation);
  EXPECT_THROW(merge({1, 0, 1}, {1, 0, 1}, shape(2, 4)), ConservationViolation);
}

TEST(Split, GoldHolderGivesSilverAndBronze) {
  auto s = split_for_external_read({1, 2, 8}, 4);
  EXPECT_EQ(s.granted, (TokenSet{0, 1, 4}));
  EXPECT_EQ(s.retained, (TokenSet{1, 1, 4}));
}

TEST(Split, BronzeCappedSoHolderKeepsOne) {
  auto s = split_for_external_read({1, 2, 2}, 4);
  EXPECT_EQ(s.granted, (TokenSet{0, 1, 1}));
  EXPECT_EQ(s.retained, (TokenSet{1, 1, 1}));
}

TEST(Split, NoSpareSilver) { EXPECT_THROW(split_for_external_read({1, 1, 4}, 4), InsufficientSilver); }

TEST(Split, PropertyConservesAndKeepsReadability) {
  testgen::Rng rng(11);
  for (int i = 0; i < 20000; ++i) {
    const std::uint32_t chips = rng.range(2, 8), cores = rng.range(1, 8);
    const TokenSet full = full_set(shape(chips, cores));
    const TokenSet holder{1, rng.range(2, full.silver), rng.range(2, full.bronze)};
    const std::uint32_t req = rng.range(1, 16);
    const auto s = split_for_external_read(holder, req);
    // oracle: one silver, bronze = min(req, holder.bronze - 1)
    const std::uint32_t expect_bronze = req < holder.bronze - 1 ? req : holder.bronze - 1;
    ASSERT_EQ(s.granted, (TokenSet{0, 1, expect_bronze}));
    TokenSet sum = s.granted;
    sum += s.retained;
    ASSERT_EQ(sum, holder);
    ASSERT_TRUE(s.retained.readable());
    ASSERT_TRUE(s.granted.readable());
    ASSERT_EQ(s.retained.gold, 1u);
  }
}

TEST(IsFull, Examples) {
  EXPECT_TRUE(is_full({1, 2, 8}, shape(2, 4)));
  EXPECT_FALSE(is_full({1, 2, 7}, shape(2, 4)));
  EXPECT_FALSE(is_full({0, 0, 0}, shape(2, 4)));
}

TEST(WellFormed, GoldNeedsBronze) {
  EXPECT_TRUE(well_formed({1, 0, 1}, shape(2, 4)));
  EXPECT_FALSE(well_formed({1, 1, 0}, shape(2, 4)));
  EXPECT_FALSE(well_formed({0, 3, 0}, shape(2, 4)));
  EXPECT_TRUE(well_formed({0, 0, 0}, shape(2, 4)));
}

TEST(TokenSet, SubtractionUnderflowThrows) {
  TokenSet t{0, 1, 1};
  EXPECT_THROW((t -= TokenSet{0, 0, 2}), ConservationViolation);
}

TEST(Merge, PropertyMatchesComponentSums) {
  testgen::Rng rng(5);
  const SystemShape sh = shape(2, 4);
  const TokenSet full = full_set(sh);
  for (int i = 0; i < 20000; ++i) {
    const TokenSet a{rng.range(0, 1), rng.range(0, 2), rng.range(0, 8)};
    const TokenSet b{rng.range(0, 1), rng.range(0, 2), rng.range(0, 8)};
    const bool fits = a.gold + b.gold <= full.gold && a.silver + b.silver <= full.silver && a.bronze + b.bronze <= full.bronze;
    if (fits) {
      const TokenSet m = merge(a, b, sh);
      ASSERT_EQ(m.gold, a.gold + b.gold);
      ASSERT_EQ(m.silver, a.silver + b.silver);
      ASSERT_EQ(m.bronze, a.bronze + b.bronze);
    } else {
      ASSERT_THROW(merge(a, b, sh), ConservationViolation);
    }
  }
}
