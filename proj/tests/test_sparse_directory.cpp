#include <gtest/gtest.h>

#include <algorithm>
#include <list>
#include <map>

#include "gen.hpp"
#include "mcsim/sparse_directory.hpp"

using namespace mcsim;

namespace {

DirConfig cfg(std::uint32_t sets, std::uint32_t ways) {
  DirConfig c;
  c.sets = sets;
  c.ways = ways;
  c.domain_population = 4;
  return c;
}

// address in set s with tag t, for index_shift 6, stride 1
BlockAddress in_set(std::uint32_t sets, std::uint32_t s, std::uint64_t t) { return BlockAddress((t * sets + s) * 64); }

}  // namespace

TEST(SparseDirectory, EmptyLookupAbsent) {
  SparseDirectory d(cfg(4, 2));
  EXPECT_FALSE(d.lookup(in_set(4, 0, 1)).has_value());
}

TEST(SparseDirectory, AllocateRecordsSharer) {
  SparseDirectory d(cfg(4, 2));
  EXPECT_FALSE(d.allocate_silent(in_set(4, 1, 3), 1u << 2, std::nullopt).has_value());
  auto e = d.lookup(in_set(4, 1, 3));
  ASSERT_TRUE(e.has_value());
  EXPECT_EQ(e->sharers, 1u << 2);
}

TEST(SparseDirectory, FullSetDisplacesLru) {
  SparseDirectory d(cfg(4, 2));
  d.allocate_silent(in_set(4, 2, 1), 1, std::nullopt);
  d.allocate_silent(in_set(4, 2, 2), 2, std::nullopt);
  auto victim = d.allocate_silent(in_set(4, 2, 3), 4, std::nullopt);
  ASSERT_TRUE(victim.has_value());
  EXPECT_EQ(victim->tag, in_set(4, 2, 1));
  EXPECT_EQ(d.occupancy(), 2u);
  EXPECT_FALSE(d.lookup(in_set(4, 2, 1)).has_value());
}

TEST(SparseDirectory, UpdateSharers) {
  SparseDirectory d(cfg(4, 2));
  const BlockAddress a = in_set(4, 0, 5);
  d.allocate_silent(a, 1u << 1, std::nullopt);
  d.update_sharers(a, 3, std::nullopt, std::nullopt);
  EXPECT_EQ(d.peek(a)->sharers, (1u << 1) | (1u << 3));
  d.update_sharers(a, std::nullopt, 1, std::nullopt);
  d.update_sharers(a, std::nullopt, 3, std::nullopt);
  EXPECT_EQ(d.peek(a), nullptr);
}

TEST(SparseDirectory, UpdateOnForgottenTagThrowsMissingEntry) {
  SparseDirectory d(cfg(1, 1));
  d.allocate_silent(in_set(1, 0, 1), 1, std::nullopt);
  d.allocate_silent(in_set(1, 0, 2), 1, std::nullopt);
  EXPECT_THROW(d.update_sharers(in_set(1, 0, 1), 2, std::nullopt, std::nullopt), MissingEntry);
}

TEST(SparseDirectory, RemovingSilverOwnerClearsAnnotation) {
  SparseDirectory d(cfg(4, 2));
  const BlockAddress a = in_set(4, 0, 1);
  d.allocate_silent(a, 0b11, 0u);
  d.update_sharers(a, std::nullopt, 0, std::nullopt);
  EXPECT_FALSE(d.peek(a)->silver_owner.has_value());
}

TEST(SparseDirectory, EntryBudgetGeometry) {
  const DirConfig c = dir_config_for_entries(128, 8, 4);
  EXPECT_EQ(c.entries(), 128u);
  EXPECT_EQ(c.ways, 8u);
  const DirConfig one = dir_config_for_entries(1, 8, 4);
  EXPECT_EQ(one.entries(), 1u);
}

TEST(SparseDirectory, PropertyMatchesReferenceLru) {
  testgen::Rng rng(17);
  const std::uint32_t sets = 8, ways = 4;
  SparseDirectory d(cfg(sets, ways));
  // oracle: per set, a most-recent-first list of tags
  std::map<std::uint32_t, std::list<std::uint64_t>> ref;
  for (int i = 0; i < 50000; ++i) {
    const std::uint32_t s = static_cast<std::uint32_t>(rng.below(sets));
    const std::uint64_t t = rng.below(10);
    const BlockAddress a = in_set(sets, s, t);
    auto& l = ref[s];
    auto it = std::find(l.begin(), l.end(), t);
    if (rng.coin(0.5)) {
      const bool hit = d.lookup(a).has_value();
      ASSERT_EQ(hit, it != l.end());
      if (hit) l.splice(l.begin(), l, it);
    } else if (it == l.end()) {
      auto victim = d.allocate_silent(a, 1, std::nullopt);
      if (l.size() == ways) {
        ASSERT_TRUE(victim.has_value());
        ASSERT_EQ(victim->tag, in_set(sets, s, l.back()));
        l.pop_back();
      } else {
        ASSERT_FALSE(victim.has_value());
      }
      l.push_front(t);
    }
  }
  std::uint64_t total = 0;
  for (const auto& [s, l] : ref) total += l.size();
  EXPECT_EQ(d.occupancy(), total);
}
