#include <gtest/gtest.h>

#include "drive.hpp"
#include "gen.hpp"
#include "mcsim/rainbow.hpp"
#include "mcsim/tokens.hpp"

using namespace mcsim;
using mcsim::rainbow::RainbowProtocol;

namespace {

const RainbowProtocol& rb(const Driver& d) { return static_cast<const RainbowProtocol&>(*d.p); }

TokenSet held(const Driver& d, std::uint64_t block) {
  const auto& s = d.p->config().shape;
  TokenSet t = rb(d).memory_tokens(d.addr(block));
  for (std::uint32_t c = 0; c < s.total_cores(); ++c) t += rb(d).private_tokens(c, d.addr(block));
  for (std::uint32_t k = 0; k < s.num_chips; ++k) t += rb(d).llc_tokens(k, d.addr(block));
  return t;
}

}  // namespace

TEST(Rainbow, ColdReadComesFromMemory) {
  Driver d("rainbow", default_config(2));
  const Completion c = d.access(0, Op::Read, 0);
  EXPECT_EQ(c.source, ServiceSource::Memory);
  EXPECT_EQ(c.version, 0u);
  EXPECT_TRUE(rb(d).private_tokens(0, d.addr(0)).readable());
  EXPECT_EQ(held(d, 0), full_set(d.p->config().shape));
  EXPECT_TRUE(d.audit().empty());
}

TEST(Rainbow, WriteCollectsEveryToken) {
  Driver d("rainbow", default_config(2));
  d.access(0, Op::Read, 0);
  d.access(1, Op::Read, 0);
  d.access(4, Op::Read, 0);
  const Completion w = d.access(5, Op::Write, 0);
  EXPECT_EQ(w.version, 1u);
  EXPECT_EQ(rb(d).private_tokens(5, d.addr(0)), full_set(d.p->config().shape));
  for (std::uint32_t c : {0u, 1u, 4u}) EXPECT_TRUE(rb(d).private_tokens(c, d.addr(0)).empty());
  EXPECT_TRUE(d.audit().empty());
}

TEST(Rainbow, RepeatReadHitsL1) {
  Driver d("rainbow", default_config(2));
  d.access(0, Op::Write, 0);
  const Completion c = d.access(0, Op::Read, 0);
  EXPECT_EQ(c.source, ServiceSource::L1);
  EXPECT_EQ(c.version, 1u);
}

TEST(Rainbow, RemoteChipServesDirtyData) {
  Driver d("rainbow", default_config(2));
  d.access(0, Op::Write, 0);
  const Completion c = d.access(4, Op::Read, 0);
  EXPECT_EQ(c.version, 1u);
  EXPECT_EQ(c.source, ServiceSource::RemoteChip);
  EXPECT_GE(d.p->counters().llc_misses, 2u);
}

TEST(Rainbow, TinyDirectoriesNeverInvalidate) {
  SystemConfig cfg = default_config(2);
  cfg.dllc_entries_per_bank = 1;
  cfg.dmem_entries = 1;
  cfg.dir_ways = 1;
  Driver d("rainbow", cfg);
  for (std::uint64_t b = 0; b < 32; ++b)
    for (std::uint32_t c : {0u, 1u, 4u, 5u}) d.access(c, Op::Read, b);
  for (std::uint64_t b = 0; b < 32; ++b)
    for (std::uint32_t c : {0u, 1u, 4u, 5u}) EXPECT_EQ(d.access(c, Op::Read, b).source, ServiceSource::L1) << b;
  EXPECT_GT(d.p->counters().silent_dir_evictions, 0u);
  EXPECT_EQ(d.p->counters().external_invalidations, 0u);
  EXPECT_EQ(d.p->counters().ext_inval_misses, 0u);
  EXPECT_TRUE(d.audit().empty());
}

// Independent oracle: with one access in flight at a time, every read
// returns the most recent write and every write makes a fresh version.
class Linearizable : public ::testing::TestWithParam<std::tuple<std::string, std::uint32_t, std::uint32_t>> {};

TEST_P(Linearizable, RandomOpsMatchSequentialMemory) {
  const auto [proto, chips, entries] = GetParam();
  SystemConfig cfg = default_config(chips);
  cfg.l1 = {2, 1};
  cfg.l2 = {2, 1};
  cfg.llc_bank = {2, 1};
  cfg.dllc_entries_per_bank = entries;
  cfg.dmem_entries = entries;
  cfg.probe_filter_entries = entries;
  cfg.dir_ways = 1;
  Driver d(proto, cfg);
  testgen::Rng rng(chips * 100 + entries);
  std::map<std::uint64_t, std::uint64_t> last;
  const std::uint32_t cores = cfg.shape.total_cores();
  for (int i = 0; i < 4000; ++i) {
    const std::uint32_t core = rng.range(0, cores - 1);
    const std::uint64_t block = rng.below(24);
    const Op op = rng.coin(0.35) ? Op::Write : Op::Read;
    const Completion c = d.access(core, op, block);
    if (op == Op::Write) {
      ASSERT_GT(c.version, last[block]) << "step " << i;
      last[block] = c.version;
    } else {
      ASSERT_EQ(c.version, last[block]) << "step " << i << " block " << block;
    }
    if (i % 97 == 0) {
      const auto v = d.audit();
      ASSERT_TRUE(v.empty()) << describe(v.front());
    }
  }
  const auto v = d.audit();
  ASSERT_TRUE(v.empty()) << describe(v.front());
  if (proto == "rainbow") {
    EXPECT_EQ(d.p->counters().external_invalidations, 0u);
    for (std::uint64_t b = 0; b < 24; ++b) EXPECT_EQ(held(d, b), full_set(cfg.shape)) << b;
  }
}

INSTANTIATE_TEST_SUITE_P(Shapes, Linearizable,
                         ::testing::Combine(::testing::Values("rainbow", "hta"), ::testing::Values(2u, 4u),
                                            ::testing::Values(1u, 8u)));
