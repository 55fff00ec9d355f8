#include <gtest/gtest.h>

#include "drive.hpp"
#include "mcsim/hta.hpp"

using namespace mcsim;
using namespace mcsim::hta;

namespace {

const HtaProtocol& hp(const Driver& d) { return static_cast<const HtaProtocol&>(*d.p); }

SystemConfig tiny_pf() {
  SystemConfig c = default_config(2);
  c.probe_filter_entries = 1;
  c.dir_ways = 1;
  return c;
}

}  // namespace

TEST(Hta, ColdReadTrackedByProbeFilter) {
  Driver d("hta", default_config(2));
  const Completion c = d.access(0, Op::Read, 0);
  EXPECT_EQ(c.source, ServiceSource::Memory);
  const PfEntry* e = hp(d).pf_entry(d.addr(0));
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(e->owner, 0u);
  EXPECT_TRUE(d.audit().empty());
}

TEST(Hta, WriteMakesChipExclusiveOwner) {
  Driver d("hta", default_config(2));
  d.access(4, Op::Read, 0);
  d.access(0, Op::Read, 0);
  const Completion w = d.access(5, Op::Write, 0);
  EXPECT_EQ(w.version, 1u);
  const PfEntry* e = hp(d).pf_entry(d.addr(0));
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(e->kind, PfKind::Exclusive);
  EXPECT_EQ(e->owner, 1u);
  EXPECT_EQ(d.p->l1_read_hit(0, d.addr(0)), std::nullopt);
  EXPECT_TRUE(d.audit().empty());
}

TEST(Hta, RemoteReadOfDirtyBlock) {
  Driver d("hta", default_config(2));
  d.access(0, Op::Write, 0);
  const Completion c = d.access(4, Op::Read, 0);
  EXPECT_EQ(c.version, 1u);
  EXPECT_EQ(c.source, ServiceSource::RemoteChip);
  const PfEntry* e = hp(d).pf_entry(d.addr(0));
  ASSERT_NE(e, nullptr);
  EXPECT_NE(e->kind, PfKind::Exclusive);
}

TEST(Hta, ProbeFilterEvictionInvalidatesCopies) {
  Driver d("hta", tiny_pf());
  d.access(0, Op::Read, 0);
  d.access(1, Op::Read, 0);
  // block 8 shares home chip 0 and the single probe-filter entry
  d.access(2, Op::Read, 8);
  EXPECT_EQ(d.p->counters().probe_filter_evictions, 1u);
  EXPECT_EQ(d.p->counters().external_invalidations, 2u);
  EXPECT_EQ(d.p->l1_read_hit(0, d.addr(0)), std::nullopt);
  const Completion c = d.access(0, Op::Read, 0);
  EXPECT_NE(c.source, ServiceSource::L1);
  EXPECT_EQ(d.p->counters().ext_inval_misses, 1u);
  EXPECT_TRUE(d.audit().empty());
}

TEST(Hta, EvictedDirtyDataReachesMemory) {
  Driver d("hta", tiny_pf());
  d.access(0, Op::Write, 0);
  d.access(0, Op::Write, 0);
  d.access(3, Op::Read, 8);
  EXPECT_EQ(hp(d).memory_version(d.addr(0)), 2u);
  EXPECT_EQ(d.access(5, Op::Read, 0).version, 2u);
}

TEST(Hta, InclusivityFaultIsDetected) {
  SystemConfig c = tiny_pf();
  c.fault = Fault::HtaInclusivityBreak;
  Driver d("hta", c);
  d.access(0, Op::Read, 0);
  d.access(2, Op::Read, 8);
  const auto v = d.audit();
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v.front().kind, ViolationKind::Inclusivity);
}
