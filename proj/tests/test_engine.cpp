#include <gtest/gtest.h>

#include <numeric>

#include "mcsim/engine.hpp"

using namespace mcsim;

namespace {

TraceRecord rec(std::uint32_t core, Op op, std::uint64_t block) { return {core, op, BlockAddress(block * 64)}; }

Trace mixed(std::uint32_t cores, std::uint32_t chips = 2) {
  GeneratorSpec g;
  g.pattern = Pattern::SharedUniform;
  g.footprint_blocks = 64;
  g.ops_per_core = 300;
  g.shared_fraction = 0.5;
  g.seed = 4;
  SystemShape s = default_config(chips).shape;
  s.cores_per_chip = cores;
  return generate(g, s);
}

class EngineBoth : public ::testing::TestWithParam<std::string> {};

}  // namespace

TEST_P(EngineBoth, EmptyTrace) {
  const RunStats s = run(default_config(2), GetParam(), {});
  EXPECT_EQ(s.completion_cycle, 0u);
  EXPECT_EQ(s.accesses, 0u);
  EXPECT_EQ(s.messages, 0u);
  for (const auto& [k, v] : s.counters.rows()) EXPECT_EQ(v, 0u) << k;
}

TEST_P(EngineBoth, ColdReadPaysMemory) {
  const SystemConfig c = default_config(2);
  const RunStats s = run(c, GetParam(), {rec(0, Op::Read, 1)});
  EXPECT_EQ(s.accesses, 1u);
  EXPECT_GE(s.total_latency, c.latency.memory_cycles);
  EXPECT_EQ(s.accesses_by_source[static_cast<int>(ServiceSource::Memory)], 1u);
  EXPECT_EQ(s.completion_cycle, s.total_latency);
}

TEST_P(EngineBoth, SecondReadHitsL1) {
  const SystemConfig c = default_config(2);
  const RunStats s = run(c, GetParam(), {rec(0, Op::Read, 1), rec(0, Op::Read, 1)});
  EXPECT_EQ(s.accesses_by_source[static_cast<int>(ServiceSource::L1)], 1u);
  EXPECT_EQ(s.latency_by_source[static_cast<int>(ServiceSource::L1)], c.latency.l1_cycles);
  // blocking core, one idle cycle between records
  EXPECT_EQ(s.completion_cycle, s.total_latency + 1);
}

TEST_P(EngineBoth, AccountingClosure) {
  const RunStats s = run(default_config(2), GetParam(), mixed(4));
  EXPECT_EQ(std::accumulate(s.latency_by_source.begin(), s.latency_by_source.end(), std::uint64_t{0}), s.total_latency);
  EXPECT_EQ(std::accumulate(s.accesses_by_source.begin(), s.accesses_by_source.end(), std::uint64_t{0}), s.accesses);
  EXPECT_EQ(s.accesses, 8u * 300u);
  std::uint64_t link_flits = 0;
  for (const auto& l : s.links) {
    link_flits += l.flits;
    EXPECT_LE(l.utilization, 1.0);
  }
  EXPECT_EQ(link_flits, s.flits);
}

TEST_P(EngineBoth, Deterministic) {
  const Trace t = mixed(4);
  const RunStats a = run(default_config(2), GetParam(), t);
  const RunStats b = run(default_config(2), GetParam(), t);
  EXPECT_EQ(a.completion_cycle, b.completion_cycle);
  EXPECT_EQ(a.total_latency, b.total_latency);
  EXPECT_EQ(a.latency_by_source, b.latency_by_source);
  EXPECT_EQ(a.flits, b.flits);
  EXPECT_EQ(a.counters.rows(), b.counters.rows());
}

TEST_P(EngineBoth, PeriodicAuditsRun) {
  RunOptions o;
  o.audit_interval = 100;
  const RunStats s = run(default_config(2), GetParam(), mixed(4), o);
  // one audit per interval boundary that some event crosses, plus the final one
  EXPECT_GT(s.audits, 10u);
  EXPECT_LE(s.audits, s.completion_cycle / 100 + 2);
}

TEST_P(EngineBoth, FourChips) {
  const RunStats s = run(default_config(4), GetParam(), mixed(4, 4));
  EXPECT_EQ(s.accesses, 16u * 300u);
}

TEST_P(EngineBoth, RejectsBadTraces) {
  EXPECT_THROW(run(default_config(2), GetParam(), {rec(99, Op::Read, 1)}), ConfigError);
  EXPECT_THROW(run(default_config(2), GetParam(), {{0, Op::Read, BlockAddress(3)}}), ConfigError);
}

INSTANTIATE_TEST_SUITE_P(Protocols, EngineBoth, ::testing::Values("rainbow", "hta"));

TEST(Engine, UnknownProtocol) { EXPECT_THROW(run(default_config(2), "mesi", {}), ConfigError); }

TEST(Engine, InjectedTokenLossIsCaught) {
  SystemConfig c = default_config(2);
  c.fault = Fault::DropToken;
  c.l1 = {4, 1};
  c.l2 = {4, 1};
  GeneratorSpec g;
  g.pattern = Pattern::SharedUniform;
  g.footprint_blocks = 256;
  g.ops_per_core = 500;
  g.shared_fraction = 0.5;
  EXPECT_THROW(run(c, "rainbow", generate(g, c.shape)), ProtocolViolation);
}

TEST(Engine, InjectedInclusivityBreakIsCaught) {
  SystemConfig c = default_config(2);
  c.fault = Fault::HtaInclusivityBreak;
  c.probe_filter_entries = 8;
  c.dir_ways = 8;
  GeneratorSpec g;
  g.pattern = Pattern::SharedUniform;
  g.footprint_blocks = 256;
  g.ops_per_core = 200;
  g.shared_fraction = 0.5;
  EXPECT_THROW(run(c, "hta", generate(g, c.shape)), ProtocolViolation);
}
