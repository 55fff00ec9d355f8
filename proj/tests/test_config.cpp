#include <gtest/gtest.h>

#include <sstream>

#include "mcsim/config.hpp"

using namespace mcsim;

namespace {

SystemConfig parse(const std::string& s) {
  std::istringstream in(s);
  return parse_config(in);
}

}  // namespace

TEST(Config, DefaultsValidate) {
  for (std::uint32_t chips : {2u, 4u}) {
    const SystemConfig c = default_config(chips);
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.shape.num_chips, chips);
    EXPECT_EQ(c.latency.memory_cycles, 300u);
    EXPECT_EQ(c.l1.lines() * 64, 32u * 1024);
    EXPECT_EQ(c.l2.lines() * 64, 128u * 1024);
    EXPECT_EQ(c.llc_bank.lines() * 64 * c.shape.llc_banks_per_chip, 4u * 1024 * 1024);
  }
}

TEST(Config, ParsesSectionsAndComments) {
  const SystemConfig c = parse(
      "chips = 4  # four sockets\n"
      "fault = drop-token\n"
      "[cache.l1]\nkb = 64\nassoc = 8\n"
      "[dir]\ndllc_entries = 32\ndmem_entries = 1024\n"
      "[hta]\nprobe_filter_entries = \"4096\"\n");
  EXPECT_EQ(c.shape.num_chips, 4u);
  EXPECT_EQ(c.l1.ways, 8u);
  EXPECT_EQ(c.l1.lines() * 64, 64u * 1024);
  EXPECT_EQ(c.dllc_entries_per_bank, 32u);
  EXPECT_EQ(c.dmem_entries, 1024u);
  EXPECT_EQ(c.probe_filter_entries, 4096u);
  EXPECT_EQ(c.fault, Fault::DropToken);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse("chipz = 2\n"), ConfigError);
  EXPECT_THROW(parse("chips = two\n"), ConfigError);
  EXPECT_THROW(parse("chips\n"), ConfigError);
  EXPECT_THROW(parse("chips = 0\n"), ConfigError);
  EXPECT_THROW(parse("fault = gremlins\n"), ConfigError);
}

TEST(Config, MissingFile) { EXPECT_THROW(load_config("/nonexistent/x.cfg"), std::exception); }

TEST(SizeLadder, Values) {
  const SizeLevel l = size_level('L'), m = size_level('M'), s = size_level('S');
  EXPECT_EQ(l.probe_filter_entries, 131072u);
  EXPECT_EQ(m.probe_filter_entries, 16384u);
  EXPECT_EQ(s.probe_filter_entries, 4096u);
  EXPECT_EQ(l.dllc_entries_per_bank, 8192u);
  EXPECT_EQ(m.dllc_entries_per_bank, 128u);
  EXPECT_EQ(s.dllc_entries_per_bank, 32u);
  EXPECT_EQ(l.dmem_entries, 32768u);
  EXPECT_EQ(m.dmem_entries, 4096u);
  EXPECT_EQ(s.dmem_entries, 1024u);
  EXPECT_THROW(size_level('X'), ConfigError);
}

TEST(SizeLadder, ParseAndApply) {
  const auto v = parse_sizes("S,L");
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].label, 'S');
  SystemConfig c = default_config(2);
  apply(c, v[0]);
  EXPECT_EQ(c.probe_filter_entries, 4096u);
  EXPECT_EQ(c.dllc_entries_per_bank, 32u);
  EXPECT_EQ(c.dmem_entries, 1024u);
  EXPECT_NO_THROW(c.validate());
  EXPECT_THROW(parse_sizes(""), ConfigError);
  EXPECT_THROW(parse_sizes("L,,M"), ConfigError);
}
