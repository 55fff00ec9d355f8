#include <gtest/gtest.h>

#include <sstream>

#include "mcsim/checker.hpp"

using namespace mcsim;

namespace {

CheckBounds bounds(const std::string& proto, std::uint32_t budget, Fault f = Fault::None) {
  CheckBounds b;
  b.protocol = proto;
  b.budget = budget;
  b.fault = f;
  return b;
}

void expect_caught(const std::string& proto, Fault f) {
  const CheckBounds b = bounds(proto, 3, f);
  const CheckReport r = explore(b);
  ASSERT_FALSE(r.ok) << to_string(f);
  ASSERT_TRUE(r.violation);
  ASSERT_FALSE(r.trace.empty());
  // the replay reaches the same violation from scratch
  const SystemConfig cfg = checker_config(b, r.dir_entries);
  const auto v = replay(cfg, proto, r.trace);
  ASSERT_TRUE(v);
  EXPECT_EQ(v->kind, r.violation->kind);
  EXPECT_EQ(v->addr, r.violation->addr);
  // and survives the text format
  std::istringstream in(format_replay(r.trace, cfg.shape));
  EXPECT_EQ(parse_replay(in, cfg.shape), r.trace);
}

class CleanProtocol : public ::testing::TestWithParam<std::string> {};

}  // namespace

TEST_P(CleanProtocol, NoViolationsAtBudgetThree) {
  const CheckReport r = explore(bounds(GetParam(), 3));
  EXPECT_TRUE(r.ok) << (r.violation ? describe(*r.violation) : "");
  EXPECT_GT(r.states, 1000u);
  EXPECT_EQ(r.dir_entries, 1u);  // the last phase explored
}

TEST_P(CleanProtocol, ReductionPreservesVerdictAndPrunes) {
  CheckBounds full = bounds(GetParam(), 2);
  full.reduce = false;
  const CheckReport a = explore(full);
  const CheckReport b = explore(bounds(GetParam(), 2));
  EXPECT_TRUE(a.ok);
  EXPECT_TRUE(b.ok);
  EXPECT_LE(b.states, a.states);
}

TEST_P(CleanProtocol, OneChipOneBlock) {
  CheckBounds b = bounds(GetParam(), 4);
  b.chips = 1;
  b.blocks = 1;
  EXPECT_TRUE(explore(b).ok);
}

TEST_P(CleanProtocol, StateCapThrows) {
  CheckBounds b = bounds(GetParam(), 4);
  b.max_states = 50;
  EXPECT_THROW(explore(b), BudgetExceeded);
}

INSTANTIATE_TEST_SUITE_P(Protocols, CleanProtocol, ::testing::Values("rainbow", "hta"));

TEST(CheckerFaults, DropToken) { expect_caught("rainbow", Fault::DropToken); }
TEST(CheckerFaults, SkipFllcDecrement) { expect_caught("rainbow", Fault::SkipFllcDecrement); }
TEST(CheckerFaults, MissingInvalidation) { expect_caught("rainbow", Fault::MissingInvalidation); }
TEST(CheckerFaults, SilverDoubleGrant) { expect_caught("rainbow", Fault::SilverDoubleGrant); }
TEST(CheckerFaults, HtaInclusivityBreak) { expect_caught("hta", Fault::HtaInclusivityBreak); }

TEST(CheckerBounds, Rejected) {
  CheckBounds b;
  b.chips = 3;
  EXPECT_THROW(b.validate(), ConfigError);
  b = {};
  b.budget = 9;
  EXPECT_THROW(b.validate(), ConfigError);
  b = {};
  b.blocks = 0;
  EXPECT_THROW(b.validate(), ConfigError);
}

TEST(CheckerBounds, PressureBudgetAppliesToSecondPass) {
  CheckBounds b = bounds("rainbow", 3);
  b.pressure_budget = 2;
  const CheckReport r = explore(b);
  ASSERT_TRUE(r.ok);
  ASSERT_EQ(r.phases.size(), 2u);
  EXPECT_EQ(r.phases[0].rfind("8-entry directories: ", 0), 0u);
  EXPECT_EQ(r.phases[1].rfind("1-entry directories, budget 2: ", 0), 0u);
  const CheckReport same = explore(bounds("rainbow", 2));
  EXPECT_LT(r.states, same.states + explore(bounds("rainbow", 3)).states);
}

TEST(CheckerReplay, RejectsGarbage) {
  const SystemShape s = checker_config(CheckBounds{}, 8).shape;
  std::istringstream in("@deliver nowhere\n");
  EXPECT_THROW(parse_replay(in, s), std::exception);
}
