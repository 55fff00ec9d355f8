#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mcsim/commands.hpp"

using namespace mcsim;
using namespace mcsim::cli;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("mcsim_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string path(const std::string& f) const { return (dir / f).string(); }

  std::string write(const std::string& f, const std::string& body) const {
    std::ofstream(path(f)) << body;
    return path(f);
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  std::string trace(Pattern p = Pattern::SharedUniform, std::uint64_t fp = 64, std::uint64_t ops = 200) {
    GenerateArgs g;
    g.spec.pattern = p;
    g.spec.footprint_blocks = fp;
    g.spec.ops_per_core = ops;
    g.spec.shared_fraction = 0.5;
    g.out = path("t.trace");
    std::ostringstream log, err;
    EXPECT_EQ(cmd_generate(g, log, err), kOk) << err.str();
    return g.out;
  }

  fs::path dir;
  std::ostringstream log, err;
};

}  // namespace

TEST_F(Cli, SimulateWritesReports) {
  SimulateArgs a;
  a.trace = trace();
  a.out = path("out");
  ASSERT_EQ(cmd_simulate(a, log, err), kOk) << err.str();
  const std::string stats = slurp(path("out/stats.csv"));
  EXPECT_EQ(stats.rfind("counter,value\nprotocol,rainbow\n", 0), 0u);
  EXPECT_NE(stats.find("\naccesses,1600\n"), std::string::npos);
  EXPECT_EQ(slurp(path("out/latency_breakdown.csv")).rfind("source,accesses,cycles,share\n", 0), 0u);
  EXPECT_EQ(slurp(path("out/links.csv")).rfind("link,flits,busy_cycles,utilization\n", 0), 0u);
}

TEST_F(Cli, SimulateIsByteIdentical) {
  SimulateArgs a;
  a.trace = trace(Pattern::Migratory);
  a.protocol = "hta";
  a.out = path("a");
  ASSERT_EQ(cmd_simulate(a, log, err), kOk);
  a.out = path("b");
  ASSERT_EQ(cmd_simulate(a, log, err), kOk);
  for (const char* f : {"stats.csv", "latency_breakdown.csv", "links.csv"})
    EXPECT_EQ(slurp(path(std::string("a/") + f)), slurp(path(std::string("b/") + f))) << f;
}

TEST_F(Cli, MissingTraceNamesPath) {
  SimulateArgs a;
  a.trace = path("nope.trace");
  a.out = path("out");
  EXPECT_EQ(cmd_simulate(a, log, err), kInputError);
  EXPECT_NE(err.str().find(a.trace), std::string::npos);
}

TEST_F(Cli, MalformedTraceReportsLine) {
  SimulateArgs a;
  a.trace = write("bad.trace", "0 R 0x40\n3 X 0x1040\n");
  a.out = path("out");
  EXPECT_EQ(cmd_simulate(a, log, err), kInputError);
  EXPECT_NE(err.str().find("line 2"), std::string::npos) << err.str();
}

TEST_F(Cli, BadConfigAndProtocol) {
  SimulateArgs a;
  a.trace = trace();
  a.out = path("out");
  a.config = write("bad.cfg", "chips = 2\nwidget = 7\n");
  EXPECT_EQ(cmd_simulate(a, log, err), kInputError);
  a.config.clear();
  a.protocol = "mesi";
  EXPECT_EQ(cmd_simulate(a, log, err), kInputError);
}

TEST_F(Cli, InjectedFaultIsRunViolation) {
  SimulateArgs a;
  a.trace = trace(Pattern::SharedUniform, 1024, 400);
  a.out = path("out");
  a.config = write("f.cfg", "fault = drop-token\n[cache.l1]\nkb = 1\nassoc = 1\n[cache.l2]\nkb = 2\nassoc = 1\n");
  EXPECT_EQ(cmd_simulate(a, log, err), kRunViolation);
  EXPECT_NE(err.str().find("conservation"), std::string::npos) << err.str();
}

TEST_F(Cli, SweepSingleSize) {
  SweepArgs a;
  a.trace = trace();
  a.sizes = "S";
  a.out = path("sw");
  ASSERT_EQ(cmd_sweep(a, log, err), kOk) << err.str();
  std::istringstream csv(slurp(path("sw/sweep.csv")));
  std::string header, row, extra;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_FALSE(std::getline(csv, extra));
  EXPECT_EQ(header.rfind("size,", 0), 0u);
  EXPECT_EQ(row.rfind("S,", 0), 0u);
  EXPECT_NE(header.find("hta_ext_inval_misses"), std::string::npos);
  EXPECT_NE(header.find("rainbow_completion_cycle"), std::string::npos);
}

TEST_F(Cli, SweepIsIndependentOfJobCount) {
  SweepArgs a;
  a.trace = trace(Pattern::ProducerConsumer);
  a.jobs = 1;
  a.out = path("one");
  ASSERT_EQ(cmd_sweep(a, log, err), kOk);
  a.jobs = 6;
  a.out = path("six");
  ASSERT_EQ(cmd_sweep(a, log, err), kOk);
  EXPECT_EQ(slurp(path("one/sweep.csv")), slurp(path("six/sweep.csv")));
}

TEST_F(Cli, SweepRejectsBadSizes) {
  SweepArgs a;
  a.trace = trace();
  a.sizes = "L,Q";
  a.out = path("sw");
  EXPECT_EQ(cmd_sweep(a, log, err), kInputError);
}

TEST_F(Cli, CheckBudgetZero) {
  CheckArgs a;
  a.bounds.budget = 0;
  a.out = path("ck");
  EXPECT_EQ(cmd_check(a, log, err), kOk);
}

TEST_F(Cli, CheckCleanAndBudgetCap) {
  CheckArgs a;
  a.bounds.budget = 2;
  a.out = path("ck");
  EXPECT_EQ(cmd_check(a, log, err), kOk) << err.str();
  a.bounds.budget = 4;
  a.bounds.max_states = 10;
  EXPECT_EQ(cmd_check(a, log, err), kBudgetExceeded);
  a.bounds.chips = 5;
  EXPECT_EQ(cmd_check(a, log, err), kInputError);
}

TEST_F(Cli, CheckViolationWritesReplayThatReproduces) {
  CheckArgs a;
  a.bounds.budget = 3;
  a.bounds.fault = Fault::SilverDoubleGrant;
  a.out = path("ck");
  ASSERT_EQ(cmd_check(a, log, err), kCheckViolation);
  const std::string file = path("ck/replay-rainbow.trace");
  const std::string body = slurp(file);
  EXPECT_EQ(body.rfind("# protocol=rainbow chips=2 cores=2 dir_entries=", 0), 0u) << body;
  EXPECT_NE(body.find("fault=silver-double-grant"), std::string::npos);
  EXPECT_NE(body.find("\n# violation: "), std::string::npos);
  ReplayArgs r;
  r.file = file;
  std::ostringstream rlog;
  EXPECT_EQ(cmd_replay(r, rlog, err), kCheckViolation);
  EXPECT_NE(rlog.str().find("reproduced"), std::string::npos);
  r.file = path("missing.trace");
  EXPECT_EQ(cmd_replay(r, rlog, err), kInputError);
}

TEST_F(Cli, GenerateToStream) {
  GenerateArgs g;
  g.spec.ops_per_core = 3;
  std::ostringstream out;
  ASSERT_EQ(cmd_generate(g, out, err), kOk);
  std::istringstream in(out.str());
  EXPECT_EQ(parse_trace(in).size(), 24u);
  g.spec.footprint_blocks = 0;
  EXPECT_EQ(cmd_generate(g, out, err), kInputError);
}
