#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "mcsim/checker.hpp"
#include "mcsim/workload.hpp"

namespace mcsim::cli {

enum Exit : int {
  kOk = 0,
  kCheckViolation = 1,
  kInputError = 2,
  kRunViolation = 3,
  kBudgetExceeded = 4,
};

struct SimulateArgs {
  std::string config;  // empty = built-in defaults
  std::string protocol = "rainbow";
  std::string trace;
  std::string out = ".";
};

struct SweepArgs {
  std::string config;
  std::string trace;
  std::string sizes = "L,M,S";
  std::string out = ".";
  unsigned jobs = 0;  // 0 = hardware concurrency
};

struct CheckArgs {
  CheckBounds bounds;
  std::string out = ".";  // directory for the replay file
};

struct ReplayArgs {
  std::string file;
};

struct GenerateArgs {
  GeneratorSpec spec;
  std::string config;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& log, std::ostream& err);
int cmd_sweep(const SweepArgs& a, std::ostream& log, std::ostream& err);
int cmd_check(const CheckArgs& a, std::ostream& log, std::ostream& err);
int cmd_replay(const ReplayArgs& a, std::ostream& log, std::ostream& err);
int cmd_generate(const GenerateArgs& a, std::ostream& log, std::ostream& err);

}  // namespace mcsim::cli
