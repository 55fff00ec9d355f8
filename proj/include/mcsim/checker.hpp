#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcsim/protocol.hpp"

namespace mcsim {

class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckBounds {
  std::uint32_t chips = 2;
  std::uint32_t cores = 2;  // per chip
  std::uint32_t blocks = 2;
  std::uint32_t budget = 6;  // memory operations issued in total
  std::uint64_t max_states = 80'000'000;  // ~3 GB of visited hashes at the cap
  std::uint32_t dir_entries = 8;
  std::uint32_t pressure_budget = 0;  // budget of the 1-entry pass; 0 = budget
  std::string protocol = "rainbow";
  Fault fault = Fault::None;
  bool reduce = true;  // persistent-set reduction over independent deliveries
  std::uint32_t block_stride = 1;  // distance between explored blocks, in blocks

  void validate() const;
};

// One transition: a core issuing an access, or the head of a channel being delivered.
struct CheckStep {
  bool deliver = false;
  std::uint32_t core = 0;  // global
  Op op = Op::Read;
  BlockAddress addr;
  AgentId src;
  AgentId dst;

  friend bool operator==(const CheckStep&, const CheckStep&) = default;
};

struct CheckReport {
  bool ok = true;
  std::uint64_t states = 0;
  std::uint64_t transitions = 0;
  std::uint32_t max_depth = 0;
  std::string phase;  // which directory configuration produced the result
  std::vector<std::string> phases;  // "<configuration>: <states> states" per pass explored
  std::uint32_t dir_entries = 0;
  std::uint32_t block_stride = 1;
  std::optional<Violation> violation;
  std::vector<CheckStep> trace;
};

// Tiny machine used for exhaustive exploration: one bank per chip and
// single-line caches so that evictions happen constantly.
SystemConfig checker_config(const CheckBounds& b, std::uint32_t dir_entries);

// Explores every interleaving for one configuration.
CheckReport explore_once(const SystemConfig& cfg, const CheckBounds& b);

// Default directory sizes, then 1-entry directories. Stops at the first violation.
CheckReport explore(const CheckBounds& b);

// Replays a violating step list and returns the violation it reaches.
std::optional<Violation> replay(const SystemConfig& cfg, const std::string& protocol, const std::vector<CheckStep>& steps);

// Trace-format issue lines plus `@deliver src>dst` annotations.
std::string format_replay(const std::vector<CheckStep>& steps, const SystemShape& shape);
std::vector<CheckStep> parse_replay(std::istream& in, const SystemShape& shape);

}  // namespace mcsim
