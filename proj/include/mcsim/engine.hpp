#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mcsim/protocol.hpp"
#include "mcsim/topology.hpp"
#include "mcsim/workload.hpp"

namespace mcsim {

// Raised when a periodic or final audit finds broken invariants.
class AuditFailure : public ProtocolViolation {
 public:
  AuditFailure(Cycle at, std::vector<Violation> v);
  Cycle cycle() const { return cycle_; }
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  Cycle cycle_;
  std::vector<Violation> violations_;
};

struct LinkStats {
  LinkId link;
  std::uint64_t flits = 0;
  std::uint64_t busy_cycles = 0;
  double utilization = 0.0;
};

struct RunStats {
  std::string protocol;
  Cycle completion_cycle = 0;
  std::uint64_t accesses = 0;
  std::uint64_t total_latency = 0;  // sum of end-to-end access latencies
  std::array<std::uint64_t, kServiceSources> latency_by_source{};
  std::array<std::uint64_t, kServiceSources> accesses_by_source{};
  std::uint64_t messages = 0;
  std::uint64_t message_bytes = 0;
  std::uint64_t flits = 0;  // flit-hops, summed over every link
  std::uint64_t audits = 0;
  ProtocolCounters counters;
  std::vector<LinkStats> links;

  double avg_latency() const { return accesses ? double(total_latency) / double(accesses) : 0.0; }
};


struct RunOptions {
  Cycle audit_interval = 10'000;  // 0 disables periodic audits
  bool final_audit = true;
};

RunStats run(const SystemConfig& cfg, const std::string& protocol, const Trace& trace, const RunOptions& opt = {});

}  // namespace mcsim
