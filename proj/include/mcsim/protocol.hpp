#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mcsim/config.hpp"
#include "mcsim/message.hpp"

namespace mcsim {

enum class ViolationKind : std::uint8_t {
  Conservation,
  Swmr,
  FilterBalance,
  DirectoryTracking,
  Inclusivity,
  ValueCoherence,
  Liveness,
  Protocol,
};

const char* to_string(ViolationKind k);

struct Violation {
  ViolationKind kind;
  BlockAddress addr;
  std::string detail;
};

std::string describe(const Violation& v);

struct Completion {
  std::uint32_t core = 0;  // global core index
  Op op = Op::Read;
  BlockAddress addr;
  std::uint64_t version = 0;  // value read, or value produced by the write
  ServiceSource source = ServiceSource::L1;
};

struct Send {
  Message msg;
  Cycle delay = 0;  // controller occupancy before the message enters the network
};

// Collects what one handler invocation produced.
struct Outbox {
  std::vector<Send> sends;
  std::vector<Completion> completions;

  void send(Message m, Cycle delay) { sends.push_back({std::move(m), delay}); }
  void clear() {
    sends.clear();
    completions.clear();
  }
};

struct AccessResult {
  bool hit = false;
  Cycle latency = 0;  // hit latency, or lookup time before the miss request leaves
  ServiceSource source = ServiceSource::L1;
  std::uint64_t version = 0;
};

// Counters a protocol maintains; the engine adds timing and traffic.
struct ProtocolCounters {
  std::uint64_t l1_misses = 0;
  std::uint64_t onchip_misses = 0;  // missed both private levels
  std::uint64_t llc_misses = 0;     // request left the chip
  std::uint64_t ext_inval_misses = 0;  // misses on copies lost to directory evictions
  std::uint64_t external_invalidations = 0;  // cached copies destroyed by directory evictions
  std::uint64_t reconstructions_llc = 0;
  std::uint64_t reconstructions_mem = 0;
  std::uint64_t fllc_false_positives = 0;
  std::uint64_t fmem_false_positives = 0;
  std::uint64_t filter_overflows = 0;
  std::uint64_t silent_dir_evictions = 0;
  std::uint64_t probe_filter_evictions = 0;
  std::uint64_t llc_evictions = 0;
  std::uint64_t system_invalidations = 0;
  std::uint64_t silver_recalls = 0;
  std::uint64_t memory_reads = 0;
  std::uint64_t memory_writes = 0;
  std::uint64_t unicasts = 0;
  std::uint64_t multicasts = 0;
  std::uint64_t broadcasts = 0;

  std::vector<std::pair<std::string, std::uint64_t>> rows() const;
};

class Protocol {
 public:
  virtual ~Protocol() = default;

  virtual const char* name() const = 0;
  virtual const SystemConfig& config() const = 0;

  // A core starts an access. Hits complete locally; misses emit a request.
  virtual AccessResult access(std::uint32_t core, Op op, BlockAddress addr, Cycle now, Outbox& out) = 0;
  virtual void deliver(const Message& msg, Cycle now, Outbox& out) = 0;

  virtual std::unique_ptr<Protocol> clone() const = 0;

  // Appends a canonical encoding of all controller state (used for hashing).
  virtual void encode_state(std::vector<std::uint64_t>& out) const = 0;

  // Checks per-block invariants. Filter/directory bookkeeping is only
  // compared against ground truth when the network is quiescent.
  virtual void audit(std::span<const Message> in_flight, bool quiescent, std::vector<Violation>& out) const = 0;

  virtual const ProtocolCounters& counters() const = 0;

  // Number of cores with an access still outstanding.
  virtual std::uint32_t busy_cores() const = 0;
  virtual bool core_busy(std::uint32_t core) const = 0;
  // Value a read would return from L1 without changing any state, if it hits there.
  virtual std::optional<std::uint64_t> l1_read_hit(std::uint32_t core, BlockAddress a) const = 0;
};

std::unique_ptr<Protocol> make_rainbow(const SystemConfig& cfg);
std::unique_ptr<Protocol> make_hta(const SystemConfig& cfg);
std::unique_ptr<Protocol> make_protocol(const std::string& name, const SystemConfig& cfg);

}  // namespace mcsim
