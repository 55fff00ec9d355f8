#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mcsim/dlcbf.hpp"
#include "mcsim/sparse_directory.hpp"
#include "mcsim/types.hpp"

namespace mcsim {

struct CacheGeometry {
  std::uint32_t sets = 1;
  std::uint32_t ways = 1;  // 0 disables the level

  std::uint64_t lines() const { return std::uint64_t{sets} * ways; }
  static CacheGeometry from_kb(std::uint64_t kb, std::uint32_t ways, std::uint32_t block_size);
};

struct LatencyConfig {
  Cycle l1_cycles = 1;
  Cycle l2_cycles = 3;
  Cycle llc_bank_cycles = 5;
  Cycle memory_cycles = 300;
  Cycle link_cycle = 1;
  std::uint32_t link_width_bytes = 16;
  // Zero: overlapped with the co-located cache access.
  Cycle dir_access_cycles = 0;
  Cycle filter_access_cycles = 0;

  void validate() const;
};

struct TopologyConfig {
  std::uint32_t mesh_x = 2;
  std::uint32_t mesh_y = 2;
};

// Seeded protocol bugs used to prove the checkers catch them.
enum class Fault : std::uint8_t {
  None,
  DropToken,           // a private writeback loses one bronze
  SkipFllcDecrement,   // last private copy leaves without an F-LLC decrement
  MissingInvalidation, // a core ignores a token-recall request
  SilverDoubleGrant,   // external read grant does not debit the holder
  HtaInclusivityBreak, // probe-filter eviction skips the invalidation
};

const char* to_string(Fault f);
Fault fault_from_string(const std::string& s);

struct SystemConfig {
  SystemShape shape;
  CacheGeometry l1{128, 4};   // 32 KB, 4-way
  CacheGeometry l2{512, 4};   // 128 KB, 4-way
  CacheGeometry llc_bank{2048, 8};  // 4 MB / 4 banks, 8-way
  LatencyConfig latency;
  TopologyConfig topology;

  // Rainbow tracking structures.
  std::uint64_t dllc_entries_per_bank = 128;
  std::uint64_t dmem_entries = 4096;
  std::uint32_t dir_ways = 8;
  double filter_target_fpr = 0.05;
  std::uint64_t fllc_items = 0;  // 0 = derive from private cache capacity
  std::uint64_t fmem_items = 0;  // 0 = derive from chip cache capacity

  // HTA probe filter, entries per memory controller.
  std::uint64_t probe_filter_entries = 16384;

  Fault fault = Fault::None;

  void validate() const;

  DirConfig dllc_config() const;
  DirConfig dmem_config() const;
  DirConfig probe_filter_config() const;
  DlcbfConfig fllc_config() const;
  DlcbfConfig fmem_config() const;
};

// Baseline machine for a given chip count.
SystemConfig default_config(std::uint32_t chips);

// `key = value` lines, optional `[section]` prefixes, `#` comments.
// Keys: chips, cores.count, cache.l1.{kb,assoc}, cache.l2.{kb,assoc},
// llc.{mb,banks,assoc}, mem.cycles, net.{link_bytes,link_cycles}, mesh.{x,y},
// dir.{dllc_entries,dmem_entries,ways}, filter.fpr, hta.probe_filter_entries, fault.
SystemConfig parse_config(std::istream& in);
SystemConfig load_config(const std::string& path);

// Tracking-structure sizes for one rung of the L/M/S ladder.
struct SizeLevel {
  char label = 'L';
  std::uint64_t probe_filter_entries = 0;
  std::uint64_t dllc_entries_per_bank = 0;
  std::uint64_t dmem_entries = 0;
};

SizeLevel size_level(char label);
std::vector<SizeLevel> parse_sizes(const std::string& csv);
void apply(SystemConfig& cfg, const SizeLevel& s);

}  // namespace mcsim
