#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mcsim/types.hpp"

namespace mcsim {

class MissingEntry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DirConfig {
  std::uint32_t sets = 16;  // power of two
  std::uint32_t ways = 8;
  std::uint32_t domain_population = 4;  // cores for a D-LLC, chips for a D-MEM
  // set = (addr >> index_shift) / index_stride mod sets
  std::uint32_t index_shift = 6;
  std::uint32_t index_stride = 1;

  std::uint64_t entries() const { return std::uint64_t{sets} * ways; }
  void validate() const;
};

// Picks a set/way geometry for a total entry budget.
DirConfig dir_config_for_entries(std::uint64_t entries, std::uint32_t preferred_ways, std::uint32_t domain_population);

struct DirEntry {
  BlockAddress tag;
  std::uint64_t sharers = 0;  // bit i = domain member i
  std::optional<std::uint32_t> silver_owner;
  std::uint64_t lru_stamp = 0;

  bool has(std::uint32_t i) const { return (sharers >> i) & 1u; }
  std::uint32_t count() const;
  friend bool operator==(const DirEntry&, const DirEntry&) = default;
};

// Set-associative, loosely inclusive directory. Nothing here ever generates
// protocol traffic: displacement simply forgets the tracked sharers.
class SparseDirectory {
 public:
  explicit SparseDirectory(DirConfig cfg);

  const DirConfig& config() const { return cfg_; }

  // Hit refreshes LRU.
  std::optional<DirEntry> lookup(BlockAddress addr);
  // Const probe without LRU side effects.
  const DirEntry* peek(BlockAddress addr) const;

  // Installs a new entry; returns the displaced LRU entry if the set was full.
  std::optional<DirEntry> allocate_silent(BlockAddress addr, std::uint64_t initial_sharers,
                                          std::optional<std::uint32_t> silver_owner);

  // Throws MissingEntry when addr is not tracked. Removes the entry when no
  // sharer remains; a removed silver owner clears the annotation.
  void update_sharers(BlockAddress addr, std::optional<std::uint32_t> add, std::optional<std::uint32_t> remove,
                      std::optional<std::uint32_t> new_silver_owner);

  void erase(BlockAddress addr);

  std::uint64_t occupancy() const { return occupancy_; }
  std::uint64_t displacements() const { return displacements_; }

  // Entries of one set ordered least- to most-recently used.
  std::vector<DirEntry> set_contents(std::uint32_t set) const;
  std::uint32_t set_of(BlockAddress addr) const;

  template <typename F>
  void for_each(F&& f) const {
    for (const auto& e : slots_)
      if (e) f(*e);
  }

 private:
  DirEntry* find(BlockAddress addr);

  DirConfig cfg_;
  std::vector<std::optional<DirEntry>> slots_;
  std::uint64_t clock_ = 0;
  std::uint64_t occupancy_ = 0;
  std::uint64_t displacements_ = 0;
};

}  // namespace mcsim
