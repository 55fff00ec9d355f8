#include "mcsim/sparse_directory.hpp"

#include <algorithm>
#include <bit>

namespace mcsim {

void DirConfig::validate() const {
  if (!std::has_single_bit(sets)) throw ConfigError("directory sets must be a power of two");
  if (ways < 1) throw ConfigError("directory needs at least one way");
  if (domain_population < 1 || domain_population > 64) throw ConfigError("directory domain must be 1..64 members");
  if (index_stride < 1) throw ConfigError("directory index_stride must be >= 1");
}

DirConfig dir_config_for_entries(std::uint64_t entries, std::uint32_t preferred_ways, std::uint32_t domain_population) {
  if (entries < 1) throw ConfigError("directory needs at least one entry");
  DirConfig cfg;
  cfg.domain_population = domain_population;
  cfg.ways = static_cast<std::uint32_t>(std::min<std::uint64_t>(preferred_ways, entries));
  std::uint64_t sets = std::max<std::uint64_t>(1, entries / cfg.ways);
  cfg.sets = static_cast<std::uint32_t>(std::bit_floor(sets));
  // Fold any remainder from non power-of-two budgets into associativity.
  cfg.ways = static_cast<std::uint32_t>(entries / cfg.sets);
  return cfg;
}

std::uint32_t DirEntry::count() const { return static_cast<std::uint32_t>(std::popcount(sharers)); }

SparseDirectory::SparseDirectory(DirConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  slots_.resize(cfg_.entries());
}

std::uint32_t SparseDirectory::set_of(BlockAddress addr) const {
  return static_cast<std::uint32_t>(((addr.value() >> cfg_.index_shift) / cfg_.index_stride) & (cfg_.sets - 1));
}

DirEntry* SparseDirectory::find(BlockAddress addr) {
  const std::size_t base = std::size_t{set_of(addr)} * cfg_.ways;
  for (std::uint32_t w = 0; w < cfg_.ways; ++w) {
    auto& s = slots_[base + w];
    if (s && s->tag == addr) return &*s;
  }
  return nullptr;
}

const DirEntry* SparseDirectory::peek(BlockAddress addr) const {
  return const_cast<SparseDirectory*>(this)->find(addr);
}

std::optional<DirEntry> SparseDirectory::lookup(BlockAddress addr) {
  DirEntry* e = find(addr);
  if (e == nullptr) return std::nullopt;
  e->lru_stamp = ++clock_;
  return *e;
}

std::optional<DirEntry> SparseDirectory::allocate_silent(BlockAddress addr, std::uint64_t initial_sharers,
                                                         std::optional<std::uint32_t> silver_owner) {
  if (find(addr) != nullptr) throw std::logic_error("allocate_silent: " + to_hex(addr) + " already tracked");
  if (initial_sharers == 0) throw std::invalid_argument("allocate_silent: entry needs a sharer");
  if (silver_owner && ((initial_sharers >> *silver_owner) & 1u) == 0)
    throw std::invalid_argument("allocate_silent: silver owner must be a sharer");
  const std::size_t base = std::size_t{set_of(addr)} * cfg_.ways;
  std::optional<DirEntry>* victim = nullptr;
  for (std::uint32_t w = 0; w < cfg_.ways; ++w) {
    auto& s = slots_[base + w];
    if (!s) {
      victim = &s;
      break;
    }
    if (victim == nullptr || s->lru_stamp < (*victim)->lru_stamp) victim = &s;
  }
  std::optional<DirEntry> displaced;
  if (*victim) {
    displaced = **victim;
    ++displacements_;
  } else {
    ++occupancy_;
  }
  *victim = DirEntry{addr, initial_sharers, silver_owner, ++clock_};
  return displaced;
}

void SparseDirectory::update_sharers(BlockAddress addr, std::optional<std::uint32_t> add,
                                     std::optional<std::uint32_t> remove,
                                     std::optional<std::uint32_t> new_silver_owner) {
  DirEntry* e = find(addr);
  if (e == nullptr) throw MissingEntry("directory has no entry for " + to_hex(addr));
  if (add) e->sharers |= std::uint64_t{1} << *add;
  if (remove) {
    e->sharers &= ~(std::uint64_t{1} << *remove);
    if (e->silver_owner == remove) e->silver_owner.reset();
  }
  if (new_silver_owner) {
    e->sharers |= std::uint64_t{1} << *new_silver_owner;
    e->silver_owner = new_silver_owner;
  }
  if (e->sharers == 0) erase(addr);
}

void SparseDirectory::erase(BlockAddress addr) {
  const std::size_t base = std::size_t{set_of(addr)} * cfg_.ways;
  for (std::uint32_t w = 0; w < cfg_.ways; ++w) {
    auto& s = slots_[base + w];
    if (s && s->tag == addr) {
      s.reset();
      --occupancy_;
      return;
    }
  }
}

std::vector<DirEntry> SparseDirectory::set_contents(std::uint32_t set) const {
  std::vector<DirEntry> out;
  for (std::uint32_t w = 0; w < cfg_.ways; ++w)
    if (const auto& s = slots_[std::size_t{set} * cfg_.ways + w]) out.push_back(*s);
  std::sort(out.begin(), out.end(), [](const DirEntry& a, const DirEntry& b) { return a.lru_stamp < b.lru_stamp; });
  return out;
}

}  // namespace mcsim
