#include "mcsim/dlcbf.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace mcsim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr double kDesignLoad = 0.75;

}  // namespace

void DlcbfConfig::validate() const {
  if (subtables < 2) throw ConfigError("dlcbf: need at least 2 subtables");
  if (counter_bits < 2 || counter_bits > 16) throw ConfigError("dlcbf: counter_bits must be in [2,16]");
  if (fingerprint_bits < 8 || fingerprint_bits > 30) throw ConfigError("dlcbf: fingerprint_bits must be in [8,30]");
  if (cells_per_bucket < 1) throw ConfigError("dlcbf: cells_per_bucket must be >= 1");
  if (!std::has_single_bit(buckets_per_subtable)) throw ConfigError("dlcbf: buckets_per_subtable must be a power of two");
}

double estimated_fpr(const DlcbfConfig& cfg, std::uint64_t items) {
  const double load = static_cast<double>(items) / static_cast<double>(cfg.capacity());
  return load * cfg.subtables * cfg.cells_per_bucket / std::ldexp(1.0, static_cast<int>(cfg.fingerprint_bits));
}

DlcbfConfig size_for_fpr(std::uint64_t expected_items, double target_fpr) {
  if (!(target_fpr > 0.0 && target_fpr < 1.0)) throw ConfigError("dlcbf: target_fpr must be in (0,1)");
  DlcbfConfig cfg;
  const double per_subtable = static_cast<double>(cfg.cells_per_bucket) * kDesignLoad * cfg.subtables;
  const auto buckets = static_cast<std::uint64_t>(
      std::ceil(static_cast<double>(expected_items) / per_subtable));
  cfg.buckets_per_subtable = static_cast<std::uint32_t>(std::bit_ceil(std::max<std::uint64_t>(1, buckets)));
  // Budget half the target so the measured rate has 2x headroom.
  const double needed = std::log2(kDesignLoad * cfg.subtables * cfg.cells_per_bucket / (target_fpr / 2.0));
  cfg.fingerprint_bits = static_cast<std::uint32_t>(std::clamp(std::ceil(needed), 8.0, 30.0));
  return cfg;
}

DlcbfFilter::DlcbfFilter(DlcbfConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const int code_bits = static_cast<int>(cfg_.fingerprint_bits) + std::countr_zero(cfg_.buckets_per_subtable);
  if (code_bits > 62) throw ConfigError("dlcbf: table too large");
  code_mask_ = (std::uint64_t{1} << code_bits) - 1;
  std::uint64_t s = cfg_.seed;
  for (std::uint32_t i = 0; i < cfg_.subtables; ++i) {
    s = splitmix64(s);
    multipliers_.push_back((s | 1) & code_mask_);
    s = splitmix64(s);
    offsets_.push_back(s & code_mask_);
  }
  cells_.resize(cfg_.capacity());
}

std::uint64_t DlcbfFilter::hash(BlockAddress addr) const {
  return splitmix64(addr.value() ^ splitmix64(cfg_.seed)) & code_mask_;
}

std::vector<DlcbfSlot> DlcbfFilter::derive_slots(BlockAddress addr) const {
  const std::uint64_t code = hash(addr);
  const std::uint64_t fp_mask = (std::uint64_t{1} << cfg_.fingerprint_bits) - 1;
  std::vector<DlcbfSlot> slots;
  slots.reserve(cfg_.subtables);
  for (std::uint32_t i = 0; i < cfg_.subtables; ++i) {
    const std::uint64_t p = (multipliers_[i] * code + offsets_[i]) & code_mask_;
    slots.push_back({i, static_cast<std::uint32_t>(p >> cfg_.fingerprint_bits), static_cast<std::uint32_t>(p & fp_mask)});
  }
  return slots;
}

DlcbfFilter::Cell* DlcbfFilter::find(const std::vector<DlcbfSlot>& slots) {
  for (const auto& s : slots) {
    for (std::uint32_t c = 0; c < cfg_.cells_per_bucket; ++c) {
      Cell& cell = cells_[index(s.subtable, s.bucket, c)];
      if (cell.counter > 0 && cell.fingerprint == s.fingerprint) return &cell;
    }
  }
  return nullptr;
}

void DlcbfFilter::increment(BlockAddress addr) {
  if (pinned_.count(hash(addr)) != 0) {
    ++live_count_;
    return;
  }
  const auto slots = derive_slots(addr);
  if (Cell* cell = find(slots)) {
    ++live_count_;
    if (cell->counter == counter_max()) return;
    if (++cell->counter == counter_max()) ++saturated_;
    return;
  }
  // Least-loaded candidate bucket, leftmost subtable on ties.
  std::uint32_t best = 0;
  std::uint32_t best_load = cfg_.cells_per_bucket + 1;
  for (std::uint32_t i = 0; i < slots.size(); ++i) {
    std::uint32_t load = 0;
    for (std::uint32_t c = 0; c < cfg_.cells_per_bucket; ++c)
      if (cells_[index(slots[i].subtable, slots[i].bucket, c)].counter > 0) ++load;
    if (load < best_load) {
      best_load = load;
      best = i;
    }
  }
  if (best_load == cfg_.cells_per_bucket) {
    pinned_.insert(hash(addr));
    ++overflows_;
    ++live_count_;
    throw FilterOverflow("dlcbf: all candidate buckets full for " + to_hex(addr));
  }
  for (std::uint32_t c = 0; c < cfg_.cells_per_bucket; ++c) {
    Cell& cell = cells_[index(slots[best].subtable, slots[best].bucket, c)];
    if (cell.counter == 0) {
      cell.fingerprint = slots[best].fingerprint;
      cell.counter = 1;
      ++live_count_;
      return;
    }
  }
}

void DlcbfFilter::decrement(BlockAddress addr) {
  if (pinned_.count(hash(addr)) != 0) {
    if (live_count_ > 0) --live_count_;
    return;
  }
  Cell* cell = find(derive_slots(addr));
  if (cell == nullptr) throw UnderflowViolation("dlcbf: decrement of absent " + to_hex(addr));
  --live_count_;
  if (cell->counter == counter_max()) return;  // saturated cells stay pinned
  --cell->counter;
}

bool DlcbfFilter::contains(BlockAddress addr) const {
  if (pinned_.count(hash(addr)) != 0) return true;
  for (const auto& s : derive_slots(addr)) {
    for (std::uint32_t c = 0; c < cfg_.cells_per_bucket; ++c) {
      const Cell& cell = cells_[index(s.subtable, s.bucket, c)];
      if (cell.counter > 0 && cell.fingerprint == s.fingerprint) return true;
    }
  }
  return false;
}

std::uint64_t DlcbfFilter::occupied_cells() const {
  return static_cast<std::uint64_t>(std::count_if(cells_.begin(), cells_.end(), [](const Cell& c) { return c.counter > 0; }));
}

}  // namespace mcsim
