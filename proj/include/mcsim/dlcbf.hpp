#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "mcsim/types.hpp"

namespace mcsim {

class FilterOverflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnderflowViolation : public ProtocolViolation {
 public:
  using ProtocolViolation::ProtocolViolation;
};

struct DlcbfConfig {
  std::uint32_t subtables = 4;
  std::uint32_t buckets_per_subtable = 256;  // power of two
  std::uint32_t cells_per_bucket = 8;
  std::uint32_t fingerprint_bits = 14;
  std::uint32_t counter_bits = 4;
  std::uint64_t seed = 0x5eed;

  std::uint64_t capacity() const {
    return std::uint64_t{subtables} * buckets_per_subtable * cells_per_bucket;
  }
  void validate() const;
};

// Sizing rule: a query falsely matches only when a stored element shares
// its full (bucket, fingerprint) code, so at load factor L the false
// positive rate is about L * d * cells / 2^fingerprint_bits.
double estimated_fpr(const DlcbfConfig& cfg, std::uint64_t items);

DlcbfConfig size_for_fpr(std::uint64_t expected_items, double target_fpr);

struct DlcbfSlot {
  std::uint32_t subtable;
  std::uint32_t bucket;
  std::uint32_t fingerprint;

  friend bool operator==(const DlcbfSlot&, const DlcbfSlot&) = default;
};

// d-left counting Bloom filter. Each subtable maps an address through its
// own permutation of a shared hash; the permuted value splits into a bucket
// index and a fingerprint, so equal (bucket, fingerprint) pairs imply equal
// hashes and an element never needs more than one cell.
class DlcbfFilter {
 public:
  struct Cell {
    std::uint32_t fingerprint = 0;
    std::uint32_t counter = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
  };

  explicit DlcbfFilter(DlcbfConfig cfg);

  const DlcbfConfig& config() const { return cfg_; }

  std::vector<DlcbfSlot> derive_slots(BlockAddress addr) const;

  // Throws FilterOverflow when every candidate bucket is full; the address
  // is then pinned as resident for the rest of the filter's life.
  void increment(BlockAddress addr);
  // Throws UnderflowViolation when no candidate cell holds the fingerprint.
  void decrement(BlockAddress addr);
  bool contains(BlockAddress addr) const;

  std::uint64_t live_count() const { return live_count_; }
  std::uint64_t saturated_cells() const { return saturated_; }
  std::uint64_t overflows() const { return overflows_; }
  std::uint64_t occupied_cells() const;

  const std::vector<Cell>& cells() const { return cells_; }
  const std::set<std::uint64_t>& pinned() const { return pinned_; }

  friend bool operator==(const DlcbfFilter& a, const DlcbfFilter& b) {
    return a.cells_ == b.cells_ && a.pinned_ == b.pinned_;
  }

 private:
  std::uint64_t hash(BlockAddress addr) const;
  Cell* find(const std::vector<DlcbfSlot>& slots);
  std::size_t index(std::uint32_t subtable, std::uint32_t bucket, std::uint32_t cell) const {
    return (std::size_t{subtable} * cfg_.buckets_per_subtable + bucket) * cfg_.cells_per_bucket + cell;
  }
  std::uint32_t counter_max() const { return (1u << cfg_.counter_bits) - 1; }

  DlcbfConfig cfg_;
  std::uint64_t code_mask_;
  std::vector<std::uint64_t> multipliers_;
  std::vector<std::uint64_t> offsets_;
  std::vector<Cell> cells_;
  std::set<std::uint64_t> pinned_;
  std::uint64_t live_count_ = 0;
  std::uint64_t saturated_ = 0;
  std::uint64_t overflows_ = 0;
};

}  // namespace mcsim
