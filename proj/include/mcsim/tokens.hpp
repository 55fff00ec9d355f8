#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>

#include "mcsim/types.hpp"

namespace mcsim {

// Colored token holding for one block. Gold answers external reads, one
// silver per chip answers on-chip reads, bronze grants read permission.
struct TokenSet {
  std::uint32_t gold = 0;
  std::uint32_t silver = 0;
  std::uint32_t bronze = 0;

  bool empty() const { return gold == 0 && silver == 0 && bronze == 0; }
  std::uint32_t total() const { return gold + silver + bronze; }
  bool readable() const { return bronze >= 1; }

  TokenSet& operator+=(const TokenSet& o) {
    gold += o.gold;
    silver += o.silver;
    bronze += o.bronze;
    return *this;
  }
  // Component-wise subtraction; caller guarantees o <= *this.
  TokenSet& operator-=(const TokenSet& o);
  bool covers(const TokenSet& o) const { return gold >= o.gold && silver >= o.silver && bronze >= o.bronze; }

  friend bool operator==(const TokenSet&, const TokenSet&) = default;
};

std::ostream& operator<<(std::ostream& os, const TokenSet& t);
std::string to_string(const TokenSet& t);

class InsufficientSilver : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

TokenSet full_set(const SystemShape& shape);

bool is_full(const TokenSet& t, const SystemShape& shape);

// True when t is within the per-color bounds and keeps gold => bronze.
bool well_formed(const TokenSet& t, const SystemShape& shape);

// Throws ConservationViolation when the sum would exceed the full set.
TokenSet merge(const TokenSet& a, const TokenSet& b, const SystemShape& shape);

struct ReadSplit {
  TokenSet granted;
  TokenSet retained;
};

// Grant for another chip's read: one silver plus as many bronze as the
// requesting chip has cores, capped so the holder keeps one bronze.
ReadSplit split_for_external_read(const TokenSet& holder, std::uint32_t requestor_chip_cores);

}  // namespace mcsim
