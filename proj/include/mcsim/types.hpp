#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace mcsim {

using Cycle = std::uint64_t;

// Thrown when a protocol accounting rule is broken. Aborts the run.
class ProtocolViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConservationViolation : public ProtocolViolation {
 public:
  using ProtocolViolation::ProtocolViolation;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SystemShape {
  std::uint32_t num_chips = 2;
  std::uint32_t cores_per_chip = 4;
  std::uint32_t llc_banks_per_chip = 4;
  std::uint32_t block_size = 64;

  std::uint32_t total_cores() const { return num_chips * cores_per_chip; }
  void validate() const;
  int block_bits() const;
  int bank_bits() const;
};

class BlockAddress {
 public:
  constexpr BlockAddress() = default;
  constexpr explicit BlockAddress(std::uint64_t v) : value_(v) {}

  constexpr std::uint64_t value() const { return value_; }
  bool aligned(std::uint32_t block_size) const { return (value_ & (block_size - 1)) == 0; }

  friend constexpr bool operator==(BlockAddress a, BlockAddress b) = default;
  friend constexpr auto operator<=>(BlockAddress a, BlockAddress b) = default;

 private:
  std::uint64_t value_ = 0;
};

std::string to_hex(BlockAddress a);

struct BlockAddressHash {
  std::size_t operator()(BlockAddress a) const noexcept {
    std::uint64_t x = a.value() * 0x9E3779B97F4A7C15ULL;
    return static_cast<std::size_t>(x ^ (x >> 29));
  }
};

enum class Op : std::uint8_t { Read, Write };

inline char op_char(Op op) { return op == Op::Read ? 'R' : 'W'; }

// Which structure a message endpoint is. The D|F-LLC is co-located with the
// LLC bank and shares its network port.
enum class AgentKind : std::uint8_t { CoreCache, LlcBank, Dfllc, MemCtrl };

struct AgentId {
  AgentKind kind = AgentKind::CoreCache;
  std::uint32_t chip = 0;
  std::uint32_t unit = 0;

  static AgentId core(std::uint32_t chip, std::uint32_t unit) { return {AgentKind::CoreCache, chip, unit}; }
  static AgentId bank(std::uint32_t chip, std::uint32_t unit) { return {AgentKind::LlcBank, chip, unit}; }
  static AgentId mem(std::uint32_t chip) { return {AgentKind::MemCtrl, chip, 0}; }

  bool valid_for(const SystemShape& s) const;
  // Dense index used for channel keys: cores, then banks, then memory controllers.
  std::uint32_t dense(const SystemShape& s) const;

  friend bool operator==(const AgentId&, const AgentId&) = default;
  friend auto operator<=>(const AgentId&, const AgentId&) = default;
};

std::string to_string(const AgentId& a);

// Static address interleaving shared by both protocols.
struct AddressMap {
  SystemShape shape;

  std::uint32_t bank_of(BlockAddress a) const {
    return static_cast<std::uint32_t>((a.value() >> shape.block_bits()) & (shape.llc_banks_per_chip - 1));
  }
  std::uint32_t home_chip(BlockAddress a) const {
    return static_cast<std::uint32_t>((a.value() >> (shape.block_bits() + shape.bank_bits())) % shape.num_chips);
  }
  // Index bits left over once block offset and bank bits are stripped.
  std::uint64_t set_key(BlockAddress a) const { return a.value() >> (shape.block_bits() + shape.bank_bits()); }
};

}  // namespace mcsim
