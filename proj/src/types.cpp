#include "mcsim/types.hpp"

#include <bit>
#include <cstdio>

namespace mcsim {

namespace {
bool pow2(std::uint32_t v) { return v != 0 && (v & (v - 1)) == 0; }
}  // namespace

void SystemShape::validate() const {
  if (num_chips < 1) throw ConfigError("num_chips must be >= 1");
  if (cores_per_chip < 1) throw ConfigError("cores_per_chip must be >= 1");
  if (llc_banks_per_chip < 1 || !pow2(llc_banks_per_chip))
    throw ConfigError("llc_banks_per_chip must be a power of two >= 1");
  if (!pow2(block_size) || block_size < 8) throw ConfigError("block_size must be a power of two >= 8");
}

int SystemShape::block_bits() const { return std::countr_zero(block_size); }
int SystemShape::bank_bits() const { return std::countr_zero(llc_banks_per_chip); }

std::string to_hex(BlockAddress a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(a.value()));
  return buf;
}

bool AgentId::valid_for(const SystemShape& s) const {
  if (chip >= s.num_chips) return false;
  switch (kind) {
    case AgentKind::CoreCache: return unit < s.cores_per_chip;
    case AgentKind::LlcBank:
    case AgentKind::Dfllc: return unit < s.llc_banks_per_chip;
    case AgentKind::MemCtrl: return unit == 0;
  }
  return false;
}

std::uint32_t AgentId::dense(const SystemShape& s) const {
  switch (kind) {
    case AgentKind::CoreCache: return chip * s.cores_per_chip + unit;
    case AgentKind::LlcBank:
    case AgentKind::Dfllc: return s.total_cores() + chip * s.llc_banks_per_chip + unit;
    case AgentKind::MemCtrl: return s.total_cores() + s.num_chips * s.llc_banks_per_chip + chip;
  }
  return 0;
}

std::string to_string(const AgentId& a) {
  const char* k = "core";
  switch (a.kind) {
    case AgentKind::CoreCache: k = "core"; break;
    case AgentKind::LlcBank: k = "llc"; break;
    case AgentKind::Dfllc: k = "dfllc"; break;
    case AgentKind::MemCtrl: k = "mem"; break;
  }
  return std::string(k) + "." + std::to_string(a.chip) + "." + std::to_string(a.unit);
}

}  // namespace mcsim
