#include "mcsim/protocol.hpp"

namespace mcsim {

const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::Conservation: return "conservation";
    case ViolationKind::Swmr: return "swmr";
    case ViolationKind::FilterBalance: return "filter-balance";
    case ViolationKind::DirectoryTracking: return "directory-tracking";
    case ViolationKind::Inclusivity: return "inclusivity";
    case ViolationKind::ValueCoherence: return "value-coherence";
    case ViolationKind::Liveness: return "liveness";
    case ViolationKind::Protocol: return "protocol";
  }
  return "?";
}

std::string describe(const Violation& v) {
  return std::string(to_string(v.kind)) + " @" + to_hex(v.addr) + ": " + v.detail;
}

std::vector<std::pair<std::string, std::uint64_t>> ProtocolCounters::rows() const {
  return {
      {"l1_misses", l1_misses},
      {"onchip_misses", onchip_misses},
      {"llc_misses", llc_misses},
      {"ext_inval_misses", ext_inval_misses},
      {"external_invalidations", external_invalidations},
      {"reconstructions_llc", reconstructions_llc},
      {"reconstructions_mem", reconstructions_mem},
      {"fllc_false_positives", fllc_false_positives},
      {"fmem_false_positives", fmem_false_positives},
      {"filter_overflows", filter_overflows},
      {"silent_dir_evictions", silent_dir_evictions},
      {"probe_filter_evictions", probe_filter_evictions},
      {"llc_evictions", llc_evictions},
      {"system_invalidations", system_invalidations},
      {"silver_recalls", silver_recalls},
      {"memory_reads", memory_reads},
      {"memory_writes", memory_writes},
      {"unicasts", unicasts},
      {"multicasts", multicasts},
      {"broadcasts", broadcasts},
  };
}

std::unique_ptr<Protocol> make_protocol(const std::string& name, const SystemConfig& cfg) {
  if (name == "rainbow") return make_rainbow(cfg);
  if (name == "hta") return make_hta(cfg);
  throw ConfigError("unknown protocol '" + name + "' (expected rainbow or hta)");
}

}  // namespace mcsim
