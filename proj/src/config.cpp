#include "mcsim/config.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>

namespace mcsim {

CacheGeometry CacheGeometry::from_kb(std::uint64_t kb, std::uint32_t ways, std::uint32_t block_size) {
  if (ways == 0) return {1, 0};
  const std::uint64_t lines = kb * 1024 / block_size;
  const std::uint64_t sets = lines / ways;
  if (sets == 0 || !std::has_single_bit(sets)) throw ConfigError("cache size/associativity gives non power-of-two sets");
  return {static_cast<std::uint32_t>(sets), ways};
}

void LatencyConfig::validate() const {
  if (l1_cycles < 1 || l2_cycles < 1 || llc_bank_cycles < 1 || memory_cycles < 1 || link_cycle < 1)
    throw ConfigError("latencies must be >= 1 cycle");
  if (link_width_bytes < 1) throw ConfigError("link width must be >= 1 byte");
}

const char* to_string(Fault f) {
  switch (f) {
    case Fault::None: return "none";
    case Fault::DropToken: return "drop-token";
    case Fault::SkipFllcDecrement: return "skip-fllc-decrement";
    case Fault::MissingInvalidation: return "missing-invalidation";
    case Fault::SilverDoubleGrant: return "silver-double-grant";
    case Fault::HtaInclusivityBreak: return "hta-inclusivity-break";
  }
  return "none";
}

Fault fault_from_string(const std::string& s) {
  for (Fault f : {Fault::None, Fault::DropToken, Fault::SkipFllcDecrement, Fault::MissingInvalidation,
                  Fault::SilverDoubleGrant, Fault::HtaInclusivityBreak})
    if (s == to_string(f)) return f;
  throw ConfigError("unknown fault '" + s + "'");
}

void SystemConfig::validate() const {
  shape.validate();
  latency.validate();
  if (shape.cores_per_chip > 64 || shape.num_chips > 64) throw ConfigError("at most 64 cores per chip and 64 chips");
  if (l1.ways < 1 || !std::has_single_bit(l1.sets)) throw ConfigError("L1 needs power-of-two sets and >= 1 way");
  if (l2.ways > 0 && !std::has_single_bit(l2.sets)) throw ConfigError("L2 sets must be a power of two");
  if (llc_bank.ways < 1 || !std::has_single_bit(llc_bank.sets)) throw ConfigError("LLC needs power-of-two sets and >= 1 way");
  if (topology.mesh_x * topology.mesh_y < 1) throw ConfigError("mesh must have at least one node");
  if (dllc_entries_per_bank < 1 || dmem_entries < 1) throw ConfigError("directories need at least one entry");
  if (probe_filter_entries < 1) throw ConfigError("probe filter needs at least one entry");
  dllc_config().validate();
  dmem_config().validate();
  probe_filter_config().validate();
}

DirConfig SystemConfig::dllc_config() const {
  DirConfig c = dir_config_for_entries(dllc_entries_per_bank, dir_ways, shape.cores_per_chip);
  c.index_shift = static_cast<std::uint32_t>(shape.block_bits() + shape.bank_bits());
  return c;
}

DirConfig SystemConfig::dmem_config() const {
  DirConfig c = dir_config_for_entries(dmem_entries, dir_ways, shape.num_chips);
  c.index_shift = static_cast<std::uint32_t>(shape.block_bits() + shape.bank_bits());
  c.index_stride = shape.num_chips;
  return c;
}

DirConfig SystemConfig::probe_filter_config() const {
  DirConfig c = dir_config_for_entries(probe_filter_entries, dir_ways, shape.num_chips);
  c.index_shift = static_cast<std::uint32_t>(shape.block_bits() + shape.bank_bits());
  c.index_stride = shape.num_chips;
  return c;
}

DlcbfConfig SystemConfig::fllc_config() const {
  // Blocks in one chip's private caches that map to one bank.
  std::uint64_t items = fllc_items;
  if (items == 0)
    items = (l1.lines() + l2.lines()) * shape.cores_per_chip / shape.llc_banks_per_chip;
  return size_for_fpr(items, filter_target_fpr);
}

DlcbfConfig SystemConfig::fmem_config() const {
  // Blocks homed at one controller that can be cached across all chips.
  std::uint64_t items = fmem_items;
  if (items == 0) {
    const std::uint64_t per_chip = (l1.lines() + l2.lines()) * shape.cores_per_chip +
                                   llc_bank.lines() * shape.llc_banks_per_chip;
    items = per_chip;
  }
  return size_for_fpr(items, filter_target_fpr);
}

SystemConfig default_config(std::uint32_t chips) {
  SystemConfig c;
  c.shape.num_chips = chips;
  c.topology = {2, 2};
  return c;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t as_uint(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return x;
}

std::uint32_t as_u32(const std::string& key, const std::string& v) {
  const std::uint64_t x = as_uint(key, v);
  if (x > UINT32_MAX) throw ConfigError(key + ": value too large");
  return static_cast<std::uint32_t>(x);
}

double as_double(const std::string& key, const std::string& v) {
  try {
    std::size_t n = 0;
    const double d = std::stod(v, &n);
    if (n == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

}  // namespace

SystemConfig parse_config(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line, section;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(no) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!section.empty()) key = section + "." + key;
    if (key.empty() || value.empty()) throw ConfigError("line " + std::to_string(no) + ": empty key or value");
    kv[key] = value;
  }

  auto take = [&](const std::string& k) -> std::optional<std::string> {
    auto it = kv.find(k);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  SystemConfig c = default_config(2);
  if (auto v = take("chips")) c = default_config(as_u32("chips", *v));
  std::uint64_t l1_kb = c.l1.lines() * c.shape.block_size / 1024, l2_kb = c.l2.lines() * c.shape.block_size / 1024;
  std::uint32_t l1_ways = c.l1.ways, l2_ways = c.l2.ways, llc_ways = c.llc_bank.ways;
  std::uint64_t llc_kb = c.llc_bank.lines() * c.shape.block_size / 1024 * c.shape.llc_banks_per_chip;
  if (auto v = take("cores.count")) c.shape.cores_per_chip = as_u32("cores.count", *v);
  if (auto v = take("cache.l1.kb")) l1_kb = as_uint("cache.l1.kb", *v);
  if (auto v = take("cache.l1.assoc")) l1_ways = as_u32("cache.l1.assoc", *v);
  if (auto v = take("cache.l2.kb")) l2_kb = as_uint("cache.l2.kb", *v);
  if (auto v = take("cache.l2.assoc")) l2_ways = as_u32("cache.l2.assoc", *v);
  if (auto v = take("llc.mb")) llc_kb = as_uint("llc.mb", *v) * 1024;
  if (auto v = take("llc.banks")) c.shape.llc_banks_per_chip = as_u32("llc.banks", *v);
  if (auto v = take("llc.assoc")) llc_ways = as_u32("llc.assoc", *v);
  if (auto v = take("mem.cycles")) c.latency.memory_cycles = as_uint("mem.cycles", *v);
  if (auto v = take("net.link_bytes")) c.latency.link_width_bytes = as_u32("net.link_bytes", *v);
  if (auto v = take("net.link_cycles")) c.latency.link_cycle = as_uint("net.link_cycles", *v);
  if (auto v = take("mesh.x")) c.topology.mesh_x = as_u32("mesh.x", *v);
  if (auto v = take("mesh.y")) c.topology.mesh_y = as_u32("mesh.y", *v);
  if (auto v = take("dir.dllc_entries")) c.dllc_entries_per_bank = as_uint("dir.dllc_entries", *v);
  if (auto v = take("dir.dmem_entries")) c.dmem_entries = as_uint("dir.dmem_entries", *v);
  if (auto v = take("dir.ways")) c.dir_ways = as_u32("dir.ways", *v);
  if (auto v = take("filter.fpr")) c.filter_target_fpr = as_double("filter.fpr", *v);
  if (auto v = take("hta.probe_filter_entries")) c.probe_filter_entries = as_uint("hta.probe_filter_entries", *v);
  if (auto v = take("fault")) c.fault = fault_from_string(*v);
  if (!kv.empty()) throw ConfigError("unknown config key '" + kv.begin()->first + "'");

  c.shape.validate();
  if (llc_kb % c.shape.llc_banks_per_chip) throw ConfigError("llc size must divide evenly across banks");
  c.l1 = CacheGeometry::from_kb(l1_kb, l1_ways, c.shape.block_size);
  c.l2 = CacheGeometry::from_kb(l2_kb, l2_ways, c.shape.block_size);
  c.llc_bank = CacheGeometry::from_kb(llc_kb / c.shape.llc_banks_per_chip, llc_ways, c.shape.block_size);
  c.validate();
  return c;
}

SystemConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in);
}

SizeLevel size_level(char label) {
  switch (label) {
    case 'L': return {'L', 131072, 8192, 32768};
    case 'M': return {'M', 16384, 128, 4096};
    case 'S': return {'S', 4096, 32, 1024};
  }
  throw ConfigError(std::string("unknown size label '") + label + "' (expected L, M or S)");
}

std::vector<SizeLevel> parse_sizes(const std::string& csv) {
  std::vector<SizeLevel> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    const std::string tok = trim(csv.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (tok.size() != 1) throw ConfigError("bad size label '" + tok + "'");
    out.push_back(size_level(tok[0]));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void apply(SystemConfig& cfg, const SizeLevel& s) {
  cfg.probe_filter_entries = s.probe_filter_entries;
  cfg.dllc_entries_per_bank = s.dllc_entries_per_bank;
  cfg.dmem_entries = s.dmem_entries;
}

}  // namespace mcsim
