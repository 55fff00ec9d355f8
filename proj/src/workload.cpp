#include "mcsim/workload.hpp"

#include <charconv>
#include <fstream>
#include <random>
#include <sstream>

namespace mcsim {

const char* to_string(Pattern p) {
  switch (p) {
    case Pattern::Private: return "private";
    case Pattern::SharedUniform: return "shared-uniform";
    case Pattern::ProducerConsumer: return "producer-consumer";
    case Pattern::Migratory: return "migratory";
  }
  return "?";
}

Pattern pattern_from_string(const std::string& s) {
  for (Pattern p : {Pattern::Private, Pattern::SharedUniform, Pattern::ProducerConsumer, Pattern::Migratory})
    if (s == to_string(p)) return p;
  throw ConfigError("unknown pattern '" + s + "'");
}

void GeneratorSpec::validate() const {
  if (footprint_blocks == 0) throw ConfigError("footprint_blocks must be at least 1");
  if (!(shared_fraction >= 0.0 && shared_fraction <= 1.0)) throw ConfigError("shared_fraction must be in [0,1]");
  if (!(write_fraction >= 0.0 && write_fraction <= 1.0)) throw ConfigError("write_fraction must be in [0,1]");
}

namespace {

double unit(std::mt19937_64& g) { return double(g() >> 11) * 0x1.0p-53; }

}  // namespace

Trace generate(const GeneratorSpec& spec, const SystemShape& shape) {
  spec.validate();
  shape.validate();
  const std::uint32_t cores = shape.total_cores();
  const std::uint64_t fp = spec.footprint_blocks;
  const auto addr = [&](std::uint64_t block) { return BlockAddress(block * shape.block_size); };
  // Shared region occupies blocks [0, fp); core c privately owns [(c+1)fp, (c+2)fp).
  const auto private_block = [&](std::uint32_t c, std::uint64_t i) { return (std::uint64_t{c} + 1) * fp + i; };

  Trace t;
  t.reserve(cores * spec.ops_per_core);
  for (std::uint32_t c = 0; c < cores; ++c) {
    std::seed_seq seq{spec.seed, std::uint64_t{c}, std::uint64_t{0x5eed}};
    std::mt19937_64 rng(seq);
    std::seed_seq seq2{spec.seed, std::uint64_t{c}, std::uint64_t{0xc401ce}};
    std::mt19937_64 choice(seq2);
    std::uint64_t k = 0;  // shared accesses so far
    std::uint64_t n = 0;
    while (n < spec.ops_per_core) {
      const bool shared = spec.pattern != Pattern::Private && spec.shared_fraction > 0.0 &&
                          unit(choice) < spec.shared_fraction;
      if (!shared) {
        const std::uint64_t b = private_block(c, rng() % fp);
        const Op op = unit(rng) < spec.write_fraction ? Op::Write : Op::Read;
        t.push_back({c, op, addr(b)});
        ++n;
        continue;
      }
      switch (spec.pattern) {
        case Pattern::Private:
          break;
        case Pattern::SharedUniform: {
          const std::uint64_t b = choice() % fp;
          const Op op = unit(choice) < spec.write_fraction ? Op::Write : Op::Read;
          t.push_back({c, op, addr(b)});
          ++n;
          break;
        }
        case Pattern::ProducerConsumer: {
          // Round r of block b is written by core (b + r) mod cores and read by the rest.
          const std::uint64_t b = k % fp, r = k / fp;
          const Op op = (b + r) % cores == c ? Op::Write : Op::Read;
          t.push_back({c, op, addr(b)});
          ++n;
          break;
        }
        case Pattern::Migratory: {
          const std::uint64_t b = (k + c) % fp;
          t.push_back({c, Op::Read, addr(b)});
          ++n;
          if (n < spec.ops_per_core) {
            t.push_back({c, Op::Write, addr(b)});
            ++n;
          }
          break;
        }
      }
      ++k;
    }
  }
  return t;
}

namespace {

bool parse_u64(std::string_view s, int base, std::uint64_t& v) {
  if (s.empty()) return false;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace

Trace parse_trace(std::istream& in) {
  Trace t;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::string core, op, a, extra;
    if (!(ls >> core)) continue;
    if (!(ls >> op >> a)) throw ParseError(no, "expected `core op addr`");
    if (ls >> extra) throw ParseError(no, "trailing field '" + extra + "'");
    std::uint64_t c = 0, v = 0;
    if (!parse_u64(core, 10, c) || c > UINT32_MAX) throw ParseError(no, "bad core '" + core + "'");
    if (op != "R" && op != "W") throw ParseError(no, "bad op '" + op + "' (expected R or W)");
    std::string_view hex = a;
    if (hex.starts_with("0x") || hex.starts_with("0X")) hex.remove_prefix(2);
    if (!parse_u64(hex, 16, v)) throw ParseError(no, "bad address '" + a + "'");
    t.push_back({static_cast<std::uint32_t>(c), op == "R" ? Op::Read : Op::Write, BlockAddress(v)});
  }
  return t;
}

void write_trace(const Trace& t, std::ostream& out) {
  for (const auto& r : t) out << r.core << ' ' << op_char(r.op) << ' ' << to_hex(r.addr) << '\n';
}

Trace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace file " + path);
  return parse_trace(in);
}

void save_trace(const Trace& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace file " + path);
  write_trace(t, out);
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace mcsim
