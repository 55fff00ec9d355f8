#include "mcsim/checker.hpp"

#include <istream>
#include <map>
#include <memory>
#include <sstream>

namespace mcsim {

void CheckBounds::validate() const {
  if (chips < 1 || chips > 2 || cores < 1 || cores > 2) throw ConfigError("checker supports at most 2 chips x 2 cores");
  if (blocks < 1 || blocks > 2) throw ConfigError("checker supports 1 or 2 blocks");
  if (budget > 8 || pressure_budget > 8) throw ConfigError("checker op budget is at most 8");
  if (dir_entries < 1) throw ConfigError("directories need at least one entry");
}

SystemConfig checker_config(const CheckBounds& b, std::uint32_t dir_entries) {
  SystemConfig c;
  c.shape = {b.chips, b.cores, 1, 64};
  c.l1 = {1, 1};
  c.l2 = {1, 0};
  c.llc_bank = {1, 1};
  c.dir_ways = dir_entries < 8 ? dir_entries : 8;
  c.dllc_entries_per_bank = dir_entries;
  c.dmem_entries = dir_entries;
  c.probe_filter_entries = dir_entries;
  c.fllc_items = 4;
  c.fmem_items = 4;
  c.topology = {1, 1};
  c.fault = b.fault;
  return c;
}

namespace {

using ChannelKey = std::pair<std::uint32_t, std::uint32_t>;

struct Hash128 {
  std::uint64_t a, b;
  friend bool operator==(const Hash128&, const Hash128&) = default;
};

// Open-addressing set of 128-bit state hashes; {0,0} marks an empty slot.
class VisitedSet {
 public:
  VisitedSet() : slots_(1 << 16) {}

  bool insert(Hash128 h) {
    if (h.a == 0 && h.b == 0) h.b = 1;
    if ((size_ + 1) * 10 > slots_.size() * 7) grow();
    if (!place(slots_, h)) return false;
    ++size_;
    return true;
  }

 private:
  static bool place(std::vector<Hash128>& t, Hash128 h) {
    const std::size_t mask = t.size() - 1;
    for (std::size_t i = h.a & mask;; i = (i + 1) & mask) {
      if (t[i] == h) return false;
      if (t[i].a == 0 && t[i].b == 0) {
        t[i] = h;
        return true;
      }
    }
  }
  void grow() {
    std::vector<Hash128> next(slots_.size() * 2);
    for (const auto& h : slots_)
      if (h.a != 0 || h.b != 0) place(next, h);
    slots_.swap(next);
  }

  std::vector<Hash128> slots_;
  std::size_t size_ = 0;
};

std::uint64_t mix(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

Hash128 hash_words(const std::vector<std::uint64_t>& w) {
  std::uint64_t a = 0x243f6a8885a308d3ULL, b = 0x13198a2e03707344ULL;
  for (std::uint64_t x : w) {
    a = mix(a ^ x) + 0x9e3779b97f4a7c15ULL;
    b = mix(b + x * 0xff51afd7ed558ccdULL) ^ (b >> 17);
  }
  return {mix(a ^ w.size()), mix(b + w.size())};
}

struct World {
  std::unique_ptr<Protocol> proto;
  std::map<ChannelKey, std::vector<Message>> channels;
  std::map<BlockAddress, std::uint64_t> golden;  // last completed write per block
  std::uint32_t issued = 0;

  World clone() const { return World{proto->clone(), channels, golden, issued}; }

  bool quiet() const {
    for (const auto& [k, q] : channels)
      if (!q.empty()) return false;
    return true;
  }

  std::vector<Message> in_flight() const {
    std::vector<Message> v;
    for (const auto& [k, q] : channels) v.insert(v.end(), q.begin(), q.end());
    return v;
  }

  Hash128 hash() const {
    std::vector<std::uint64_t> w;
    w.reserve(512);
    proto->encode_state(w);
    w.push_back(~0ULL);
    for (const auto& [k, q] : channels) {
      if (q.empty()) continue;
      w.push_back((std::uint64_t{k.first} << 32) | k.second);
      for (const auto& m : q) encode_message(m, w);
    }
    w.push_back(~0ULL);
    for (const auto& [a, v] : golden) {
      w.push_back(a.value());
      w.push_back(v);
    }
    w.push_back(issued);
    return hash_words(w);
  }
};

class Explorer {
 public:
  Explorer(const SystemConfig& cfg, const CheckBounds& b) : cfg_(cfg), b_(b) {
    for (std::uint32_t i = 0; i < b.blocks; ++i)
      blocks_.emplace_back(std::uint64_t{i} * b.block_stride * cfg.shape.block_size);
  }

  std::vector<CheckStep> moves(const World& w) const {
    std::vector<CheckStep> out;
    if (b_.reduce) {
      // Deliveries into one agent touch only that agent and its outgoing
      // channels, so when the agent cannot also issue they commute with
      // everything else and form a persistent set.
      std::map<std::uint32_t, std::vector<CheckStep>> by_dst;
      for (const auto& [k, q] : w.channels)
        if (!q.empty()) by_dst[k.second].push_back({true, 0, Op::Read, q.front().addr, q.front().src, q.front().dst});
      const std::vector<CheckStep>* best = nullptr;
      for (const auto& [d, steps] : by_dst) {
        const AgentId& dst = steps.front().dst;
        const bool may_issue = dst.kind == AgentKind::CoreCache && w.issued < b_.budget &&
                               !w.proto->core_busy(dst.chip * cfg_.shape.cores_per_chip + dst.unit);
        if (may_issue) continue;
        if (!best || steps.size() < best->size()) best = &steps;
      }
      if (best) return *best;
    }
    for (const auto& [k, q] : w.channels)
      if (!q.empty()) out.push_back({true, 0, Op::Read, q.front().addr, q.front().src, q.front().dst});
    if (w.issued < b_.budget) {
      for (std::uint32_t c = 0; c < cfg_.shape.total_cores(); ++c) {
        if (w.proto->core_busy(c)) continue;
        for (Op op : {Op::Read, Op::Write})
          for (BlockAddress a : blocks_) {
            // L1 read hits leave the state untouched; their value is checked in place
            if (op == Op::Read && w.proto->l1_read_hit(c, a)) continue;
            out.push_back({false, c, op, a, {}, {}});
          }
      }
    }
    return out;
  }

  // Applies one step; returns a violation if any check fails.
  std::optional<Violation> apply(World& w, const CheckStep& s) const {
    Outbox out;
    try {
      if (s.deliver) {
        auto& q = w.channels.at({s.src.dense(cfg_.shape), s.dst.dense(cfg_.shape)});
        Message m = q.front();
        q.erase(q.begin());
        w.proto->deliver(m, 0, out);
      } else {
        ++w.issued;
        AccessResult r = w.proto->access(s.core, s.op, s.addr, 0, out);
        if (r.hit) out.completions.push_back({s.core, s.op, s.addr, r.version, r.source});
      }
    } catch (const ProtocolViolation& e) {
      return Violation{ViolationKind::Protocol, s.addr, e.what()};
    } catch (const std::exception& e) {
      return Violation{ViolationKind::Protocol, s.addr, std::string("controller error: ") + e.what()};
    }
    for (auto& snd : out.sends)
      w.channels[{snd.msg.src.dense(cfg_.shape), snd.msg.dst.dense(cfg_.shape)}].push_back(std::move(snd.msg));
    for (const auto& c : out.completions) {
      std::uint64_t& g = w.golden[c.addr];
      if (c.op == Op::Write) {
        if (c.version != g + 1)
          return Violation{ViolationKind::ValueCoherence, c.addr,
                           "write produced v" + std::to_string(c.version) + " after v" + std::to_string(g)};
        g = c.version;
      } else if (c.version != g) {
        return Violation{ViolationKind::ValueCoherence, c.addr,
                         "core " + std::to_string(c.core) + " read v" + std::to_string(c.version) + ", last write v" +
                             std::to_string(g)};
      }
    }
    for (std::uint32_t c = 0; c < cfg_.shape.total_cores(); ++c) {
      if (w.proto->core_busy(c)) continue;
      for (BlockAddress a : blocks_) {
        auto v = w.proto->l1_read_hit(c, a);
        auto g = w.golden.find(a);
        const std::uint64_t last = g == w.golden.end() ? 0 : g->second;
        if (v && *v != last)
          return Violation{ViolationKind::ValueCoherence, a,
                           "core " + std::to_string(c) + " would read v" + std::to_string(*v) + " from L1, last write v" +
                               std::to_string(last)};
      }
    }
    const bool quiet = w.quiet();
    std::vector<Violation> v;
    const auto flight = w.in_flight();
    w.proto->audit(flight, quiet, v);
    if (!v.empty()) return v.front();
    if (quiet && w.proto->busy_cores() != 0)
      return Violation{ViolationKind::Liveness, s.addr, std::to_string(w.proto->busy_cores()) + " cores wait with no messages in flight"};
    return std::nullopt;
  }

  CheckReport run() {
    CheckReport rep;
    struct Frame {
      World w;
      std::vector<CheckStep> moves;
      std::size_t next = 0;
      CheckStep via;
    };
    VisitedSet visited;
    std::vector<Frame> stack;
    World root{make_protocol(b_.protocol, cfg_), {}, {}, 0};
    visited.insert(root.hash());
    rep.states = 1;
    auto mv = moves(root);
    stack.push_back({std::move(root), std::move(mv), 0, {}});
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next == f.moves.size()) {
        stack.pop_back();
        continue;
      }
      const CheckStep step = f.moves[f.next++];
      // the parent is done after its last move, so that move reuses it
      World child = f.next == f.moves.size() ? std::move(f.w) : f.w.clone();
      ++rep.transitions;
      if (auto v = apply(child, step)) {
        rep.ok = false;
        rep.violation = *v;
        for (std::size_t i = 1; i < stack.size(); ++i) rep.trace.push_back(stack[i].via);
        rep.trace.push_back(step);
        return rep;
      }
      if (!visited.insert(child.hash())) continue;
      if (++rep.states > b_.max_states)
        throw BudgetExceeded("state cap of " + std::to_string(b_.max_states) + " reached");
      auto m = moves(child);
      stack.push_back({std::move(child), std::move(m), 0, step});
      rep.max_depth = std::max<std::uint32_t>(rep.max_depth, static_cast<std::uint32_t>(stack.size() - 1));
    }
    return rep;
  }

 private:
  SystemConfig cfg_;
  CheckBounds b_;
  std::vector<BlockAddress> blocks_;
};

}  // namespace

CheckReport explore_once(const SystemConfig& cfg, const CheckBounds& b) {
  b.validate();
  Explorer ex(cfg, b);
  return ex.run();
}

CheckReport explore(const CheckBounds& b) {
  b.validate();
  CheckReport total;
  for (std::uint32_t entries : {b.dir_entries, 1u}) {
    CheckBounds phase = b;
    // with tiny directories both blocks share a home so they compete for entries
    if (entries == 1) {
      phase.block_stride = b.chips;
      if (b.pressure_budget) phase.budget = b.pressure_budget;
    }
    CheckReport r = explore_once(checker_config(phase, entries), phase);
    r.phase = std::to_string(entries) + "-entry directories";
    if (phase.budget != b.budget) r.phase += ", budget " + std::to_string(phase.budget);
    total.phases.push_back(r.phase + ": " + std::to_string(r.states) + " states");
    total.states += r.states;
    total.transitions += r.transitions;
    total.max_depth = std::max(total.max_depth, r.max_depth);
    total.phase = r.phase;
    total.dir_entries = entries;
    total.block_stride = phase.block_stride;
    if (!r.ok) {
      total.ok = false;
      total.violation = r.violation;
      total.trace = std::move(r.trace);
      return total;
    }
    if (entries == 1) break;
  }
  return total;
}

std::optional<Violation> replay(const SystemConfig& cfg, const std::string& protocol, const std::vector<CheckStep>& steps) {
  CheckBounds b;
  b.protocol = protocol;
  b.chips = cfg.shape.num_chips;
  b.cores = cfg.shape.cores_per_chip;
  b.budget = static_cast<std::uint32_t>(steps.size());
  b.blocks = 1;
  for (const auto& s : steps)
    b.blocks = std::max<std::uint32_t>(b.blocks, static_cast<std::uint32_t>(s.addr.value() / cfg.shape.block_size) + 1);
  if (b.blocks > 2) b.blocks = 3;  // a same-home pair sits two blocks apart
  Explorer ex(cfg, b);
  World w{make_protocol(protocol, cfg), {}, {}, 0};
  for (const auto& s : steps) {
    if (s.deliver) {
      auto it = w.channels.find({s.src.dense(cfg.shape), s.dst.dense(cfg.shape)});
      if (it == w.channels.end() || it->second.empty())
        return Violation{ViolationKind::Protocol, s.addr, "replay: channel " + to_string(s.src) + ">" + to_string(s.dst) + " is empty"};
    }
    if (auto v = ex.apply(w, s)) return v;
  }
  return std::nullopt;
}

std::string format_replay(const std::vector<CheckStep>& steps, const SystemShape&) {
  std::ostringstream os;
  os << "# replay: issue lines are `core op addr`, deliveries are annotations\n";
  for (const auto& s : steps) {
    if (s.deliver)
      os << "@deliver " << to_string(s.src) << '>' << to_string(s.dst) << ' ' << to_hex(s.addr) << '\n';
    else
      os << s.core << ' ' << op_char(s.op) << ' ' << to_hex(s.addr) << '\n';
  }
  return os.str();
}

namespace {

AgentId parse_agent(const std::string& s, std::size_t line) {
  const auto d1 = s.find('.');
  const auto d2 = s.find('.', d1 == std::string::npos ? 0 : d1 + 1);
  if (d1 == std::string::npos || d2 == std::string::npos)
    throw ConfigError("replay line " + std::to_string(line) + ": bad agent '" + s + "'");
  const std::string kind = s.substr(0, d1);
  const auto chip = static_cast<std::uint32_t>(std::stoul(s.substr(d1 + 1, d2 - d1 - 1)));
  const auto unit = static_cast<std::uint32_t>(std::stoul(s.substr(d2 + 1)));
  if (kind == "core") return AgentId::core(chip, unit);
  if (kind == "llc") return AgentId::bank(chip, unit);
  if (kind == "mem") return AgentId::mem(chip);
  throw ConfigError("replay line " + std::to_string(line) + ": bad agent '" + s + "'");
}

}  // namespace

std::vector<CheckStep> parse_replay(std::istream& in, const SystemShape&) {
  std::vector<CheckStep> out;
  std::string text;
  std::size_t n = 0;
  while (std::getline(in, text)) {
    ++n;
    if (text.empty() || text[0] == '#') continue;
    std::istringstream ls(text);
    CheckStep s;
    std::string first;
    ls >> first;
    if (first == "@deliver") {
      std::string route, addr;
      ls >> route >> addr;
      const auto gt = route.find('>');
      if (gt == std::string::npos || addr.empty()) throw ConfigError("replay line " + std::to_string(n) + ": bad delivery");
      s.deliver = true;
      s.src = parse_agent(route.substr(0, gt), n);
      s.dst = parse_agent(route.substr(gt + 1), n);
      s.addr = BlockAddress(std::stoull(addr, nullptr, 16));
    } else {
      std::string op, addr;
      ls >> op >> addr;
      if ((op != "R" && op != "W") || addr.empty()) throw ConfigError("replay line " + std::to_string(n) + ": bad issue");
      s.core = static_cast<std::uint32_t>(std::stoul(first));
      s.op = op == "R" ? Op::Read : Op::Write;
      s.addr = BlockAddress(std::stoull(addr, nullptr, 16));
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace mcsim
