#include "mcsim/hta.hpp"

#include <bit>
#include <stdexcept>

#include "mcsim/flat_index.hpp"

namespace mcsim {

std::unique_ptr<Protocol> make_hta(const SystemConfig& cfg) { return std::make_unique<hta::HtaProtocol>(cfg); }

}  // namespace mcsim

namespace mcsim::hta {

namespace {

template <typename F>
void for_bits(std::uint64_t m, F&& f) {
  while (m) {
    f(static_cast<std::uint32_t>(std::countr_zero(m)));
    m &= m - 1;
  }
}

[[noreturn]] void fail(const std::string& what, BlockAddress a) { throw ProtocolViolation(what + " @" + to_hex(a)); }

void put_copy(Message& m, const Line& l) {
  m.carries_data = l.valid();
  m.state = l.state;
  m.flag = l.excl;
  m.dirty = l.dirty;
  m.version = l.version;
}

Line copy_of(const Message& m) {
  Line l;
  l.addr = m.addr;
  if (!m.carries_data) return l;
  l.state = m.state;
  l.excl = m.flag;
  l.dirty = m.dirty;
  l.version = m.version;
  return l;
}

Line line_of(BlockAddress a, const Gathered& g) {
  Line l;
  l.addr = a;
  if (!g.valid) return l;
  l.state = g.owner ? Moesi::O : Moesi::S;
  l.excl = g.owner && g.excl;
  l.dirty = g.owner && g.dirty;
  l.version = g.version;
  return l;
}

}  // namespace

void Gathered::add(const Line& l) {
  if (!l.valid()) return;
  if (valid && version != l.version)
    fail("copies disagree (v" + std::to_string(version) + " vs v" + std::to_string(l.version) + ")", l.addr);
  if (l.owner()) {
    if (owner) fail("two owner copies met", l.addr);
    owner = true;
    excl = l.excl;
    dirty = l.dirty;
  }
  valid = true;
  version = l.version;
  ++copies;
}

void Gathered::add(const Gathered& g) {
  if (!g.valid) return;
  if (valid && version != g.version) throw ProtocolViolation("gathered copies disagree");
  if (g.owner) {
    if (owner) throw ProtocolViolation("two owner copies met");
    owner = true;
    excl = g.excl;
    dirty = g.dirty;
  }
  valid = true;
  version = g.version;
  copies += g.copies;
}

HtaProtocol::HtaProtocol(const SystemConfig& cfg) : cfg_(cfg), amap_{cfg.shape} {
  cfg_.validate();
  const auto& s = shape();
  const std::uint32_t bits = static_cast<std::uint32_t>(s.block_bits());
  for (std::uint32_t i = 0; i < s.total_cores(); ++i) cores_.push_back({{cfg_.l1, cfg_.l2, bits}, false, {}, Op::Read});
  const std::uint32_t llc_shift = static_cast<std::uint32_t>(s.block_bits() + s.bank_bits());
  for (std::uint32_t i = 0; i < s.num_chips * s.llc_banks_per_chip; ++i)
    banks_.push_back({CacheArray<Line>(cfg_.llc_bank, llc_shift), {}});
  const DirConfig pf = cfg_.probe_filter_config();
  for (std::uint32_t i = 0; i < s.num_chips; ++i)
    homes_.push_back({CacheArray<PfEntry>({pf.sets, pf.ways}, pf.index_shift, pf.index_stride), {}, {}});
  lost_.resize(s.num_chips);
}

Message HtaProtocol::make(MsgKind k, AgentId src, AgentId dst, BlockAddress a) const {
  Message m;
  m.kind = k;
  m.src = src;
  m.dst = dst;
  m.addr = a;
  return m;
}

void HtaProtocol::count_fanout(std::uint32_t targets, bool broadcast) {
  if (targets == 0) return;
  if (broadcast)
    ++counters_.broadcasts;
  else if (targets == 1)
    ++counters_.unicasts;
  else
    ++counters_.multicasts;
}

std::uint32_t HtaProtocol::busy_cores() const {
  std::uint32_t n = 0;
  for (const auto& c : cores_) n += c.busy;
  return n;
}

std::uint64_t HtaProtocol::memory_version(BlockAddress a) const {
  const auto& mem = homes_[amap_.home_chip(a)].memory;
  auto it = mem.find(a);
  return it == mem.end() ? 0 : it->second;
}

// ---------------------------------------------------------------- cores

std::optional<std::uint64_t> HtaProtocol::l1_read_hit(std::uint32_t core, BlockAddress a) const {
  const CoreState& cs = cores_.at(core);
  if (cs.caches.level_of(a) != PrivateHierarchy<Line>::Level::L1) return std::nullopt;
  return cs.caches.find(a)->version;
}

AccessResult HtaProtocol::access(std::uint32_t core, Op op, BlockAddress a, Cycle, Outbox& out) {
  CoreState& cs = cores_.at(core);
  if (cs.busy) throw std::logic_error("core " + std::to_string(core) + " already has an outstanding access");
  const auto& lat = cfg_.latency;
  const std::uint32_t chip = core / shape().cores_per_chip;
  const std::uint32_t unit = core % shape().cores_per_chip;
  const auto level = cs.caches.level_of(a);
  Line* line = cs.caches.find(a);

  const bool hit = line && (op == Op::Read || line->state == Moesi::M || line->state == Moesi::E);
  if (hit) {
    if (op == Op::Write) {
      ++line->version;
      line->state = Moesi::M;
      line->dirty = true;
    }
    AccessResult r;
    r.hit = true;
    r.version = line->version;
    if (level == PrivateHierarchy<Line>::Level::L1) {
      r.latency = lat.l1_cycles;
      r.source = ServiceSource::L1;
      cs.caches.touch(a);
    } else {
      ++counters_.l1_misses;
      r.latency = lat.l1_cycles + lat.l2_cycles;
      r.source = ServiceSource::L2;
      if (auto v = cs.caches.promote(a)) core_writeback(core, *v, out);
    }
    return r;
  }

  ++counters_.l1_misses;
  ++counters_.onchip_misses;
  cs.busy = true;
  cs.pending_addr = a;
  cs.pending_op = op;
  Message req = make(op == Op::Read ? MsgKind::ReadReq : MsgKind::WriteReq, AgentId::core(chip, unit), bank_id(chip, a), a);
  req.op = op;
  req.requestor = unit;
  if (line) {
    // Upgrade: the old copy travels with the request.
    put_copy(req, *cs.caches.erase(a));
    req.emptied = true;
  }
  out.send(req, lat.l1_cycles + lat.l2_cycles);
  return {false, lat.l1_cycles + lat.l2_cycles, ServiceSource::Llc, 0};
}

void HtaProtocol::core_writeback(std::uint32_t global, const Line& line, Outbox& out) {
  if (!line.owner()) return;  // shared copies leave silently
  const std::uint32_t chip = global / shape().cores_per_chip;
  Message m = make(MsgKind::PrivWriteback, AgentId::core(chip, global % shape().cores_per_chip), bank_id(chip, line.addr),
                   line.addr);
  put_copy(m, line);
  m.emptied = true;
  out.send(m, cfg_.latency.l2_cycles);
}

void HtaProtocol::core_fill(std::uint32_t global, Line line, Outbox& out) {
  if (auto v = cores_[global].caches.fill(std::move(line))) core_writeback(global, *v, out);
}

void HtaProtocol::core_deliver(const Message& m, Outbox& out) {
  const std::uint32_t global = m.dst.chip * shape().cores_per_chip + m.dst.unit;
  CoreState& cs = cores_[global];
  const Cycle reply_delay = cfg_.latency.l1_cycles + cfg_.latency.l2_cycles;
  switch (m.kind) {
    case MsgKind::DataResp: {
      if (!cs.busy || cs.pending_addr != m.addr) fail("unexpected grant at " + to_string(m.dst), m.addr);
      if (!m.carries_data) fail("core grant without data", m.addr);
      Line l = copy_of(m);
      if (cs.pending_op == Op::Write) {
        if (l.state != Moesi::M) fail("write granted in state " + std::string(to_string(l.state)), m.addr);
        ++l.version;
        l.dirty = true;
        l.excl = true;
      }
      cs.busy = false;
      out.completions.push_back({global, cs.pending_op, m.addr, l.version, m.source});
      core_fill(global, l, out);
      return;
    }
    case MsgKind::ReadFwd: {
      Message r = make(MsgKind::TokenResp, m.dst, m.src, m.addr);
      r.op = Op::Read;
      if (Line* l = cs.caches.find(m.addr)) {
        put_copy(r, *l);
        if (l->owner()) {
          l->state = Moesi::O;
          if (m.external) l->excl = false;
        }
      }
      out.send(r, reply_delay);
      return;
    }
    case MsgKind::Inval: {
      Message r = make(MsgKind::TokenResp, m.dst, m.src, m.addr);
      r.op = Op::Write;
      r.cause = m.cause;
      if (auto l = cs.caches.erase(m.addr)) {
        put_copy(r, *l);
        r.emptied = true;
      }
      out.send(r, reply_delay);
      return;
    }
    default:
      fail("core cannot handle " + describe(m), m.addr);
  }
}

// ---------------------------------------------------------------- LLC banks

void HtaProtocol::bank_deliver(const Message& m, Outbox& out) {
  const std::uint32_t chip = m.dst.chip;
  const BlockAddress a = m.addr;
  BankState& b = bank_for(chip, a);
  switch (m.kind) {
    case MsgKind::ReadReq:
    case MsgKind::WriteReq: {
      auto it = b.mshr.find(a);
      if (m.carries_data && it != b.mshr.end() && !it->second.idle()) {
        // a request that has to wait gives up its copy now
        Message req = m;
        req.carries_data = false;
        req.emptied = false;
        if (m.state != Moesi::S) {
          bank_absorb(chip, m, out);
        } else {
          auto& st = it->second;
          BankTxn* t = st.local && st.local->phase == BankPhase::Collecting ? &*st.local : (st.ext ? &*st.ext : nullptr);
          if (t && (t->kind == BankTxnKind::LocalWrite || t->kind == BankTxnKind::ExtInval)) t->collected.add(copy_of(m));
        }
        b.mshr[a].local_queue.push_back(req);
      } else {
        b.mshr[a].local_queue.push_back(m);
      }
      break;
    }
    case MsgKind::PrivWriteback:
      bank_absorb(chip, m, out);
      break;
    case MsgKind::TokenResp: {
      auto it = b.mshr.find(a);
      if (it == b.mshr.end()) fail("stray reply at " + to_string(m.dst), a);
      auto& st = it->second;
      BankTxn* t = st.local && st.local->phase == BankPhase::Collecting ? &*st.local : (st.ext ? &*st.ext : nullptr);
      if (!t || t->pending == 0) fail("stray reply at " + to_string(m.dst), a);
      t->collected.add(copy_of(m));
      if (--t->pending == 0) bank_resolve(chip, a, out);
      break;
    }
    case MsgKind::DataResp: {
      auto it = b.mshr.find(a);
      if (it == b.mshr.end() || !it->second.local || it->second.local->phase != BankPhase::AtHome)
        fail("unexpected home grant at " + to_string(m.dst), a);
      BankTxn& t = *it->second.local;
      Line l = copy_of(m);
      if (t.kind == BankTxnKind::LocalWrite) {
        if (!m.carries_data) {
          if (!t.collected.valid) fail("write granted without data to a chip that lost its copy", a);
          l = line_of(a, t.collected);
        }
        l.state = Moesi::M;
        l.excl = true;
      } else if (!m.carries_data) {
        fail("read granted without data", a);
      }
      t.collected = {};
      bank_grant_core(chip, a, t.requestor, l, m.source, out);
      bank_finish(chip, a, false, out);
      break;
    }
    case MsgKind::ReadFwd:
    case MsgKind::Inval:
      b.mshr[a].probe_queue.push_back(m);
      break;
    default:
      fail("bank cannot handle " + describe(m), a);
  }
  bank_pump(chip, a, out);
}

void HtaProtocol::bank_absorb(std::uint32_t chip, const Message& m, Outbox& out) {
  const BlockAddress a = m.addr;
  BankState& b = bank_for(chip, a);
  auto it = b.mshr.find(a);
  if (it != b.mshr.end()) {
    auto& st = it->second;
    BankTxn* t = st.local && st.local->phase == BankPhase::Collecting ? &*st.local : (st.ext ? &*st.ext : nullptr);
    if (t && (t->kind == BankTxnKind::LocalWrite || t->kind == BankTxnKind::ExtInval)) {
      t->collected.add(copy_of(m));
      return;
    }
    if (!t && st.local) fail("owner writeback while the chip's request is at home", a);
  }
  put_llc(chip, copy_of(m), out);
}

void HtaProtocol::put_llc(std::uint32_t chip, Line l, Outbox& out) {
  BankState& b = bank_for(chip, l.addr);
  if (b.llc.find(l.addr)) fail("second LLC copy", l.addr);
  if (l.owner()) l.state = Moesi::O;  // LLC owners keep exclusivity in the flag
  if (!b.llc.enabled()) {
    evict_llc(chip, l, out);
    return;
  }
  if (auto v = b.llc.insert(l)) evict_llc(chip, *v, out);
}

void HtaProtocol::evict_llc(std::uint32_t chip, const Line& victim, Outbox& out) {
  ++counters_.llc_evictions;
  if (!victim.owner()) return;
  Message m = make(victim.dirty ? MsgKind::MemWriteBack : MsgKind::EvictNotify, bank_id(chip, victim.addr),
                   home_id(victim.addr), victim.addr);
  put_copy(m, victim);
  m.requestor = chip;
  m.emptied = true;
  m.cause = InvalCause::LlcEviction;
  out.send(m, cfg_.latency.llc_bank_cycles);
}

void HtaProtocol::bank_pump(std::uint32_t chip, BlockAddress a, Outbox& out) {
  BankState& b = bank_for(chip, a);
  for (;;) {
    auto it = b.mshr.find(a);
    if (it == b.mshr.end()) return;
    auto& st = it->second;
    if (!st.ext && !st.probe_queue.empty() && (!st.local || st.local->phase == BankPhase::AtHome)) {
      Message p = st.probe_queue.front();
      st.probe_queue.erase(st.probe_queue.begin());
      bank_start_ext(chip, a, p, out);
      continue;
    }
    if (!st.local && !st.ext && !st.local_queue.empty()) {
      Message r = st.local_queue.front();
      st.local_queue.erase(st.local_queue.begin());
      bank_start_local(chip, a, r, out);
      continue;
    }
    if (st.idle()) b.mshr.erase(it);
    return;
  }
}

void HtaProtocol::bank_snoop(std::uint32_t chip, BlockAddress a, BankTxn& t, MsgKind kind,
                             std::optional<std::uint32_t> skip, Outbox& out) {
  std::uint32_t n = 0;
  for (std::uint32_t u = 0; u < shape().cores_per_chip; ++u) {
    if (skip && *skip == u) continue;
    Message q = make(kind, bank_id(chip, a), AgentId::core(chip, u), a);
    q.op = kind == MsgKind::Inval ? Op::Write : Op::Read;
    q.external = t.kind == BankTxnKind::ExtRead || t.kind == BankTxnKind::ExtInval;
    q.cause = kind == MsgKind::Inval ? t.cause : InvalCause::None;
    out.send(q, cfg_.latency.llc_bank_cycles);
    ++t.pending;
    ++n;
  }
  count_fanout(n, n > 1);
}

void HtaProtocol::bank_start_local(std::uint32_t chip, BlockAddress a, const Message& req, Outbox& out) {
  BankState& b = bank_for(chip, a);
  auto& st = b.mshr[a];
  st.local = BankTxn{};
  BankTxn& t = *st.local;
  t.requestor = req.requestor;
  if (req.kind == MsgKind::ReadReq) {
    t.kind = BankTxnKind::LocalRead;
    if (b.llc.find(a)) {
      Line l = *b.llc.erase(a);
      if (l.owner()) l.state = Moesi::O;
      bank_grant_core(chip, a, t.requestor, l, ServiceSource::Llc, out);
      bank_finish(chip, a, false, out);
      return;
    }
    bank_snoop(chip, a, t, MsgKind::ReadFwd, t.requestor, out);
  } else {
    t.kind = BankTxnKind::LocalWrite;
    t.cause = InvalCause::Coherence;
    t.collected.add(copy_of(req));
    if (auto l = b.llc.erase(a)) t.collected.add(*l);
    bank_snoop(chip, a, t, MsgKind::Inval, t.requestor, out);
  }
  if (t.pending == 0) bank_resolve(chip, a, out);
}

void HtaProtocol::bank_start_ext(std::uint32_t chip, BlockAddress a, const Message& probe, Outbox& out) {
  BankState& b = bank_for(chip, a);
  auto& st = b.mshr[a];
  st.ext = BankTxn{};
  BankTxn& t = *st.ext;
  t.requestor = probe.requestor;
  if (probe.kind == MsgKind::ReadFwd) {
    t.kind = BankTxnKind::ExtRead;
    if (st.local && st.local->collected.valid) {
      // an upgrade waiting at home already holds every copy on this chip
      st.local->collected.excl = false;
      t.collected = st.local->collected;
    } else if (Line* l = b.llc.find(a)) {
      l->excl = false;
      t.collected.add(*l);
    } else {
      bank_snoop(chip, a, t, MsgKind::ReadFwd, std::nullopt, out);
    }
  } else {
    t.kind = BankTxnKind::ExtInval;
    t.cause = probe.cause;
    if (auto l = b.llc.erase(a)) t.collected.add(*l);
    if (st.local && st.local->collected.valid) {
      t.collected.add(st.local->collected);
      st.local->collected = {};
    }
    bank_snoop(chip, a, t, MsgKind::Inval, std::nullopt, out);
  }
  if (t.pending == 0) bank_resolve(chip, a, out);
}

void HtaProtocol::bank_resolve(std::uint32_t chip, BlockAddress a, Outbox& out) {
  BankState& b = bank_for(chip, a);
  auto& st = b.mshr.at(a);
  const bool ext = !(st.local && st.local->phase == BankPhase::Collecting);
  BankTxn& t = ext ? *st.ext : *st.local;
  auto go_home = [&](MsgKind kind) {
    t.phase = BankPhase::AtHome;
    ++counters_.llc_misses;
    if (lost_[chip].erase(a)) ++counters_.ext_inval_misses;
    Message r = make(kind, bank_id(chip, a), home_id(a), a);
    r.op = kind == MsgKind::ReadReq ? Op::Read : Op::Write;
    r.requestor = chip;
    r.flag = t.collected.valid;
    out.send(r, cfg_.latency.llc_bank_cycles);
  };
  switch (t.kind) {
    case BankTxnKind::LocalRead:
      if (t.collected.valid) {
        Line l = line_of(a, t.collected);
        l.state = Moesi::S;
        l.excl = l.dirty = false;
        bank_grant_core(chip, a, t.requestor, l, ServiceSource::Llc, out);
        bank_finish(chip, a, false, out);
      } else if (b.llc.find(a)) {
        Line l = *b.llc.erase(a);
        if (l.owner()) l.state = Moesi::O;
        bank_grant_core(chip, a, t.requestor, l, ServiceSource::Llc, out);
        bank_finish(chip, a, false, out);
      } else {
        go_home(MsgKind::ReadReq);
      }
      return;
    case BankTxnKind::LocalWrite:
      if (t.collected.owner && t.collected.excl) {
        Line l = line_of(a, t.collected);
        l.state = Moesi::M;
        bank_grant_core(chip, a, t.requestor, l, ServiceSource::Llc, out);
        bank_finish(chip, a, false, out);
      } else {
        go_home(MsgKind::WriteReq);
      }
      return;
    case BankTxnKind::ExtRead: {
      if (Line* l = b.llc.find(a)) {
        l->excl = false;
        // replies are reports; an owner that reported and then moved here counts once
        if (!t.collected.owner) t.collected.add(*l);
      }
      Message r = make(MsgKind::TokenResp, bank_id(chip, a), home_id(a), a);
      r.op = Op::Read;
      r.requestor = chip;
      Line c = line_of(a, t.collected);
      c.excl = false;
      put_copy(r, c);
      out.send(r, cfg_.latency.llc_bank_cycles);
      bank_finish(chip, a, true, out);
      return;
    }
    case BankTxnKind::ExtInval: {
      Message r = make(MsgKind::TokenResp, bank_id(chip, a), home_id(a), a);
      r.op = Op::Write;
      r.requestor = chip;
      r.cause = t.cause;
      put_copy(r, line_of(a, t.collected));
      r.emptied = t.collected.valid;
      if (t.cause == InvalCause::DirectoryEviction && t.collected.copies > 0) {
        counters_.external_invalidations += t.collected.copies;
        lost_[chip].insert(a);
      }
      out.send(r, cfg_.latency.llc_bank_cycles);
      bank_finish(chip, a, true, out);
      return;
    }
  }
}

void HtaProtocol::bank_grant_core(std::uint32_t chip, BlockAddress a, std::uint32_t unit, Line l, ServiceSource src,
                                  Outbox& out) {
  if (!l.valid()) fail("core grant without data", a);
  Message g = make(MsgKind::DataResp, bank_id(chip, a), AgentId::core(chip, unit), a);
  put_copy(g, l);
  g.source = src;
  out.send(g, cfg_.latency.llc_bank_cycles);
}

void HtaProtocol::bank_finish(std::uint32_t chip, BlockAddress a, bool ext, Outbox&) {
  auto& st = bank_for(chip, a).mshr.at(a);
  if (ext)
    st.ext.reset();
  else
    st.local.reset();
}

// ---------------------------------------------------------------- home

std::uint64_t HtaProtocol::read_memory(std::uint32_t home, BlockAddress a) {
  ++counters_.memory_reads;
  auto& mem = homes_[home].memory;
  auto it = mem.find(a);
  return it == mem.end() ? 0 : it->second;
}

void HtaProtocol::home_deliver(const Message& m, Outbox& out) {
  const std::uint32_t home = m.dst.chip;
  const BlockAddress a = m.addr;
  HomeState& h = homes_[home];
  switch (m.kind) {
    case MsgKind::ReadReq:
    case MsgKind::WriteReq:
      h.mshr[a].queue.push_back(m);
      break;
    case MsgKind::MemWriteBack:
    case MsgKind::EvictNotify: {
      if (m.dirty) {
        h.memory[a] = m.version;
        ++counters_.memory_writes;
      } else if (m.version != memory_version(a)) {
        fail("clean eviction v" + std::to_string(m.version) + " disagrees with memory", a);
      }
      if (PfEntry* e = h.pf.find(a); e && e->kind != PfKind::Shared && e->owner == m.requestor) e->kind = PfKind::Shared;
      break;
    }
    case MsgKind::TokenResp: {
      auto it = h.mshr.find(a);
      if (it == h.mshr.end() || !it->second.active || it->second.active->pending == 0)
        fail("stray reply at " + to_string(m.dst), a);
      auto& st = it->second;
      HomeTxn& t = *st.active;
      t.collected.add(copy_of(m));
      if (m.emptied)
        for (auto& q : st.queue)
          if (q.requestor == m.requestor) q.flag = false;
      if (--t.pending == 0) home_resolve(home, a, out);
      break;
    }
    default:
      fail("memory controller cannot handle " + describe(m), a);
  }
  home_pump(home, a, out);
}

void HtaProtocol::home_pump(std::uint32_t home, BlockAddress a, Outbox& out) {
  HomeState& h = homes_[home];
  for (;;) {
    auto it = h.mshr.find(a);
    if (it == h.mshr.end()) return;
    auto& st = it->second;
    if (st.active) return;
    if (!st.queue.empty()) {
      Message r = st.queue.front();
      st.queue.erase(st.queue.begin());
      home_start(home, a, r, out);
      continue;
    }
    h.mshr.erase(it);
    // entries that could not be displaced earlier leave now
    while (auto v = h.pf.shrink_set(a, [&](const PfEntry& e) { return !h.mshr.count(e.addr); })) pf_evict(home, *v, out);
    return;
  }
}

void HtaProtocol::home_probe(std::uint32_t home, BlockAddress a, HomeTxn& t, MsgKind kind, InvalCause cause,
                             std::uint64_t chips, Outbox& out) {
  std::uint32_t n = 0;
  for_bits(chips, [&](std::uint32_t c) {
    Message p = make(kind, AgentId::mem(home), bank_id(c, a), a);
    p.op = kind == MsgKind::Inval ? Op::Write : Op::Read;
    p.requestor = t.requestor;
    p.external = true;
    p.cause = cause;
    out.send(p, cfg_.latency.llc_bank_cycles);
    ++t.pending;
    ++n;
  });
  count_fanout(n, n > 1);
}

void HtaProtocol::home_start(std::uint32_t home, BlockAddress a, const Message& req, Outbox& out) {
  HomeState& h = homes_[home];
  auto& st = h.mshr[a];
  st.active = HomeTxn{};
  HomeTxn& t = *st.active;
  t.kind = req.kind == MsgKind::ReadReq ? HomeTxnKind::Read : HomeTxnKind::Write;
  t.requestor = req.requestor;
  t.has_data = req.flag;
  PfEntry* e = h.pf.find(a);
  if (!e) {
    pf_allocate(home, {a, 0, PfKind::Exclusive, t.requestor}, out);
    if (t.kind == HomeTxnKind::Read) {
      home_grant(home, a, t, Moesi::E, read_memory(home, a), ServiceSource::Memory, out);
    } else {
      std::optional<std::uint64_t> d;
      if (!t.has_data) d = read_memory(home, a);
      home_grant(home, a, t, Moesi::M, d, ServiceSource::Memory, out);
    }
    return;
  }
  h.pf.touch(*e);
  if (t.kind == HomeTxnKind::Read) {
    if (e->kind == PfKind::Shared) {
      home_grant(home, a, t, Moesi::S, read_memory(home, a), ServiceSource::Memory, out);
      return;
    }
    t.forwarded = true;
    t.probed_owner = e->owner;
    home_probe(home, a, t, MsgKind::ReadFwd, InvalCause::None, 1ULL << e->owner, out);
    return;
  }
  std::uint64_t targets = 0;
  if (e->kind == PfKind::Exclusive)
    targets = e->owner == t.requestor ? 0 : (1ULL << e->owner);
  else
    targets = other_chips(t.requestor);
  home_probe(home, a, t, MsgKind::Inval, InvalCause::Coherence, targets, out);
  if (t.pending == 0) home_resolve(home, a, out);
}

void HtaProtocol::home_resolve(std::uint32_t home, BlockAddress a, Outbox& out) {
  HomeState& h = homes_[home];
  HomeTxn& t = *h.mshr.at(a).active;
  if (t.kind == HomeTxnKind::PfEvict) {
    if (t.collected.owner && t.collected.dirty) {
      h.memory[a] = t.collected.version;
      ++counters_.memory_writes;
    }
    home_finish(home, a, out);
    return;
  }
  PfEntry* e = h.pf.find(a);
  if (!e) fail("probe-filter entry vanished during a transaction", a);
  const bool remote = t.collected.valid;
  if (t.kind == HomeTxnKind::Read) {
    if (t.collected.owner) {
      e->kind = PfKind::Owned;
      e->owner = t.probed_owner;
    } else {
      e->kind = PfKind::Shared;
    }
    const std::uint64_t v = remote ? t.collected.version : read_memory(home, a);
    home_grant(home, a, t, Moesi::S, v, remote ? ServiceSource::RemoteChip : ServiceSource::Memory, out);
    return;
  }
  e->kind = PfKind::Exclusive;
  e->owner = t.requestor;
  std::optional<std::uint64_t> d;
  ServiceSource src = ServiceSource::Llc;
  if (!t.has_data) {
    d = remote ? t.collected.version : read_memory(home, a);
    src = remote ? ServiceSource::RemoteChip : ServiceSource::Memory;
  }
  home_grant(home, a, t, Moesi::M, d, src, out);
}

void HtaProtocol::home_grant(std::uint32_t home, BlockAddress a, HomeTxn& t, Moesi state,
                             std::optional<std::uint64_t> data, ServiceSource src, Outbox& out) {
  Message g = make(MsgKind::DataResp, AgentId::mem(home), bank_id(t.requestor, a), a);
  g.op = t.kind == HomeTxnKind::Write ? Op::Write : Op::Read;
  g.state = state;
  g.flag = state == Moesi::E || state == Moesi::M;
  g.carries_data = data.has_value();
  g.version = data.value_or(0);
  g.requestor = t.requestor;
  g.source = src;
  out.send(g, src == ServiceSource::Memory ? cfg_.latency.memory_cycles : cfg_.latency.llc_bank_cycles);
  home_finish(home, a, out);
}

void HtaProtocol::home_finish(std::uint32_t home, BlockAddress a, Outbox&) { homes_[home].mshr.at(a).active.reset(); }

void HtaProtocol::pf_allocate(std::uint32_t home, PfEntry e, Outbox& out) {
  HomeState& h = homes_[home];
  if (auto v = h.pf.insert(e, [&](const PfEntry& x) { return !h.mshr.count(x.addr); })) pf_evict(home, *v, out);
}

void HtaProtocol::pf_evict(std::uint32_t home, PfEntry victim, Outbox& out) {
  HomeState& h = homes_[home];
  ++counters_.probe_filter_evictions;
  auto& st = h.mshr[victim.addr];
  st.active = HomeTxn{};
  HomeTxn& t = *st.active;
  t.kind = HomeTxnKind::PfEvict;
  t.requestor = home;
  t.victim = victim;
  std::uint64_t targets = (1ULL << shape().num_chips) - 1;
  if (cfg_.fault == Fault::HtaInclusivityBreak) targets = 0;
  home_probe(home, victim.addr, t, MsgKind::Inval, InvalCause::DirectoryEviction, targets, out);
  if (t.pending == 0) {
    home_resolve(home, victim.addr, out);
    if (st.queue.empty()) h.mshr.erase(victim.addr);
  }
}

// ---------------------------------------------------------------- dispatch

void HtaProtocol::deliver(const Message& m, Cycle, Outbox& out) {
  switch (m.dst.kind) {
    case AgentKind::CoreCache:
      core_deliver(m, out);
      return;
    case AgentKind::LlcBank:
    case AgentKind::Dfllc:
      bank_deliver(m, out);
      return;
    case AgentKind::MemCtrl:
      home_deliver(m, out);
      return;
  }
}

// ---------------------------------------------------------------- inspection

namespace {

struct Encoder {
  std::vector<std::uint64_t>& v;
  void u(std::uint64_t x) { v.push_back(x); }
  void line(const Line& l) {
    u(l.addr.value());
    u(static_cast<std::uint64_t>(l.state) | (std::uint64_t{l.excl} << 4) | (std::uint64_t{l.dirty} << 5) |
      (l.version << 8));
  }
  void gathered(const Gathered& g) {
    u(std::uint64_t{g.valid} | (std::uint64_t{g.owner} << 1) | (std::uint64_t{g.excl} << 2) |
      (std::uint64_t{g.dirty} << 3) | (std::uint64_t{g.copies} << 8) | (g.version << 24));
  }
  void txn(const BankTxn& t) {
    u(static_cast<std::uint64_t>(t.kind) | (static_cast<std::uint64_t>(t.phase) << 4) |
      (static_cast<std::uint64_t>(t.cause) << 8) | (std::uint64_t{t.requestor} << 16) | (std::uint64_t{t.pending} << 40));
    gathered(t.collected);
  }
};

}  // namespace

void HtaProtocol::encode_state(std::vector<std::uint64_t>& out) const {
  Encoder e{out};
  for (const auto& c : cores_) {
    e.u((c.busy ? 1 : 0) | (static_cast<std::uint64_t>(c.pending_op) << 1));
    e.u(c.busy ? c.pending_addr.value() : 0);
    c.caches.for_each_canonical([&](const Line& l) {
      e.line(l);
      e.u(c.caches.level_of(l.addr) == PrivateHierarchy<Line>::Level::L1 ? 0 : 1);
    });
    e.u(~0ULL);
  }
  for (const auto& b : banks_) {
    b.llc.for_each_canonical([&](const Line& l) { e.line(l); });
    e.u(~0ULL);
    for (const auto& [a, st] : b.mshr) {
      e.u(a.value());
      e.u((st.local ? 1 : 0) | (st.ext ? 2 : 0));
      if (st.local) e.txn(*st.local);
      if (st.ext) e.txn(*st.ext);
      e.u(st.local_queue.size());
      for (const auto& m : st.local_queue) encode_message(m, out);
      e.u(st.probe_queue.size());
      for (const auto& m : st.probe_queue) encode_message(m, out);
    }
    e.u(~0ULL);
  }
  for (const auto& h : homes_) {
    h.pf.for_each_canonical([&](const PfEntry& p) {
      e.u(p.addr.value());
      e.u(static_cast<std::uint64_t>(p.kind) | (std::uint64_t{p.owner} << 8));
    });
    e.u(~0ULL);
    for (const auto& [a, v] : h.memory) {
      if (v == 0) continue;
      e.u(a.value());
      e.u(v);
    }
    e.u(~0ULL);
    for (const auto& [a, st] : h.mshr) {
      e.u(a.value());
      if (st.active) {
        const HomeTxn& t = *st.active;
        e.u(static_cast<std::uint64_t>(t.kind) | (std::uint64_t{t.has_data} << 4) | (std::uint64_t{t.forwarded} << 5) |
            (std::uint64_t{t.requestor} << 8) | (std::uint64_t{t.probed_owner} << 24) | (std::uint64_t{t.pending} << 40));
        e.gathered(t.collected);
        e.u(t.victim.addr.value());
        e.u(static_cast<std::uint64_t>(t.victim.kind) | (std::uint64_t{t.victim.owner} << 8));
      } else {
        e.u(~1ULL);
      }
      e.u(st.queue.size());
      for (const auto& m : st.queue) encode_message(m, out);
    }
    e.u(~0ULL);
  }
}

void HtaProtocol::audit(std::span<const Message>, bool quiescent, std::vector<Violation>& out) const {
  struct Agg {
    std::uint64_t version = 0;
    std::uint64_t chips = 0;  // chips holding any copy
    std::uint32_t copies = 0;
    std::uint32_t owners = 0;
    std::uint32_t owner_chip = 0;
    Moesi owner_state = Moesi::I;
    bool owner_excl = false;
    bool bad_version = false;
    std::uint64_t other_version = 0;
  };
  FlatIndex idx;
  std::vector<Agg> agg;
  auto add = [&](std::uint32_t chip, const Line& l) {
    const auto [i, fresh] = idx.insert(l.addr.value());
    if (fresh) agg.push_back({l.version});
    Agg& g = agg[i];
    if (g.version != l.version && !g.bad_version) {
      g.bad_version = true;
      g.other_version = l.version;
    }
    g.chips |= 1ULL << chip;
    ++g.copies;
    if (l.owner()) {
      ++g.owners;
      g.owner_chip = chip;
      g.owner_state = l.state;
      g.owner_excl = l.excl;
    }
  };
  for (std::uint32_t c = 0; c < cores_.size(); ++c)
    cores_[c].caches.for_each([&](const Line& l) { add(c / shape().cores_per_chip, l); });
  for (std::uint32_t i = 0; i < banks_.size(); ++i)
    banks_[i].llc.for_each([&](const Line& l) { add(i / shape().llc_banks_per_chip, l); });

  for (std::uint32_t i = 0; i < idx.size(); ++i) {
    const Agg& g = agg[i];
    const BlockAddress a(idx.key(i));
    if (g.bad_version) {
      out.push_back({ViolationKind::ValueCoherence, a,
                     "cached copies hold v" + std::to_string(g.version) + " and v" + std::to_string(g.other_version)});
      continue;
    }
    if (g.owners > 1) {
      out.push_back({ViolationKind::Swmr, a, std::to_string(g.owners) + " owner copies"});
      continue;
    }
    if (g.owners == 1) {
      const bool sole_on_chip = g.owner_state == Moesi::M || g.owner_state == Moesi::E;
      if ((sole_on_chip || g.owner_excl) && g.chips != (1ULL << g.owner_chip)) {
        const auto other = static_cast<std::uint32_t>(std::countr_zero(g.chips & ~(1ULL << g.owner_chip)));
        out.push_back({ViolationKind::Swmr, a,
                       "chip " + std::to_string(other) + " holds a copy while chip " + std::to_string(g.owner_chip) +
                           " is exclusive"});
        continue;
      }
      if (sole_on_chip && g.copies > 1) {
        out.push_back({ViolationKind::Swmr, a, std::string(to_string(g.owner_state)) + " copy is not alone"});
        continue;
      }
    }
    if (!quiescent) continue;
    const PfEntry* e = homes_[amap_.home_chip(a)].pf.find(a);
    if (!e) {
      out.push_back({ViolationKind::Inclusivity, a,
                     "chip " + std::to_string(std::countr_zero(g.chips)) +
                         " caches a block the probe filter does not track"});
      continue;
    }
    if (e->kind == PfKind::Exclusive && g.chips != (1ULL << e->owner)) {
      const auto other = static_cast<std::uint32_t>(std::countr_zero(g.chips & ~(1ULL << e->owner)));
      out.push_back({ViolationKind::DirectoryTracking, a,
                     "probe filter says exclusive at chip " + std::to_string(e->owner) + ", copy at chip " +
                         std::to_string(other)});
      continue;
    }
    if (g.owners == 1 && (e->kind == PfKind::Shared || e->owner != g.owner_chip))
      out.push_back({ViolationKind::DirectoryTracking, a,
                     "owner at chip " + std::to_string(g.owner_chip) + " is not recorded by the probe filter"});
  }
}

}  // namespace mcsim::hta
