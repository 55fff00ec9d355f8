#include "mcsim/rainbow.hpp"

#include <bit>
#include <stdexcept>

namespace mcsim {

std::unique_ptr<Protocol> make_rainbow(const SystemConfig& cfg) { return std::make_unique<rainbow::RainbowProtocol>(cfg); }

}  // namespace mcsim

namespace mcsim::rainbow {

namespace {

constexpr std::uint64_t bit(std::uint32_t i) { return 1ULL << i; }

template <typename F>
void for_bits(std::uint64_t m, F&& f) {
  while (m) {
    f(static_cast<std::uint32_t>(std::countr_zero(m)));
    m &= m - 1;
  }
}

[[noreturn]] void fail(const std::string& what, BlockAddress a) { throw ProtocolViolation(what + " @" + to_hex(a)); }

}  // namespace

void Holding::add(const TokenSet& t, bool data, std::uint64_t ver, bool d) {
  if (data) {
    if (has_data && version != ver && !tokens.empty())
      throw ProtocolViolation("merging copies with different values (v" + std::to_string(version) + " vs v" +
                              std::to_string(ver) + ")");
    has_data = true;
    version = ver;
  }
  if (t.gold) dirty = d;
  tokens += t;
}

bool DfStructure::arrive(BlockAddress a) {
  ++ledger[a];
  try {
    filter.increment(a);
  } catch (const FilterOverflow&) {
    return true;
  }
  return false;
}

void DfStructure::depart(BlockAddress a) {
  auto it = ledger.find(a);
  if (it == ledger.end()) fail("residency ledger underflow", a);
  if (--it->second == 0) ledger.erase(it);
  filter.decrement(a);
}

RainbowProtocol::RainbowProtocol(const SystemConfig& cfg) : cfg_(cfg), amap_{cfg.shape} {
  cfg_.validate();
  const auto& s = shape();
  const auto bb = static_cast<std::uint32_t>(s.block_bits());
  const auto llc_shift = bb + static_cast<std::uint32_t>(s.bank_bits());
  cores_.reserve(s.total_cores());
  for (std::uint32_t i = 0; i < s.total_cores(); ++i)
    cores_.push_back(CoreState{PrivateHierarchy<PrivateLine>(cfg_.l1, cfg_.l2, bb), false, {}, Op::Read});
  banks_.reserve(std::size_t{s.num_chips} * s.llc_banks_per_chip);
  for (std::uint32_t i = 0; i < s.num_chips * s.llc_banks_per_chip; ++i)
    banks_.emplace_back(CacheArray<LlcLine>(cfg_.llc_bank, llc_shift), DfStructure(cfg_.dllc_config(), cfg_.fllc_config()));
  homes_.reserve(s.num_chips);
  for (std::uint32_t i = 0; i < s.num_chips; ++i) homes_.emplace_back(DfStructure(cfg_.dmem_config(), cfg_.fmem_config()));
}

Message RainbowProtocol::make(MsgKind k, AgentId src, AgentId dst, BlockAddress a) const {
  Message m;
  m.kind = k;
  m.src = src;
  m.dst = dst;
  m.addr = a;
  return m;
}

void RainbowProtocol::count_fanout(std::uint64_t targets, bool broadcast) {
  if (targets == 0) return;
  if (broadcast)
    ++counters_.broadcasts;
  else if (std::popcount(targets) == 1)
    ++counters_.unicasts;
  else
    ++counters_.multicasts;
}

// ---------------------------------------------------------------- cores

std::optional<std::uint64_t> RainbowProtocol::l1_read_hit(std::uint32_t core, BlockAddress a) const {
  const CoreState& cs = cores_.at(core);
  if (cs.caches.level_of(a) != PrivateHierarchy<PrivateLine>::Level::L1) return std::nullopt;
  const PrivateLine* l = cs.caches.find(a);
  if (!l->tokens.readable()) return std::nullopt;
  return l->version;
}

AccessResult RainbowProtocol::access(std::uint32_t core, Op op, BlockAddress a, Cycle, Outbox& out) {
  CoreState& cs = cores_.at(core);
  if (cs.busy) throw std::logic_error("core " + std::to_string(core) + " already has an outstanding access");
  const auto& lat = cfg_.latency;
  const std::uint32_t chip = core / shape().cores_per_chip;
  const std::uint32_t unit = core % shape().cores_per_chip;
  const auto level = cs.caches.level_of(a);
  PrivateLine* line = cs.caches.find(a);

  const bool hit = line && (op == Op::Read ? line->tokens.readable() : is_full(line->tokens, shape()));
  if (hit) {
    if (op == Op::Write) {
      ++line->version;
      line->dirty = true;
    }
    AccessResult r;
    r.hit = true;
    r.version = line->version;
    if (level == PrivateHierarchy<PrivateLine>::Level::L1) {
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
    // Upgrade: the partial holding travels with the request.
    PrivateLine l = *cs.caches.erase(a);
    req.tokens = l.tokens;
    req.carries_data = true;
    req.version = l.version;
    req.dirty = l.dirty && l.tokens.gold;
    req.emptied = true;
  }
  out.send(req, lat.l1_cycles + lat.l2_cycles);
  return {false, lat.l1_cycles + lat.l2_cycles, ServiceSource::Llc, 0};
}

void RainbowProtocol::core_writeback(std::uint32_t global, const PrivateLine& line, Outbox& out) {
  const std::uint32_t chip = global / shape().cores_per_chip;
  Message m = make(MsgKind::PrivWriteback, AgentId::core(chip, global % shape().cores_per_chip), bank_id(chip, line.addr),
                   line.addr);
  m.tokens = line.tokens;
  m.carries_data = true;
  m.version = line.version;
  m.dirty = line.dirty && line.tokens.gold;
  m.emptied = true;
  if (cfg_.fault == Fault::DropToken && m.tokens.bronze > 0) --m.tokens.bronze;
  out.send(m, cfg_.latency.l2_cycles);
}

void RainbowProtocol::core_fill(std::uint32_t global, PrivateLine line, Outbox& out) {
  if (auto v = cores_[global].caches.fill(std::move(line))) core_writeback(global, *v, out);
}

void RainbowProtocol::core_answer_read(std::uint32_t global, const Message& m, MsgKind reply_kind, Outbox& out) {
  CoreState& cs = cores_[global];
  PrivateLine* line = cs.caches.find(m.addr);
  Message r = make(reply_kind, m.dst, m.src, m.addr);
  r.op = Op::Read;
  r.external = m.external;
  if (line) {
    TokenSet give;
    if (!m.external) {
      if (line->tokens.silver >= 1) give = line->tokens.bronze >= 2 ? TokenSet{0, 0, 1} : line->tokens;
    } else if (line->tokens.gold == 1) {
      if (line->tokens.silver >= 2 && line->tokens.bronze >= 2) {
        give = split_for_external_read(line->tokens, m.count).granted;
      } else {
        r.flag = true;  // gold here, but nothing to spare
      }
    }
    if (!give.empty()) {
      r.tokens = give;
      r.carries_data = true;
      r.version = line->version;
      r.dirty = line->dirty && give.gold;
      const bool double_grant = m.external && cfg_.fault == Fault::SilverDoubleGrant;
      if (!double_grant) line->tokens -= give;
      if (line->tokens.empty()) {
        cs.caches.erase(m.addr);
        line = nullptr;
        r.emptied = true;
      } else if (!line->tokens.gold) {
        line->dirty = false;
      }
    }
  }
  if (line) r.held = line->tokens;
  out.send(r, cfg_.latency.l1_cycles + cfg_.latency.l2_cycles);
}

void RainbowProtocol::core_deliver(const Message& m, Outbox& out) {
  const std::uint32_t global = m.dst.chip * shape().cores_per_chip + m.dst.unit;
  CoreState& cs = cores_[global];
  switch (m.kind) {
    case MsgKind::DataResp: {
      if (!cs.busy || cs.pending_addr != m.addr) fail("unexpected grant at " + to_string(m.dst), m.addr);
      if (!m.carries_data) fail("grant without data", m.addr);
      PrivateLine l;
      l.addr = m.addr;
      if (auto old = cs.caches.erase(m.addr)) l.tokens = old->tokens;
      l.tokens += m.tokens;
      l.version = m.version;
      l.dirty = m.dirty && l.tokens.gold;
      if (cs.pending_op == Op::Write) {
        if (!is_full(l.tokens, shape())) fail("write granted with " + to_string(l.tokens), m.addr);
        ++l.version;
        l.dirty = true;
      } else if (!l.tokens.readable()) {
        fail("read granted without bronze", m.addr);
      }
      cs.busy = false;
      out.completions.push_back({global, cs.pending_op, m.addr, l.version, m.source});
      core_fill(global, l, out);
      break;
    }
    case MsgKind::ReadFwd:
      core_answer_read(global, m, MsgKind::TokenResp, out);
      break;
    case MsgKind::TokenCountQuery:
      core_answer_read(global, m, MsgKind::TokenCountReply, out);
      break;
    case MsgKind::Inval: {
      Message r = make(MsgKind::TokenResp, m.dst, m.src, m.addr);
      r.op = Op::Write;
      r.cause = m.cause;
      if (cfg_.fault == Fault::MissingInvalidation) {
        if (const PrivateLine* l = cs.caches.find(m.addr)) r.held = l->tokens;
      } else if (auto l = cs.caches.erase(m.addr)) {
        r.tokens = l->tokens;
        r.carries_data = l->tokens.gold || l->tokens.silver;
        r.version = l->version;
        r.dirty = l->dirty && l->tokens.gold;
        r.emptied = true;
        r.count = 1;
      }
      out.send(r, cfg_.latency.l1_cycles + cfg_.latency.l2_cycles);
      break;
    }
    default:
      fail(std::string("core cannot handle ") + to_string(m.kind), m.addr);
  }
}

void RainbowProtocol::deliver(const Message& m, Cycle, Outbox& out) {
  switch (m.dst.kind) {
    case AgentKind::CoreCache: core_deliver(m, out); break;
    case AgentKind::LlcBank:
    case AgentKind::Dfllc: bank_deliver(m, out); break;
    case AgentKind::MemCtrl: home_deliver(m, out); break;
  }
}

// ---------------------------------------------------------------- LLC banks

Holding RainbowProtocol::take_llc(std::uint32_t chip, BlockAddress a) {
  Holding h;
  if (auto l = bank_for(chip, a).llc.erase(a)) {
    h.tokens = l->tokens;
    h.has_data = true;
    h.version = l->version;
    h.dirty = l->dirty;
  }
  return h;
}

void RainbowProtocol::put_llc(std::uint32_t chip, BlockAddress a, const Holding& h, Outbox& out) {
  if (h.empty()) return;
  BankState& b = bank_for(chip, a);
  if (LlcLine* l = b.llc.find(a)) {
    Holding cur{l->tokens, true, l->version, l->dirty};
    cur.add(h);
    l->tokens = cur.tokens;
    l->version = cur.version;
    l->dirty = cur.dirty && cur.tokens.gold;
    b.llc.touch(*l);
    return;
  }
  if (!h.has_data) fail("LLC line would hold tokens without data", a);
  LlcLine nl{a, 0, h.tokens, h.version, h.dirty && h.tokens.gold};
  auto victim = b.llc.insert(nl, [&](const LlcLine& v) { return v.addr != a && !b.mshr.contains(v.addr); });
  if (victim) start_llc_evict(chip, *victim, out);
}

void RainbowProtocol::start_llc_evict(std::uint32_t chip, LlcLine victim, Outbox& out) {
  BankState& b = bank_for(chip, victim.addr);
  BankTxn t;
  t.kind = BankTxnKind::Evict;
  t.cause = InvalCause::LlcEviction;
  t.collected = Holding{victim.tokens, true, victim.version, victim.dirty};
  b.mshr[victim.addr].local = t;
  bank_resolve(chip, victim.addr, false, out);
  bank_pump(chip, victim.addr, out);
}

void RainbowProtocol::bank_query(std::uint32_t chip, BlockAddress a, BankTxn& t, MsgKind kind, std::uint64_t targets,
                                 bool broadcast, Outbox& out) {
  for_bits(targets, [&](std::uint32_t i) {
    Message q = make(kind, bank_id(chip, a), AgentId::core(chip, i), a);
    q.op = kind == MsgKind::Inval ? Op::Write : Op::Read;
    q.requestor = t.requestor;
    q.count = t.requestor_cores;
    q.external = t.kind == BankTxnKind::ExtRead;
    q.cause = kind == MsgKind::Inval ? t.cause : InvalCause::None;
    out.send(q, cfg_.latency.llc_bank_cycles);
    ++t.pending;
  });
  count_fanout(targets, broadcast);
}

void RainbowProtocol::bank_grant_core(std::uint32_t chip, BlockAddress a, std::uint32_t unit, Holding h,
                                      ServiceSource src, Outbox& out) {
  if (!h.has_data) fail("core grant without data", a);
  Message g = make(MsgKind::DataResp, bank_id(chip, a), AgentId::core(chip, unit), a);
  g.tokens = h.tokens;
  g.carries_data = true;
  g.version = h.version;
  g.dirty = h.dirty && h.tokens.gold;
  g.source = src;
  out.send(g, cfg_.latency.llc_bank_cycles);
  BankState& b = bank_for(chip, a);
  if (b.df.arrive(a)) ++counters_.filter_overflows;
  if (b.df.dir.peek(a))
    b.df.dir.update_sharers(a, unit, std::nullopt, h.tokens.silver ? std::optional<std::uint32_t>(unit) : std::nullopt);
}

void RainbowProtocol::bank_reply_home(std::uint32_t chip, BlockAddress a, BankTxn& t, const Holding& grant,
                                      bool insufficient, Outbox& out) {
  BankState& b = bank_for(chip, a);
  Message r = make(MsgKind::TokenResp, bank_id(chip, a), home_id(a), a);
  r.op = Op::Read;
  r.requestor = chip;
  r.tokens = grant.tokens;
  r.carries_data = !grant.empty();
  r.version = grant.version;
  r.flag = insufficient;
  r.held = t.reported;
  if (const LlcLine* l = b.llc.find(a)) r.held += l->tokens;
  const auto& st = b.mshr.at(a);
  if (st.local && st.local->phase == BankPhase::AtHome) r.held += st.local->collected.tokens;
  out.send(r, cfg_.latency.llc_bank_cycles);
}

void RainbowProtocol::bank_finish_local(std::uint32_t chip, BlockAddress a, Outbox&) {
  bank_for(chip, a).mshr.at(a).local.reset();
}

void RainbowProtocol::bank_finish_ext(std::uint32_t chip, BlockAddress a, Outbox&) {
  bank_for(chip, a).mshr.at(a).ext.reset();
}

void RainbowProtocol::bank_pump(std::uint32_t chip, BlockAddress a, Outbox& out) {
  BankState& b = bank_for(chip, a);
  for (;;) {
    auto it = b.mshr.find(a);
    if (it == b.mshr.end()) return;
    BankAddrState& st = it->second;
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
    if (st.idle()) {
      b.mshr.erase(it);
      // Lines that could not be displaced while pinned leave now.
      while (auto v = b.llc.shrink_set(a, [&](const LlcLine& l) { return !b.mshr.contains(l.addr); }))
        start_llc_evict(chip, *v, out);
    }
    return;
  }
}

void RainbowProtocol::bank_absorb(std::uint32_t chip, BlockAddress a, std::uint32_t unit, const Message& m,
                                  Outbox& out) {
  BankState& b = bank_for(chip, a);
  if (m.emptied) {
    if (b.df.dir.peek(a)) b.df.dir.update_sharers(a, std::nullopt, unit, std::nullopt);
    if (cfg_.fault != Fault::SkipFllcDecrement) b.df.depart(a);
  }
  const Holding h{m.tokens, m.carries_data, m.version, m.dirty};
  if (h.empty()) return;
  if (auto it = b.mshr.find(a); it != b.mshr.end()) {
    BankAddrState& st = it->second;
    if (st.ext && st.ext->pending > 0) {
      st.ext->collected.add(h);
      return;
    }
    if (st.local && st.local->phase == BankPhase::Collecting) {
      st.local->collected.add(h);
      return;
    }
    if (st.local) fail("private tokens arrived while the chip waits at home", a);
  }
  put_llc(chip, a, h, out);
}

void RainbowProtocol::bank_deliver(const Message& m, Outbox& out) {
  const std::uint32_t chip = m.dst.chip;
  const BlockAddress a = m.addr;
  BankState& b = bank_for(chip, a);
  switch (m.kind) {
    case MsgKind::ReadReq:
    case MsgKind::WriteReq:
      if (m.src.kind != AgentKind::CoreCache) fail("bank request from non-core", a);
      if (m.emptied) bank_absorb(chip, a, m.src.unit, m, out);
      b.mshr[a].local_queue.push_back(m);
      break;
    case MsgKind::PrivWriteback:
      bank_absorb(chip, a, m.src.unit, m, out);
      break;
    case MsgKind::TokenResp:
    case MsgKind::TokenCountReply: {
      auto it = b.mshr.find(a);
      if (it == b.mshr.end()) fail("reply without a transaction", a);
      BankAddrState& st = it->second;
      const bool ext = st.ext && st.ext->pending > 0;
      BankTxn* t = ext ? &*st.ext : (st.local && st.local->pending > 0 ? &*st.local : nullptr);
      if (!t) fail("unexpected reply", a);
      const std::uint32_t u = m.src.unit;
      if (m.emptied) {
        if (b.df.dir.peek(a)) b.df.dir.update_sharers(a, std::nullopt, u, std::nullopt);
        if (cfg_.fault != Fault::SkipFllcDecrement) b.df.depart(a);
      }
      if (!m.held.empty()) {
        t->holders |= bit(u);
        t->reported += m.held;
        if (m.held.silver) t->silver_holder = u;
      }
      if (m.flag) t->gold_seen = true;
      if (!m.tokens.empty()) {
        const Holding h{m.tokens, m.carries_data, m.version, m.dirty};
        (m.op == Op::Read ? t->grant : t->collected).add(h);
      }
      if (--t->pending == 0) bank_resolve(chip, a, ext, out);
      break;
    }
    case MsgKind::ReadFwd:
    case MsgKind::ReconstructBcast:
    case MsgKind::Inval:
      if (m.src.kind != AgentKind::MemCtrl) fail("bank probe from non-home", a);
      b.mshr[a].probe_queue.push_back(m);
      break;
    case MsgKind::DataResp: {
      auto it = b.mshr.find(a);
      if (it == b.mshr.end() || !it->second.local || it->second.local->phase != BankPhase::AtHome)
        fail("home grant without a waiting request", a);
      BankTxn& t = *it->second.local;
      t.collected.add(m.tokens, m.carries_data, m.version, m.dirty);
      const bool ok = t.kind == BankTxnKind::LocalWrite ? is_full(t.collected.tokens, shape())
                                                         : t.collected.tokens.readable();
      if (!ok) fail("home grant leaves request unsatisfied: " + to_string(t.collected.tokens), a);
      Holding h = t.collected;
      t.collected = {};
      bank_grant_core(chip, a, t.requestor, h, m.source, out);
      bank_finish_local(chip, a, out);
      break;
    }
    default:
      fail(std::string("bank cannot handle ") + to_string(m.kind), a);
  }
  bank_pump(chip, a, out);
}

void RainbowProtocol::bank_start_local(std::uint32_t chip, BlockAddress a, const Message& req, Outbox& out) {
  BankTxn t;
  t.kind = req.op == Op::Read ? BankTxnKind::LocalRead : BankTxnKind::LocalWrite;
  t.requestor = req.requestor;
  t.cause = InvalCause::Coherence;
  bank_for(chip, a).mshr.at(a).local = t;
  bank_resolve(chip, a, false, out);
}

void RainbowProtocol::bank_start_ext(std::uint32_t chip, BlockAddress a, const Message& probe, Outbox& out) {
  BankTxn t;
  t.kind = probe.kind == MsgKind::Inval ? BankTxnKind::ExtInval : BankTxnKind::ExtRead;
  t.requestor = probe.requestor;
  t.requestor_cores = probe.count;
  t.cause = probe.cause == InvalCause::None ? InvalCause::Coherence : probe.cause;
  bank_for(chip, a).mshr.at(a).ext = t;
  bank_resolve(chip, a, true, out);
}

void RainbowProtocol::bank_resolve(std::uint32_t chip, BlockAddress a, bool ext, Outbox& out) {
  BankAddrState& st = bank_for(chip, a).mshr.at(a);
  BankTxn& t = ext ? *st.ext : *st.local;
  switch (t.kind) {
    case BankTxnKind::LocalRead: bank_resolve_read(chip, a, t, out); break;
    case BankTxnKind::LocalWrite: bank_resolve_write(chip, a, t, out); break;
    case BankTxnKind::Evict: bank_resolve_evict(chip, a, t, out); break;
    case BankTxnKind::ExtRead: bank_resolve_ext_read(chip, a, t, out); break;
    case BankTxnKind::ExtInval: bank_resolve_ext_inval(chip, a, t, out); break;
  }
}

void RainbowProtocol::bank_resolve_read(std::uint32_t chip, BlockAddress a, BankTxn& t, Outbox& out) {
  BankState& b = bank_for(chip, a);
  const std::uint32_t r = t.requestor;
  auto grant = [&](Holding h) {
    if (t.reconstructed && b.df.dir.peek(a)) {
      for_bits(t.holders, [&](std::uint32_t i) { b.df.dir.update_sharers(a, i, std::nullopt, std::nullopt); });
      if (t.silver_holder && (t.holders & bit(*t.silver_holder)))
        b.df.dir.update_sharers(a, std::nullopt, std::nullopt, t.silver_holder);
    }
    bank_grant_core(chip, a, r, std::move(h), ServiceSource::Llc, out);
    bank_finish_local(chip, a, out);
  };
  for (;;) {
    if (t.stage == 0) {
      t.stage = 1;
      auto e = b.df.dir.lookup(a);
      if (e && e->silver_owner && *e->silver_owner != r) {
        bank_query(chip, a, t, MsgKind::ReadFwd, bit(*e->silver_owner), false, out);
        return;
      }
      continue;
    }
    Holding h = t.grant;
    h.add(t.collected);
    if (h.tokens.readable()) return grant(std::move(h));
    if (const LlcLine* l = b.llc.find(a); l && l->tokens.readable()) {
      h.add(take_llc(chip, a));
      return grant(std::move(h));
    }
    if (!t.reconstructed && b.df.filter.contains(a)) {
      t.reconstructed = true;
      ++counters_.reconstructions_llc;
      if (!b.df.dir.peek(a)) {
        if (b.df.dir.allocate_silent(a, bit(r), std::nullopt)) ++counters_.silent_dir_evictions;
        t.dir_allocated = true;
      }
      t.holders = 0;
      t.reported = {};
      bank_query(chip, a, t, MsgKind::TokenCountQuery, all_cores_mask() & ~bit(r), true, out);
      if (t.pending) return;
      continue;
    }
    if (t.holders && !t.broadcast_done) {
      // Someone still holds tokens but nobody could serve: gather them all.
      t.broadcast_done = true;
      bank_query(chip, a, t, MsgKind::Inval, t.holders & ~bit(r), false, out);
      if (t.pending) return;
      continue;
    }
    if (t.reconstructed && t.holders == 0) {
      ++counters_.fllc_false_positives;
      if (t.dir_allocated) b.df.dir.erase(a);
      t.dir_allocated = false;
    }
    if (!h.empty()) fail("read would leave the chip while it holds " + to_string(h.tokens), a);
    t.phase = BankPhase::AtHome;
    ++counters_.llc_misses;
    Message q = make(MsgKind::ReadReq, bank_id(chip, a), home_id(a), a);
    q.op = Op::Read;
    q.requestor = chip;
    out.send(q, cfg_.latency.llc_bank_cycles);
    ++counters_.unicasts;
    return;
  }
}

void RainbowProtocol::bank_resolve_write(std::uint32_t chip, BlockAddress a, BankTxn& t, Outbox& out) {
  BankState& b = bank_for(chip, a);
  const std::uint32_t r = t.requestor;
  for (;;) {
    if (t.stage == 0) {
      t.collected.add(take_llc(chip, a));
      t.stage = 1;
    }
    if (is_full(t.collected.tokens, shape())) {
      Holding h = t.collected;
      t.collected = {};
      bank_grant_core(chip, a, r, std::move(h), ServiceSource::Llc, out);
      bank_finish_local(chip, a, out);
      return;
    }
    if (t.stage == 1) {
      t.stage = 2;
      if (auto e = b.df.dir.lookup(a)) {
        const std::uint64_t targets = e->sharers & ~bit(r);
        if (targets) {
          bank_query(chip, a, t, MsgKind::Inval, targets, false, out);
          return;
        }
      }
      continue;
    }
    if (t.stage == 2) {
      t.stage = 3;
      if (b.df.filter.contains(a)) {
        if (!b.df.dir.peek(a)) {
          ++counters_.reconstructions_llc;
          if (b.df.dir.allocate_silent(a, bit(r), r)) ++counters_.silent_dir_evictions;
          t.dir_allocated = true;
        }
        bank_query(chip, a, t, MsgKind::Inval, all_cores_mask() & ~bit(r), true, out);
        if (t.pending) return;
      }
      continue;
    }
    t.phase = BankPhase::AtHome;
    ++counters_.llc_misses;
    Message q = make(MsgKind::WriteReq, bank_id(chip, a), home_id(a), a);
    q.op = Op::Write;
    q.requestor = chip;
    q.held = t.collected.tokens;
    out.send(q, cfg_.latency.llc_bank_cycles);
    ++counters_.unicasts;
    return;
  }
}

void RainbowProtocol::bank_resolve_evict(std::uint32_t chip, BlockAddress a, BankTxn& t, Outbox& out) {
  BankState& b = bank_for(chip, a);
  for (;;) {
    if (t.stage == 0) {
      t.stage = 1;
      if (b.df.filter.contains(a)) {
        if (const DirEntry* e = b.df.dir.peek(a)) {
          bank_query(chip, a, t, MsgKind::Inval, e->sharers, false, out);
          if (t.pending) return;
        }
      }
      continue;
    }
    if (t.stage == 1) {
      t.stage = 2;
      if (b.df.filter.contains(a)) {
        bank_query(chip, a, t, MsgKind::Inval, all_cores_mask(), true, out);
        if (t.pending) return;
      }
      continue;
    }
    if (b.df.dir.peek(a)) b.df.dir.erase(a);
    const Holding& h = t.collected;
    const bool dirty = h.dirty && h.tokens.gold;
    Message w = make(dirty ? MsgKind::MemWriteBack : MsgKind::EvictNotify, bank_id(chip, a), home_id(a), a);
    w.tokens = h.tokens;
    w.carries_data = h.tokens.gold || h.tokens.silver;
    w.version = h.version;
    w.dirty = dirty;
    w.emptied = true;
    w.requestor = chip;
    w.cause = InvalCause::LlcEviction;
    out.send(w, cfg_.latency.llc_bank_cycles);
    ++counters_.llc_evictions;
    bank_finish_local(chip, a, out);
    return;
  }
}

void RainbowProtocol::bank_resolve_ext_inval(std::uint32_t chip, BlockAddress a, BankTxn& t, Outbox& out) {
  BankState& b = bank_for(chip, a);
  for (;;) {
    if (t.stage == 0) {
      t.stage = 1;
      t.collected.add(take_llc(chip, a));
      BankAddrState& st = b.mshr.at(a);
      if (st.local && st.local->phase == BankPhase::AtHome) {
        t.collected.add(st.local->collected);
        st.local->collected = {};
      }
      if (b.df.filter.contains(a)) {
        if (const DirEntry* e = b.df.dir.peek(a)) {
          bank_query(chip, a, t, MsgKind::Inval, e->sharers, false, out);
          if (t.pending) return;
        }
      }
      continue;
    }
    if (t.stage == 1) {
      t.stage = 2;
      if (b.df.filter.contains(a)) {
        bank_query(chip, a, t, MsgKind::Inval, all_cores_mask(), true, out);
        if (t.pending) return;
      }
      continue;
    }
    if (b.df.dir.peek(a)) b.df.dir.erase(a);
    const Holding& h = t.collected;
    Message r = make(MsgKind::TokenResp, bank_id(chip, a), home_id(a), a);
    r.op = Op::Write;
    r.requestor = chip;
    r.tokens = h.tokens;
    r.carries_data = h.tokens.gold || h.tokens.silver;
    r.version = h.version;
    r.dirty = h.dirty && h.tokens.gold;
    r.emptied = !h.empty();
    r.cause = t.cause;
    out.send(r, cfg_.latency.llc_bank_cycles);
    bank_finish_ext(chip, a, out);
    return;
  }
}

namespace {

std::optional<Holding> split_from(Holding& pool, std::uint32_t requestor_cores) {
  const TokenSet& tk = pool.tokens;
  if (tk.gold != 1 || tk.silver < 2 || tk.bronze < 2) return std::nullopt;
  const ReadSplit s = split_for_external_read(tk, requestor_cores);
  pool.tokens = s.retained;
  return Holding{s.granted, true, pool.version, false};
}

}  // namespace

void RainbowProtocol::bank_resolve_ext_read(std::uint32_t chip, BlockAddress a, BankTxn& t, Outbox& out) {
  BankState& b = bank_for(chip, a);
  auto done = [&](const Holding& g, bool insufficient) {
    if (t.reconstructed && t.holders && !b.df.dir.peek(a)) {
      if (b.df.dir.allocate_silent(a, t.holders, t.silver_holder)) ++counters_.silent_dir_evictions;
    }
    put_llc(chip, a, t.collected, out);
    t.collected = {};
    bank_reply_home(chip, a, t, g, insufficient, out);
    bank_finish_ext(chip, a, out);
  };
  for (;;) {
    switch (t.stage) {
      case 0: {
        BankAddrState& st = b.mshr.at(a);
        if (st.local && st.local->phase == BankPhase::AtHome && st.local->collected.tokens.gold) {
          // A write waiting at home already holds the chip's gold.
          auto g = split_from(st.local->collected, t.requestor_cores);
          bank_reply_home(chip, a, t, g ? *g : Holding{}, !g, out);
          bank_finish_ext(chip, a, out);
          return;
        }
        t.collected.add(take_llc(chip, a));
        if (t.collected.tokens.gold) {
          if (auto g = split_from(t.collected, t.requestor_cores)) return done(*g, false);
          t.stage = 3;
          continue;
        }
        t.stage = 1;
        if (auto e = b.df.dir.lookup(a); e && e->silver_owner) {
          bank_query(chip, a, t, MsgKind::ReadFwd, bit(*e->silver_owner), false, out);
          return;
        }
        continue;
      }
      case 1:
      case 2: {
        if (!t.grant.empty()) return done(t.grant, false);
        if (t.gold_seen || t.collected.tokens.gold) {
          t.stage = 3;
          continue;
        }
        if (t.stage == 1 && !t.reconstructed && b.df.filter.contains(a)) {
          t.stage = 2;
          t.reconstructed = true;
          ++counters_.reconstructions_llc;
          t.holders = 0;
          t.reported = {};
          bank_query(chip, a, t, MsgKind::TokenCountQuery, all_cores_mask(), true, out);
          if (t.pending) return;
          continue;
        }
        return done(Holding{}, false);
      }
      case 3: {
        // Gold is on chip but cannot be split where it sits: pool everything.
        t.stage = 4;
        t.collected.add(take_llc(chip, a));
        t.holders = 0;
        t.reported = {};
        bank_query(chip, a, t, MsgKind::Inval, all_cores_mask(), true, out);
        if (t.pending) return;
        continue;
      }
      default: {
        t.collected.add(take_llc(chip, a));
        if (b.df.dir.peek(a)) b.df.dir.erase(a);
        t.reconstructed = false;
        const bool had_gold = t.collected.tokens.gold;
        auto g = split_from(t.collected, t.requestor_cores);
        return done(g ? *g : Holding{}, had_gold && !g);
      }
    }
  }
}

// ---------------------------------------------------------------- home controllers

std::vector<std::pair<BlockAddress, MemoryBlock>> MemoryStore::canonical(const TokenSet& full) const {
  std::vector<std::pair<BlockAddress, MemoryBlock>> out;
  for (const auto& b : blocks_)
    if (b.second.version != 0 || b.second.tokens != full) out.push_back(b);
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  return out;
}

MemoryBlock& RainbowProtocol::memory(std::uint32_t home, BlockAddress a) {
  return homes_[home].memory.get(a, full_set(shape()));
}

Holding RainbowProtocol::take_memory(std::uint32_t home, BlockAddress a) {
  MemoryBlock& mb = memory(home, a);
  Holding h{mb.tokens, !mb.tokens.empty(), mb.version, false};
  mb.tokens = {};
  return h;
}

void RainbowProtocol::put_memory(std::uint32_t home, BlockAddress a, const Holding& h) {
  if (h.empty()) return;
  MemoryBlock& mb = memory(home, a);
  if (h.tokens.gold && h.dirty) ++counters_.memory_writes;
  if (mb.tokens.empty()) {
    // memory's copy is stale while it holds no tokens
    if (!h.has_data) fail("tokens without data reached memory", a);
    mb.version = h.version;
  } else if (h.has_data && h.version != mb.version) {
    fail("copy v" + std::to_string(h.version) + " disagrees with memory v" + std::to_string(mb.version), a);
  }
  mb.tokens = merge(mb.tokens, h.tokens, shape());
}

TokenSet RainbowProtocol::memory_tokens(BlockAddress a) const {
  const MemoryBlock* mb = homes_[amap_.home_chip(a)].memory.find(a);
  return mb ? mb->tokens : full_set(shape());
}

void RainbowProtocol::home_chip_departed(std::uint32_t home, BlockAddress a, std::uint32_t chip) {
  HomeState& hs = homes_[home];
  if (hs.df.dir.peek(a)) hs.df.dir.update_sharers(a, std::nullopt, chip, std::nullopt);
  hs.df.depart(a);
}

void RainbowProtocol::home_probe(std::uint32_t home, BlockAddress a, HomeTxn& t, MsgKind kind, std::uint64_t chips,
                                 bool broadcast, Outbox& out) {
  for_bits(chips, [&](std::uint32_t c) {
    Message p = make(kind, AgentId::mem(home), bank_id(c, a), a);
    p.op = kind == MsgKind::Inval ? Op::Write : Op::Read;
    p.requestor = t.requestor;
    p.count = shape().cores_per_chip;
    p.external = true;
    p.cause = kind != MsgKind::Inval ? InvalCause::None
                                      : (t.kind == HomeTxnKind::Recall ? InvalCause::LlcEviction : InvalCause::Coherence);
    out.send(p, cfg_.latency.llc_bank_cycles);
    ++t.pending;
  });
  t.probed |= chips;
  count_fanout(chips, broadcast);
}

void RainbowProtocol::home_grant(std::uint32_t home, BlockAddress a, HomeTxn& t, Holding h, ServiceSource src,
                                 Cycle delay, Outbox& out) {
  Message g = make(MsgKind::DataResp, AgentId::mem(home), bank_id(t.requestor, a), a);
  g.op = t.kind == HomeTxnKind::Write ? Op::Write : Op::Read;
  g.tokens = h.tokens;
  g.carries_data = h.has_data;
  g.version = h.version;
  g.dirty = h.dirty && h.tokens.gold;
  g.requestor = t.requestor;
  g.source = src;
  out.send(g, delay);
  if (t.requestor_held.empty() && homes_[home].df.arrive(a)) ++counters_.filter_overflows;
  home_finish(home, a, out);
}

void RainbowProtocol::home_serve_memory(std::uint32_t home, BlockAddress a, HomeTxn& t, Outbox& out) {
  Holding m = take_memory(home, a);
  if (!is_full(m.tokens, shape())) fail("memory cannot serve: holds " + to_string(m.tokens), a);
  ++counters_.memory_reads;
  if (homes_[home].df.dir.peek(a)) homes_[home].df.dir.erase(a);
  home_grant(home, a, t, std::move(m), ServiceSource::Memory, cfg_.latency.memory_cycles, out);
}

void RainbowProtocol::home_finish(std::uint32_t home, BlockAddress a, Outbox&) {
  HomeState& hs = homes_[home];
  hs.mshr.at(a).active.reset();
}

void RainbowProtocol::home_pump(std::uint32_t home, BlockAddress a, Outbox& out) {
  HomeState& hs = homes_[home];
  for (;;) {
    auto it = hs.mshr.find(a);
    if (it == hs.mshr.end()) return;
    HomeAddrState& st = it->second;
    if (st.active) return;
    if (st.queue.empty()) {
      hs.mshr.erase(it);
      return;
    }
    Message req = st.queue.front();
    st.queue.erase(st.queue.begin());
    home_start(home, a, req, out);
  }
}

void RainbowProtocol::home_start(std::uint32_t home, BlockAddress a, const Message& req, Outbox& out) {
  HomeAddrState& st = homes_[home].mshr.at(a);
  HomeTxn t;
  if (req.src.kind == AgentKind::MemCtrl) {
    t.kind = HomeTxnKind::Recall;
    t.requestor = home;
    st.recall_queued = false;
  } else {
    t.kind = req.op == Op::Read ? HomeTxnKind::Read : HomeTxnKind::Write;
    t.requestor = req.requestor;
    t.requestor_held = req.held;
  }
  st.active = t;
  home_resolve(home, a, out);
}

void RainbowProtocol::home_deliver(const Message& m, Outbox& out) {
  const std::uint32_t home = m.dst.chip;
  const BlockAddress a = m.addr;
  HomeState& hs = homes_[home];
  if (amap_.home_chip(a) != home) fail("request reached the wrong home", a);
  switch (m.kind) {
    case MsgKind::ReadReq:
    case MsgKind::WriteReq:
      hs.mshr[a].queue.push_back(m);
      break;
    case MsgKind::MemWriteBack:
    case MsgKind::EvictNotify: {
      home_chip_departed(home, a, m.src.chip);
      put_memory(home, a, Holding{m.tokens, m.carries_data, m.version, m.dirty});
      const TokenSet held = memory(home, a).tokens;
      HomeAddrState& st = hs.mshr[a];
      if (!is_full(held, shape()) && !st.recall_queued) {
        // Memory must end up with all or nothing: recall the rest.
        Message rc = make(MsgKind::Inval, AgentId::mem(home), AgentId::mem(home), a);
        rc.cause = InvalCause::LlcEviction;
        st.queue.push_back(rc);
        st.recall_queued = true;
      }
      break;
    }
    case MsgKind::TokenResp: {
      auto it = hs.mshr.find(a);
      if (it == hs.mshr.end() || !it->second.active || it->second.active->pending == 0) fail("unexpected chip reply", a);
      HomeAddrState& st = it->second;
      HomeTxn& t = *st.active;
      const std::uint32_t c = m.src.chip;
      if (m.emptied) home_chip_departed(home, a, c);
      for (auto& q : st.queue)
        if (q.src.kind == AgentKind::LlcBank && q.src.chip == c) q.held = m.held;
      if (!m.held.empty()) {
        t.holders |= bit(c);
        t.reported += m.held;
        if (m.held.gold) t.gold_chip = c;
      }
      if (m.flag) t.insufficient = true;
      if (!m.tokens.empty()) {
        const Holding h{m.tokens, m.carries_data, m.version, m.dirty};
        if (m.op == Op::Read) {
          t.grant.add(h);
          t.gold_chip = c;
        } else {
          t.collected.add(h);
        }
      }
      if (--t.pending == 0) home_resolve(home, a, out);
      break;
    }
    default:
      fail(std::string("home cannot handle ") + to_string(m.kind), a);
  }
  home_pump(home, a, out);
}

void RainbowProtocol::home_resolve(std::uint32_t home, BlockAddress a, Outbox& out) {
  HomeState& hs = homes_[home];
  HomeTxn& t = *hs.mshr.at(a).active;
  const std::uint32_t c = t.requestor;
  const Cycle dir_delay = cfg_.latency.llc_bank_cycles;

  if (t.kind == HomeTxnKind::Recall) {
    put_memory(home, a, t.collected);
    t.collected = {};
    if (t.stage == 0) {
      t.stage = 1;
      const TokenSet mt = memory(home, a).tokens;
      if (!mt.empty() && !is_full(mt, shape())) {
        ++counters_.system_invalidations;
        home_probe(home, a, t, MsgKind::Inval, all_chips_mask(), true, out);
        if (t.pending) return;
      }
    }
    const TokenSet mt = memory(home, a).tokens;
    if (!mt.empty() && !is_full(mt, shape())) fail("recall left memory with " + to_string(mt), a);
    if (is_full(mt, shape()) && hs.df.dir.peek(a)) hs.df.dir.erase(a);
    home_finish(home, a, out);
    return;
  }

  if (t.kind == HomeTxnKind::Read) {
    put_memory(home, a, t.collected);
    t.collected = {};
    for (;;) {
      if (t.stage == 0) {
        t.stage = 1;
        if (!hs.df.filter.contains(a)) return home_serve_memory(home, a, t, out);
        if (auto e = hs.df.dir.lookup(a); e && e->silver_owner && *e->silver_owner != c) {
          home_probe(home, a, t, MsgKind::ReadFwd, bit(*e->silver_owner), false, out);
          return;
        }
        continue;
      }
      if (!t.grant.empty()) {
        if (hs.df.dir.peek(a)) {
          for_bits(t.holders & ~bit(c), [&](std::uint32_t i) { hs.df.dir.update_sharers(a, i, std::nullopt, std::nullopt); });
          hs.df.dir.update_sharers(a, c, std::nullopt, t.gold_chip);
        }
        Holding g = t.grant;
        return home_grant(home, a, t, std::move(g), ServiceSource::RemoteChip, dir_delay, out);
      }
      if (t.stage == 1 && !t.insufficient) {
        t.stage = 2;
        t.broadcast = true;
        if (!hs.df.dir.peek(a)) {
          ++counters_.reconstructions_mem;
          if (hs.df.dir.allocate_silent(a, bit(c), std::nullopt)) ++counters_.silent_dir_evictions;
          t.dir_allocated = true;
        }
        home_probe(home, a, t, MsgKind::ReconstructBcast, all_chips_mask() & ~bit(c) & ~t.probed, true, out);
        if (t.pending) return;
        continue;
      }
      const TokenSet mt = memory(home, a).tokens;
      if (!t.recalled && (t.insufficient || !is_full(mt, shape()))) {
        t.recalled = true;
        t.stage = 3;
        if (t.insufficient) ++counters_.silver_recalls;
        ++counters_.system_invalidations;
        home_probe(home, a, t, MsgKind::Inval, all_chips_mask(), true, out);
        if (t.pending) return;
        put_memory(home, a, t.collected);
        t.collected = {};
        continue;
      }
      if (t.broadcast && !t.recalled && t.holders == 0) ++counters_.fmem_false_positives;
      return home_serve_memory(home, a, t, out);
    }
  }

  // Write: gather everything the requesting chip does not already hold.
  for (;;) {
    const TokenSet mt = memory(home, a).tokens;
    TokenSet total = t.requestor_held;
    total += t.collected.tokens;
    total += mt;
    if (is_full(total, shape())) {
      Holding g = t.collected;
      ServiceSource src = ServiceSource::RemoteChip;
      Cycle delay = dir_delay;
      if (!mt.empty()) {
        if (t.collected.empty()) src = ServiceSource::Memory;
        g.add(take_memory(home, a));
        ++counters_.memory_reads;
        delay = cfg_.latency.memory_cycles;
      }
      if (hs.df.dir.peek(a)) hs.df.dir.update_sharers(a, c, std::nullopt, c);
      return home_grant(home, a, t, std::move(g), src, delay, out);
    }
    if (t.stage == 0) {
      t.stage = 1;
      std::uint64_t targets = 0;
      if (auto e = hs.df.dir.lookup(a)) {
        targets = e->sharers & ~bit(c);
      } else if (hs.df.filter.contains(a)) {
        t.broadcast = true;
        targets = all_chips_mask() & ~bit(c);
        ++counters_.reconstructions_mem;
        if (hs.df.dir.allocate_silent(a, bit(c), c)) ++counters_.silent_dir_evictions;
        t.dir_allocated = true;
      }
      home_probe(home, a, t, MsgKind::Inval, targets, t.broadcast, out);
      if (t.pending) return;
      continue;
    }
    if (!t.broadcast) {
      t.broadcast = true;
      home_probe(home, a, t, MsgKind::Inval, all_chips_mask() & ~bit(c) & ~t.probed, true, out);
      if (t.pending) return;
      continue;
    }
    fail("write cannot assemble the full token set: " + to_string(total), a);
  }
}

// ---------------------------------------------------------------- inspection

TokenSet RainbowProtocol::private_tokens(std::uint32_t global, BlockAddress a) const {
  const PrivateLine* l = cores_.at(global).caches.find(a);
  return l ? l->tokens : TokenSet{};
}

TokenSet RainbowProtocol::llc_tokens(std::uint32_t chip, BlockAddress a) const {
  const LlcLine* l = banks_[chip * shape().llc_banks_per_chip + amap_.bank_of(a)].llc.find(a);
  return l ? l->tokens : TokenSet{};
}

void RainbowProtocol::census(std::span<const Message> in_flight, FlatIndex& idx, std::vector<TokenSet>& sum,
                             std::vector<Violation>* out) const {
  auto at = [&](BlockAddress a) -> TokenSet& {
    const auto [i, fresh] = idx.insert(a.value());
    if (fresh) sum.emplace_back();
    return sum[i];
  };
  for (const auto& c : cores_) c.caches.for_each([&](const PrivateLine& l) { at(l.addr) += l.tokens; });
  for (const auto& b : banks_) {
    b.llc.for_each([&](const LlcLine& l) { at(l.addr) += l.tokens; });
    for (const auto& [a, st] : b.mshr) {
      for (const auto* t : {st.local ? &*st.local : nullptr, st.ext ? &*st.ext : nullptr}) {
        if (!t) continue;
        at(a) += t->collected.tokens;
        at(a) += t->grant.tokens;
      }
    }
  }
  for (const auto& h : homes_) {
    for (const auto& [a, st] : h.mshr) {
      if (!st.active) continue;
      at(a) += st.active->collected.tokens;
      at(a) += st.active->grant.tokens;
    }
  }
  for (const auto& m : in_flight)
    if (!m.tokens.empty()) at(m.addr) += m.tokens;

  // Memory: absent entries hold the full set.
  const TokenSet full = full_set(shape());
  std::vector<bool> from_memory(sum.size(), false);
  for (const auto& h : homes_)
    for (const auto& [a, mb] : h.memory.blocks()) {
      if (const auto i = idx.find(a.value())) {
        sum[*i] += mb.tokens;
        from_memory[*i] = true;
      } else if (mb.tokens != full) {
        if (out) out->push_back({ViolationKind::Conservation, a, "tokens sum to " + to_string(mb.tokens) + ", expected " + to_string(full)});
        else at(a) = mb.tokens;
      }
    }
  for (std::size_t i = 0; i < from_memory.size(); ++i)
    if (!from_memory[i]) sum[i] += full;
}

std::map<BlockAddress, TokenSet> RainbowProtocol::token_census(std::span<const Message> in_flight) const {
  FlatIndex idx;
  std::vector<TokenSet> sum;
  census(in_flight, idx, sum, nullptr);
  std::map<BlockAddress, TokenSet> m;
  for (std::uint32_t i = 0; i < idx.size(); ++i) m.emplace(BlockAddress(idx.key(i)), sum[i]);
  return m;
}

std::uint32_t RainbowProtocol::busy_cores() const {
  std::uint32_t n = 0;
  for (const auto& c : cores_) n += c.busy ? 1 : 0;
  return n;
}

void RainbowProtocol::audit(std::span<const Message> in_flight, bool quiescent, std::vector<Violation>& out) const {
  const TokenSet full = full_set(shape());
  FlatIndex idx;
  std::vector<TokenSet> sum;
  census(in_flight, idx, sum, &out);
  for (std::uint32_t i = 0; i < idx.size(); ++i)
    if (sum[i] != full)
      out.push_back({ViolationKind::Conservation, BlockAddress(idx.key(i)),
                     "tokens sum to " + to_string(sum[i]) + ", expected " + to_string(full)});

  // Every valid copy must carry the same value; only the full set may write.
  std::vector<std::uint64_t> seen(idx.size(), 0);
  std::vector<bool> any(idx.size(), false);
  auto check_copy = [&](BlockAddress a, const TokenSet& t, std::uint64_t v, const char* kind, std::uint32_t who) {
    auto where = [&] { return std::string(kind) + " " + std::to_string(who); };
    if (!well_formed(t, shape()) || t.empty())
      out.push_back({ViolationKind::Swmr, a, where() + " holds malformed " + to_string(t)});
    const std::uint32_t i = *idx.find(a.value());
    if (!any[i]) {
      any[i] = true;
      seen[i] = v;
    } else if (seen[i] != v) {
      out.push_back({ViolationKind::ValueCoherence, a,
                     where() + " has v" + std::to_string(v) + " while another copy has v" + std::to_string(seen[i])});
    }
  };
  const std::uint32_t cpc = shape().cores_per_chip;
  for (std::uint32_t g = 0; g < cores_.size(); ++g) {
    cores_[g].caches.for_each([&](const PrivateLine& l) {
      check_copy(l.addr, l.tokens, l.version, "core", g);
      if (!l.tokens.readable()) out.push_back({ViolationKind::Swmr, l.addr, "private line without bronze"});
    });
  }
  for (std::uint32_t i = 0; i < banks_.size(); ++i)
    banks_[i].llc.for_each([&](const LlcLine& l) { check_copy(l.addr, l.tokens, l.version, "llc bank", i); });

  if (!quiescent) return;

  // Ground-truth residency: private copies per bank domain, chips per home.
  std::vector<std::map<BlockAddress, std::uint32_t>> core_res(banks_.size());
  std::vector<std::map<BlockAddress, std::uint64_t>> core_mask(banks_.size());
  std::vector<std::map<BlockAddress, std::uint64_t>> chip_mask(homes_.size());
  for (std::uint32_t g = 0; g < cores_.size(); ++g) {
    const std::uint32_t chip = g / cpc;
    cores_[g].caches.for_each([&](const PrivateLine& l) {
      const std::size_t b = chip * shape().llc_banks_per_chip + amap_.bank_of(l.addr);
      ++core_res[b][l.addr];
      core_mask[b][l.addr] |= bit(g % cpc);
      chip_mask[amap_.home_chip(l.addr)][l.addr] |= bit(chip);
    });
  }
  for (std::uint32_t i = 0; i < banks_.size(); ++i) {
    const std::uint32_t chip = i / shape().llc_banks_per_chip;
    banks_[i].llc.for_each([&](const LlcLine& l) { chip_mask[amap_.home_chip(l.addr)][l.addr] |= bit(chip); });
  }

  auto balance = [&](const DfStructure& df, const std::map<BlockAddress, std::uint32_t>& truth, const std::string& who) {
    for (const auto& [a, n] : truth) {
      auto it = df.ledger.find(a);
      const std::uint32_t got = it == df.ledger.end() ? 0 : it->second;
      if (got != n)
        out.push_back({ViolationKind::FilterBalance, a, who + " counts " + std::to_string(got) + " residents, truth " + std::to_string(n)});
      if (!df.filter.contains(a)) out.push_back({ViolationKind::FilterBalance, a, who + " filter misses a resident block"});
    }
    for (const auto& [a, n] : df.ledger)
      if (!truth.contains(a))
        out.push_back({ViolationKind::FilterBalance, a, who + " counts " + std::to_string(n) + " residents, truth 0"});
  };

  for (std::uint32_t i = 0; i < banks_.size(); ++i) {
    const std::string who = "F-LLC " + std::to_string(i);
    balance(banks_[i].df, core_res[i], who);
    for (const auto& [a, mask] : core_mask[i]) {
      const DirEntry* e = banks_[i].df.dir.peek(a);
      if (e && (e->sharers & mask) != mask)
        out.push_back({ViolationKind::DirectoryTracking, a, "D-LLC " + std::to_string(i) + " misses a sharer"});
    }
  }
  for (std::uint32_t h = 0; h < homes_.size(); ++h) {
    std::map<BlockAddress, std::uint32_t> truth;
    for (const auto& [a, mask] : chip_mask[h]) {
      truth[a] = static_cast<std::uint32_t>(std::popcount(mask));
      const DirEntry* e = homes_[h].df.dir.peek(a);
      if (e && (e->sharers & mask) != mask)
        out.push_back({ViolationKind::DirectoryTracking, a, "D-MEM " + std::to_string(h) + " misses a sharer chip"});
    }
    balance(homes_[h].df, truth, "F-MEM " + std::to_string(h));
  }
}

namespace {

struct Encoder {
  std::vector<std::uint64_t>& v;
  void u(std::uint64_t x) { v.push_back(x); }
  void tok(const TokenSet& t) { u((std::uint64_t{t.gold} << 42) | (std::uint64_t{t.silver} << 21) | t.bronze); }
  void hold(const Holding& h) {
    tok(h.tokens);
    u((h.has_data ? 1 : 0) | (h.dirty ? 2 : 0));
    u(h.version);
  }
  void msg(const Message& m) { encode_message(m, v); }
  void df(const DfStructure& d) {
    for (std::uint32_t s = 0; s < d.dir.config().sets; ++s)
      for (const auto& e : d.dir.set_contents(s)) {
        u(e.tag.value());
        u(e.sharers);
        u(e.silver_owner ? *e.silver_owner + 1 : 0);
      }
    u(~0ULL);
    const auto& cells = d.filter.cells();
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (cells[i].counter) {
        u(i);
        u((std::uint64_t{cells[i].fingerprint} << 32) | cells[i].counter);
      }
    for (auto p : d.filter.pinned()) u(p);
    u(~0ULL);
  }
};

void encode_bank_txn(Encoder& e, const BankTxn& t) {
  e.u(static_cast<std::uint64_t>(t.kind) | (static_cast<std::uint64_t>(t.phase) << 4) | (std::uint64_t{t.stage} << 8) |
      (std::uint64_t{t.reconstructed} << 16) | (std::uint64_t{t.dir_allocated} << 17) |
      (std::uint64_t{t.broadcast_done} << 18) | (std::uint64_t{t.gold_seen} << 19) | (std::uint64_t{t.requestor} << 32));
  e.u(t.pending | (std::uint64_t{t.requestor_cores} << 32));
  e.hold(t.collected);
  e.hold(t.grant);
  e.u(t.queried);
  e.u(t.holders);
  e.tok(t.reported);
  e.u(t.silver_holder ? *t.silver_holder + 1 : 0);
}

}  // namespace

void RainbowProtocol::encode_state(std::vector<std::uint64_t>& out) const {
  Encoder e{out};
  for (const auto& c : cores_) {
    e.u((c.busy ? 1 : 0) | (static_cast<std::uint64_t>(c.pending_op) << 1));
    e.u(c.busy ? c.pending_addr.value() : 0);
    c.caches.for_each_canonical([&](const PrivateLine& l) {
      e.u(l.addr.value() | (c.caches.level_of(l.addr) == PrivateHierarchy<PrivateLine>::Level::L1 ? 0 : 1));
      e.tok(l.tokens);
      e.u(l.version | (std::uint64_t{l.dirty} << 63));
    });
    e.u(~0ULL);
  }
  for (const auto& b : banks_) {
    b.llc.for_each_canonical([&](const LlcLine& l) {
      e.u(l.addr.value());
      e.tok(l.tokens);
      e.u(l.version | (std::uint64_t{l.dirty} << 63));
    });
    e.u(~0ULL);
    e.df(b.df);
    for (const auto& [a, st] : b.mshr) {
      e.u(a.value());
      e.u((st.local ? 1 : 0) | (st.ext ? 2 : 0));
      if (st.local) encode_bank_txn(e, *st.local);
      if (st.ext) encode_bank_txn(e, *st.ext);
      e.u(st.local_queue.size());
      for (const auto& m : st.local_queue) e.msg(m);
      e.u(st.probe_queue.size());
      for (const auto& m : st.probe_queue) e.msg(m);
    }
    e.u(~0ULL);
  }
  for (const auto& h : homes_) {
    e.df(h.df);
    for (const auto& [a, mb] : h.memory.canonical(full_set(shape()))) {
      e.u(a.value());
      e.tok(mb.tokens);
      e.u(mb.version);
    }
    e.u(~0ULL);
    for (const auto& [a, st] : h.mshr) {
      e.u(a.value() | st.recall_queued);
      if (st.active) {
        const HomeTxn& t = *st.active;
        e.u(static_cast<std::uint64_t>(t.kind) | (std::uint64_t{t.stage} << 4) | (std::uint64_t{t.insufficient} << 8) |
            (std::uint64_t{t.broadcast} << 9) | (std::uint64_t{t.recalled} << 10) | (std::uint64_t{t.dir_allocated} << 11) |
            (std::uint64_t{t.requestor} << 32));
        e.tok(t.requestor_held);
        e.u(t.pending);
        e.u(t.probed);
        e.u(t.holders);
        e.hold(t.collected);
        e.hold(t.grant);
        e.tok(t.reported);
        e.u(t.gold_chip ? *t.gold_chip + 1 : 0);
      } else {
        e.u(~1ULL);
      }
      e.u(st.queue.size());
      for (const auto& m : st.queue) e.msg(m);
    }
    e.u(~0ULL);
  }
}

}  // namespace mcsim::rainbow
