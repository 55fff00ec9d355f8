#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "mcsim/cache_array.hpp"
#include "mcsim/protocol.hpp"

namespace mcsim::hta {

// One cached copy. Owners are M, E or O; `excl` means no other chip holds
// the block. M and E are also the only copy on their chip.
struct Line {
  BlockAddress addr;
  std::uint64_t lru = 0;
  Moesi state = Moesi::I;
  bool excl = false;
  bool dirty = false;
  std::uint64_t version = 0;

  bool valid() const { return state != Moesi::I; }
  bool owner() const { return state == Moesi::M || state == Moesi::E || state == Moesi::O; }
};

// Copies gathered by a transaction. At most one of them may be an owner.
struct Gathered {
  bool valid = false;
  bool owner = false;
  bool excl = false;
  bool dirty = false;
  std::uint64_t version = 0;
  std::uint32_t copies = 0;

  void add(const Line& l);
  void add(const Gathered& g);
};

struct CoreState {
  PrivateHierarchy<Line> caches;
  bool busy = false;
  BlockAddress pending_addr;
  Op pending_op = Op::Read;
};

enum class BankTxnKind : std::uint8_t { LocalRead, LocalWrite, ExtRead, ExtInval };
enum class BankPhase : std::uint8_t { Collecting, AtHome };

struct BankTxn {
  BankTxnKind kind = BankTxnKind::LocalRead;
  BankPhase phase = BankPhase::Collecting;
  std::uint32_t requestor = 0;  // core unit
  std::uint32_t pending = 0;
  Gathered collected;
  InvalCause cause = InvalCause::Coherence;
};

struct BankAddrState {
  std::optional<BankTxn> local;
  std::optional<BankTxn> ext;
  std::vector<Message> local_queue;
  std::vector<Message> probe_queue;

  bool idle() const { return !local && !ext && local_queue.empty() && probe_queue.empty(); }
};

struct BankState {
  CacheArray<Line> llc;
  std::map<BlockAddress, BankAddrState> mshr;
};

enum class PfKind : std::uint8_t { Exclusive, Owned, Shared };

// Probe-filter entry: which chip (if any) owns the block.
struct PfEntry {
  BlockAddress addr;
  std::uint64_t lru = 0;
  PfKind kind = PfKind::Shared;
  std::uint32_t owner = 0;
};

enum class HomeTxnKind : std::uint8_t { Read, Write, PfEvict };

struct HomeTxn {
  HomeTxnKind kind = HomeTxnKind::Read;
  std::uint32_t requestor = 0;  // chip
  bool has_data = false;        // requesting chip still holds a valid copy
  std::uint32_t pending = 0;
  std::uint32_t probed_owner = 0;
  bool forwarded = false;
  Gathered collected;
  PfEntry victim;  // PfEvict only
};

struct HomeAddrState {
  std::optional<HomeTxn> active;
  std::vector<Message> queue;
};

struct HomeState {
  CacheArray<PfEntry> pf;
  std::map<BlockAddress, std::uint64_t> memory;  // absent = version 0
  std::map<BlockAddress, HomeAddrState> mshr;
};

class HtaProtocol final : public Protocol {
 public:
  explicit HtaProtocol(const SystemConfig& cfg);

  const char* name() const override { return "hta"; }
  const SystemConfig& config() const override { return cfg_; }

  AccessResult access(std::uint32_t core, Op op, BlockAddress addr, Cycle now, Outbox& out) override;
  void deliver(const Message& msg, Cycle now, Outbox& out) override;
  std::unique_ptr<Protocol> clone() const override { return std::make_unique<HtaProtocol>(*this); }
  void encode_state(std::vector<std::uint64_t>& out) const override;
  void audit(std::span<const Message> in_flight, bool quiescent, std::vector<Violation>& out) const override;
  const ProtocolCounters& counters() const override { return counters_; }
  std::uint32_t busy_cores() const override;
  bool core_busy(std::uint32_t core) const override { return cores_.at(core).busy; }
  std::optional<std::uint64_t> l1_read_hit(std::uint32_t core, BlockAddress a) const override;

  // Introspection for tests.
  const CoreState& core(std::uint32_t global) const { return cores_[global]; }
  const BankState& bank(std::uint32_t chip, std::uint32_t unit) const { return banks_[chip * shape().llc_banks_per_chip + unit]; }
  const HomeState& home(std::uint32_t chip) const { return homes_[chip]; }
  const PfEntry* pf_entry(BlockAddress a) const { return homes_[amap_.home_chip(a)].pf.find(a); }
  std::uint64_t memory_version(BlockAddress a) const;

 private:
  const SystemShape& shape() const { return cfg_.shape; }
  BankState& bank_for(std::uint32_t chip, BlockAddress a) { return banks_[chip * shape().llc_banks_per_chip + amap_.bank_of(a)]; }
  AgentId bank_id(std::uint32_t chip, BlockAddress a) const { return AgentId::bank(chip, amap_.bank_of(a)); }
  AgentId home_id(BlockAddress a) const { return AgentId::mem(amap_.home_chip(a)); }
  Message make(MsgKind k, AgentId src, AgentId dst, BlockAddress a) const;
  void count_fanout(std::uint32_t targets, bool broadcast);

  // Cores.
  void core_deliver(const Message& m, Outbox& out);
  void core_fill(std::uint32_t global, Line line, Outbox& out);
  void core_writeback(std::uint32_t global, const Line& line, Outbox& out);

  // LLC banks.
  void bank_deliver(const Message& m, Outbox& out);
  void bank_absorb(std::uint32_t chip, const Message& m, Outbox& out);
  void bank_pump(std::uint32_t chip, BlockAddress a, Outbox& out);
  void bank_start_local(std::uint32_t chip, BlockAddress a, const Message& req, Outbox& out);
  void bank_start_ext(std::uint32_t chip, BlockAddress a, const Message& probe, Outbox& out);
  void bank_snoop(std::uint32_t chip, BlockAddress a, BankTxn& t, MsgKind kind, std::optional<std::uint32_t> skip,
                  Outbox& out);
  void bank_resolve(std::uint32_t chip, BlockAddress a, Outbox& out);
  void bank_grant_core(std::uint32_t chip, BlockAddress a, std::uint32_t unit, Line l, ServiceSource src, Outbox& out);
  void bank_finish(std::uint32_t chip, BlockAddress a, bool ext, Outbox& out);
  void put_llc(std::uint32_t chip, Line l, Outbox& out);
  void evict_llc(std::uint32_t chip, const Line& victim, Outbox& out);

  // Home memory controller and probe filter.
  void home_deliver(const Message& m, Outbox& out);
  void home_pump(std::uint32_t home, BlockAddress a, Outbox& out);
  void home_start(std::uint32_t home, BlockAddress a, const Message& req, Outbox& out);
  void home_probe(std::uint32_t home, BlockAddress a, HomeTxn& t, MsgKind kind, InvalCause cause,
                  std::uint64_t chips, Outbox& out);
  std::uint64_t other_chips(std::uint32_t chip) const { return ((1ULL << shape().num_chips) - 1) & ~(1ULL << chip); }
  void home_resolve(std::uint32_t home, BlockAddress a, Outbox& out);
  void home_grant(std::uint32_t home, BlockAddress a, HomeTxn& t, Moesi state, std::optional<std::uint64_t> data,
                  ServiceSource src, Outbox& out);
  std::uint64_t read_memory(std::uint32_t home, BlockAddress a);
  void home_finish(std::uint32_t home, BlockAddress a, Outbox& out);
  void pf_allocate(std::uint32_t home, PfEntry e, Outbox& out);
  void pf_evict(std::uint32_t home, PfEntry victim, Outbox& out);

  SystemConfig cfg_;
  AddressMap amap_;
  std::vector<CoreState> cores_;
  std::vector<BankState> banks_;
  std::vector<HomeState> homes_;
  std::vector<std::set<BlockAddress>> lost_;  // per chip: copies destroyed by probe-filter evictions
  ProtocolCounters counters_;
};

}  // namespace mcsim::hta
