#pragma once

#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "mcsim/cache_array.hpp"
#include "mcsim/dlcbf.hpp"
#include "mcsim/flat_index.hpp"
#include "mcsim/protocol.hpp"
#include "mcsim/sparse_directory.hpp"

namespace mcsim::rainbow {

// Tokens plus the data they travel with.
struct Holding {
  TokenSet tokens;
  bool has_data = false;
  std::uint64_t version = 0;
  bool dirty = false;  // meaningful only together with gold

  bool empty() const { return tokens.empty(); }
  void add(const TokenSet& t, bool data, std::uint64_t ver, bool d);
  void add(const Holding& h) { add(h.tokens, h.has_data, h.version, h.dirty); }
};

struct PrivateLine {
  BlockAddress addr;
  std::uint64_t lru = 0;
  TokenSet tokens;
  std::uint64_t version = 0;
  bool dirty = false;
};

struct LlcLine {
  BlockAddress addr;
  std::uint64_t lru = 0;
  TokenSet tokens;
  std::uint64_t version = 0;
  bool dirty = false;
};

// Directory plus filter for one coherence domain. The exact ledger mirrors
// every filter update so audits can compare it with true residency.
struct DfStructure {
  SparseDirectory dir;
  DlcbfFilter filter;
  std::map<BlockAddress, std::uint32_t> ledger;

  DfStructure(DirConfig d, DlcbfConfig f) : dir(d), filter(f) {}
  // Returns true if the filter overflowed.
  bool arrive(BlockAddress a);
  void depart(BlockAddress a);
};

struct CoreState {
  PrivateHierarchy<PrivateLine> caches;
  bool busy = false;
  BlockAddress pending_addr;
  Op pending_op = Op::Read;
};

enum class BankTxnKind : std::uint8_t { LocalRead, LocalWrite, Evict, ExtRead, ExtInval };
enum class BankPhase : std::uint8_t { Collecting, AtHome };

struct BankTxn {
  BankTxnKind kind = BankTxnKind::LocalRead;
  BankPhase phase = BankPhase::Collecting;
  std::uint32_t requestor = 0;       // core unit (local) or requesting chip (external)
  std::uint32_t requestor_cores = 0; // external read: cores in the requesting chip
  std::uint32_t pending = 0;
  Holding collected;
  Holding grant;                      // split handed over by a core (reads)
  std::uint64_t queried = 0;          // cores asked in the current round
  std::uint64_t holders = 0;          // cores that reported tokens left after replying
  TokenSet reported;                  // sum of tokens cores said they kept
  std::optional<std::uint32_t> silver_holder;
  std::uint8_t stage = 0;
  bool reconstructed = false;
  bool dir_allocated = false;
  bool broadcast_done = false;
  bool gold_seen = false;             // a core reported gold it could not split
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
  CacheArray<LlcLine> llc;
  DfStructure df;
  std::map<BlockAddress, BankAddrState> mshr;

  BankState(CacheArray<LlcLine> l, DfStructure d) : llc(std::move(l)), df(std::move(d)) {}
};

enum class HomeTxnKind : std::uint8_t { Read, Write, Recall };

struct HomeTxn {
  HomeTxnKind kind = HomeTxnKind::Read;
  std::uint8_t stage = 0;
  std::uint32_t requestor = 0;  // chip
  TokenSet requestor_held;      // tokens already inside the requesting chip
  std::uint32_t pending = 0;
  std::uint64_t probed = 0;     // chips asked so far
  std::uint64_t holders = 0;    // chips reporting tokens after replying
  Holding collected;
  Holding grant;
  TokenSet reported;
  std::optional<std::uint32_t> gold_chip;
  bool insufficient = false;
  bool broadcast = false;
  bool recalled = false;
  bool dir_allocated = false;
};

struct MemoryBlock {
  TokenSet tokens;
  std::uint64_t version = 0;
};

// Memory-side token holdings. Absent blocks hold the full set at version 0.
class MemoryStore {
 public:
  MemoryBlock& get(BlockAddress a, const TokenSet& full) {
    const auto [i, fresh] = index_.insert(a.value());
    if (fresh) blocks_.push_back({a, MemoryBlock{full, 0}});
    return blocks_[i].second;
  }
  const MemoryBlock* find(BlockAddress a) const {
    const auto i = index_.find(a.value());
    return i ? &blocks_[*i].second : nullptr;
  }
  std::size_t size() const { return blocks_.size(); }
  // Insertion order.
  const std::vector<std::pair<BlockAddress, MemoryBlock>>& blocks() const { return blocks_; }
  // Entries that differ from the default, by address.
  std::vector<std::pair<BlockAddress, MemoryBlock>> canonical(const TokenSet& full) const;

 private:
  FlatIndex index_;
  std::vector<std::pair<BlockAddress, MemoryBlock>> blocks_;
};

struct HomeAddrState {
  std::optional<HomeTxn> active;
  std::vector<Message> queue;
  bool recall_queued = false;
};

struct HomeState {
  DfStructure df;
  MemoryStore memory;
  std::map<BlockAddress, HomeAddrState> mshr;

  explicit HomeState(DfStructure d) : df(std::move(d)) {}
};

class RainbowProtocol final : public Protocol {
 public:
  explicit RainbowProtocol(const SystemConfig& cfg);

  const char* name() const override { return "rainbow"; }
  const SystemConfig& config() const override { return cfg_; }

  AccessResult access(std::uint32_t core, Op op, BlockAddress addr, Cycle now, Outbox& out) override;
  void deliver(const Message& msg, Cycle now, Outbox& out) override;
  std::unique_ptr<Protocol> clone() const override { return std::make_unique<RainbowProtocol>(*this); }
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
  TokenSet memory_tokens(BlockAddress a) const;
  TokenSet private_tokens(std::uint32_t global, BlockAddress a) const;
  TokenSet llc_tokens(std::uint32_t chip, BlockAddress a) const;

  // Per-block token sums over every holder and the given in-flight messages.
  std::map<BlockAddress, TokenSet> token_census(std::span<const Message> in_flight) const;

 private:
  const SystemShape& shape() const { return cfg_.shape; }
  BankState& bank_for(std::uint32_t chip, BlockAddress a) { return banks_[chip * shape().llc_banks_per_chip + amap_.bank_of(a)]; }
  AgentId bank_id(std::uint32_t chip, BlockAddress a) const { return AgentId::bank(chip, amap_.bank_of(a)); }
  AgentId home_id(BlockAddress a) const { return AgentId::mem(amap_.home_chip(a)); }

  // Core side.
  void core_deliver(const Message& m, Outbox& out);
  void core_fill(std::uint32_t global, PrivateLine line, Outbox& out);
  void core_writeback(std::uint32_t global, const PrivateLine& line, Outbox& out);
  void core_answer_read(std::uint32_t global, const Message& m, MsgKind reply_kind, Outbox& out);

  // LLC bank + D|F-LLC.
  void bank_deliver(const Message& m, Outbox& out);
  void bank_absorb(std::uint32_t chip, BlockAddress a, std::uint32_t unit, const Message& m, Outbox& out);
  void bank_pump(std::uint32_t chip, BlockAddress a, Outbox& out);
  void bank_start_local(std::uint32_t chip, BlockAddress a, const Message& req, Outbox& out);
  void bank_start_ext(std::uint32_t chip, BlockAddress a, const Message& probe, Outbox& out);
  void bank_resolve(std::uint32_t chip, BlockAddress a, bool ext, Outbox& out);
  void bank_resolve_read(std::uint32_t chip, BlockAddress a, BankTxn& t, Outbox& out);
  void bank_resolve_write(std::uint32_t chip, BlockAddress a, BankTxn& t, Outbox& out);
  void bank_resolve_evict(std::uint32_t chip, BlockAddress a, BankTxn& t, Outbox& out);
  void bank_resolve_ext_read(std::uint32_t chip, BlockAddress a, BankTxn& t, Outbox& out);
  void bank_resolve_ext_inval(std::uint32_t chip, BlockAddress a, BankTxn& t, Outbox& out);
  void bank_query(std::uint32_t chip, BlockAddress a, BankTxn& t, MsgKind kind, std::uint64_t targets, bool broadcast,
                  Outbox& out);
  void bank_reply_home(std::uint32_t chip, BlockAddress a, BankTxn& t, const Holding& grant, bool insufficient,
                       Outbox& out);
  void bank_grant_core(std::uint32_t chip, BlockAddress a, std::uint32_t unit, Holding h, ServiceSource src, Outbox& out);
  void bank_finish_local(std::uint32_t chip, BlockAddress a, Outbox& out);
  void bank_finish_ext(std::uint32_t chip, BlockAddress a, Outbox& out);
  Holding take_llc(std::uint32_t chip, BlockAddress a);
  void put_llc(std::uint32_t chip, BlockAddress a, const Holding& h, Outbox& out);
  void start_llc_evict(std::uint32_t chip, LlcLine victim, Outbox& out);
  std::uint64_t all_cores_mask() const { return (shape().cores_per_chip >= 64) ? ~0ULL : ((1ULL << shape().cores_per_chip) - 1); }

  // Memory controller + D|F-MEM.
  void home_deliver(const Message& m, Outbox& out);
  void home_pump(std::uint32_t home, BlockAddress a, Outbox& out);
  void home_start(std::uint32_t home, BlockAddress a, const Message& req, Outbox& out);
  void home_probe(std::uint32_t home, BlockAddress a, HomeTxn& t, MsgKind kind, std::uint64_t chips, bool broadcast,
                  Outbox& out);
  void home_serve_memory(std::uint32_t home, BlockAddress a, HomeTxn& t, Outbox& out);
  void home_resolve(std::uint32_t home, BlockAddress a, Outbox& out);
  void home_grant(std::uint32_t home, BlockAddress a, HomeTxn& t, Holding h, ServiceSource src, Cycle delay, Outbox& out);
  void home_finish(std::uint32_t home, BlockAddress a, Outbox& out);
  void home_chip_departed(std::uint32_t home, BlockAddress a, std::uint32_t chip);
  MemoryBlock& memory(std::uint32_t home, BlockAddress a);
  Holding take_memory(std::uint32_t home, BlockAddress a);
  void put_memory(std::uint32_t home, BlockAddress a, const Holding& h);
  std::uint64_t all_chips_mask() const { return (shape().num_chips >= 64) ? ~0ULL : ((1ULL << shape().num_chips) - 1); }

  Message make(MsgKind k, AgentId src, AgentId dst, BlockAddress a) const;
  void count_fanout(std::uint64_t targets, bool broadcast);
  // Token sums indexed by `idx`; blocks only memory holds are checked against `full` directly.
  void census(std::span<const Message> in_flight, FlatIndex& idx, std::vector<TokenSet>& sum,
              std::vector<Violation>* out) const;

  SystemConfig cfg_;
  AddressMap amap_;
  std::vector<CoreState> cores_;
  std::vector<BankState> banks_;
  std::vector<HomeState> homes_;
  ProtocolCounters counters_;
};

}  // namespace mcsim::rainbow
