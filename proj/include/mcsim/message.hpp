#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcsim/tokens.hpp"
#include "mcsim/types.hpp"

namespace mcsim {

enum class MsgKind : std::uint8_t {
  ReadReq,          // core -> bank, or bank -> home
  WriteReq,         // core -> bank, or bank -> home
  TokenCountQuery,  // bank -> cores: reconstruction multicast
  TokenCountReply,  // core -> bank: tokens held (plus a grant from the silver holder)
  DataResp,         // grant that completes a request
  TokenResp,        // token-bearing acknowledgement
  Inval,            // recall every token / invalidate the copy
  EvictNotify,      // clean chip-level eviction
  ReconstructBcast, // home -> chips when D-MEM has no entry
  MemWriteBack,     // dirty chip-level eviction
  ReadFwd,          // bank -> silver owner, or home -> owner chip
  PrivWriteback,    // private L2 victim -> LLC bank
};

const char* to_string(MsgKind k);

// Why an invalidation-class message was sent.
enum class InvalCause : std::uint8_t { None, Coherence, DirectoryEviction, LlcEviction };

// Who supplied the data for a completed access; drives latency attribution.
enum class ServiceSource : std::uint8_t { L1, L2, Llc, RemoteChip, Memory };
constexpr int kServiceSources = 5;
const char* to_string(ServiceSource s);

// MOESI states used by the HTA baseline; Invalid doubles as "no copy".
enum class Moesi : std::uint8_t { I, S, E, O, M };
const char* to_string(Moesi s);

inline constexpr std::uint32_t kControlBytes = 8;
inline constexpr std::uint32_t kDataBytes = 72;

struct Message {
  MsgKind kind = MsgKind::ReadReq;
  AgentId src;
  AgentId dst;
  BlockAddress addr;
  Op op = Op::Read;
  TokenSet tokens;   // transferred with the message
  TokenSet held;     // reported, stays with the sender
  bool carries_data = false;
  bool dirty = false;
  std::uint64_t version = 0;
  Moesi state = Moesi::I;  // HTA: granted or previously held state
  std::uint32_t requestor = 0;  // core unit (on-chip) or chip index (off-chip)
  std::uint32_t count = 0;      // copies invalidated, cores in requesting chip, ...
  bool emptied = false;         // sender no longer holds the block
  bool external = false;        // request originated at the home controller
  bool flag = false;            // protocol-specific qualifier
  InvalCause cause = InvalCause::None;
  ServiceSource source = ServiceSource::Llc;

  std::uint32_t size_bytes() const { return carries_data ? kDataBytes : kControlBytes; }
};

std::string describe(const Message& m);

// Every field of a message as words, for state hashing.
void encode_message(const Message& m, std::vector<std::uint64_t>& w);

}  // namespace mcsim
