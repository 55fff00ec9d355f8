#include "mcsim/message.hpp"

#include <sstream>

namespace mcsim {

const char* to_string(MsgKind k) {
  switch (k) {
    case MsgKind::ReadReq: return "ReadReq";
    case MsgKind::WriteReq: return "WriteReq";
    case MsgKind::TokenCountQuery: return "TokenCountQuery";
    case MsgKind::TokenCountReply: return "TokenCountReply";
    case MsgKind::DataResp: return "DataResp";
    case MsgKind::TokenResp: return "TokenResp";
    case MsgKind::Inval: return "Inval";
    case MsgKind::EvictNotify: return "EvictNotify";
    case MsgKind::ReconstructBcast: return "ReconstructBcast";
    case MsgKind::MemWriteBack: return "MemWriteBack";
    case MsgKind::ReadFwd: return "ReadFwd";
    case MsgKind::PrivWriteback: return "PrivWriteback";
  }
  return "?";
}

const char* to_string(ServiceSource s) {
  switch (s) {
    case ServiceSource::L1: return "l1";
    case ServiceSource::L2: return "l2";
    case ServiceSource::Llc: return "llc";
    case ServiceSource::RemoteChip: return "remote_chip";
    case ServiceSource::Memory: return "memory";
  }
  return "?";
}

const char* to_string(Moesi s) {
  switch (s) {
    case Moesi::I: return "I";
    case Moesi::S: return "S";
    case Moesi::E: return "E";
    case Moesi::O: return "O";
    case Moesi::M: return "M";
  }
  return "?";
}

std::string describe(const Message& m) {
  std::ostringstream os;
  os << to_string(m.kind) << ' ' << to_string(m.src) << "->" << to_string(m.dst) << ' ' << to_hex(m.addr) << ' '
     << op_char(m.op);
  if (!m.tokens.empty()) os << " tok=" << m.tokens;
  if (!m.held.empty()) os << " held=" << m.held;
  if (m.carries_data) os << " data(v" << m.version << (m.dirty ? ",dirty" : "") << ')';
  if (m.state != Moesi::I) os << " st=" << to_string(m.state);
  if (m.emptied) os << " emptied";
  if (m.external) os << " ext";
  if (m.flag) os << " flag";
  return os.str();
}

void encode_message(const Message& m, std::vector<std::uint64_t>& w) {
  w.push_back(static_cast<std::uint64_t>(m.kind) | (static_cast<std::uint64_t>(m.op) << 8) |
              (static_cast<std::uint64_t>(m.state) << 12) | (static_cast<std::uint64_t>(m.cause) << 16) |
              (static_cast<std::uint64_t>(m.source) << 20) | (std::uint64_t{m.carries_data} << 24) |
              (std::uint64_t{m.dirty} << 25) | (std::uint64_t{m.emptied} << 26) | (std::uint64_t{m.external} << 27) |
              (std::uint64_t{m.flag} << 28) | (std::uint64_t{m.requestor} << 32));
  auto agent = [](const AgentId& a) {
    return (static_cast<std::uint64_t>(a.kind) << 56) | (std::uint64_t{a.chip} << 28) | a.unit;
  };
  w.push_back(agent(m.src));
  w.push_back(agent(m.dst));
  w.push_back(m.addr.value());
  w.push_back((std::uint64_t{m.tokens.gold} << 42) | (std::uint64_t{m.tokens.silver} << 21) | m.tokens.bronze);
  w.push_back((std::uint64_t{m.held.gold} << 42) | (std::uint64_t{m.held.silver} << 21) | m.held.bronze);
  w.push_back(m.version);
  w.push_back(m.count);
}

}  // namespace mcsim
