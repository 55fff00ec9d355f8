#include "mcsim/engine.hpp"

#include <algorithm>

namespace mcsim {

namespace {

std::string first_line(Cycle at, const std::vector<Violation>& v) {
  std::string s = "audit at cycle " + std::to_string(at) + ": " + std::to_string(v.size()) + " violation(s)";
  if (!v.empty()) s += "; first: " + describe(v.front());
  return s;
}

enum class EventKind : std::uint8_t { Issue, Depart, Deliver };

struct Event {
  Cycle time = 0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::Issue;
  std::uint32_t core = 0;
  Message msg;
};

struct Later {
  bool operator()(const Event& a, const Event& b) const {
    return a.time != b.time ? a.time > b.time : a.seq > b.seq;
  }
};

struct CoreRun {
  std::vector<std::uint32_t> records;  // indices into the trace
  std::size_t next = 0;
  bool waiting = false;
  Cycle issued_at = 0;
};

class Engine {
 public:
  Engine(const SystemConfig& cfg, const std::string& protocol, const Trace& trace, const RunOptions& opt)
      : cfg_(cfg),
        opt_(opt),
        trace_(trace),
        proto_(make_protocol(protocol, cfg)),
        topo_(cfg.shape, cfg.topology, cfg.latency),
        cores_(cfg.shape.total_cores()),
        link_free_(topo_.link_count(), 0),
        link_flits_(topo_.link_count(), 0),
        agents_(cfg.shape.total_cores() + cfg.shape.num_chips * (cfg.shape.llc_banks_per_chip + 1)),
        channel_last_(std::size_t{agents_} * agents_, 0),
        channel_depart_(std::size_t{agents_} * agents_, 0) {
    stats_.protocol = protocol;
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const auto& r = trace[i];
      if (r.core >= cores_.size()) throw ConfigError("trace record for core " + std::to_string(r.core) + " out of range");
      if (!r.addr.aligned(cfg.shape.block_size)) throw ConfigError("unaligned trace address " + to_hex(r.addr));
      cores_[r.core].records.push_back(static_cast<std::uint32_t>(i));
    }
  }

  RunStats run() {
    for (std::uint32_t c = 0; c < cores_.size(); ++c)
      if (!cores_[c].records.empty()) push_issue(c, 0);
    Cycle next_audit = opt_.audit_interval;
    while (!heap_.empty()) {
      if (opt_.audit_interval && heap_.front().time >= next_audit) {
        audit(next_audit, false);
        next_audit = (heap_.front().time / opt_.audit_interval + 1) * opt_.audit_interval;
      }
      std::pop_heap(heap_.begin(), heap_.end(), Later{});
      Event e = std::move(heap_.back());
      heap_.pop_back();
      now_ = e.time;
      switch (e.kind) {
        case EventKind::Deliver:
          out_.clear();
          proto_->deliver(e.msg, now_, out_);
          drain();
          break;
        case EventKind::Depart:
          inject(std::move(e.msg));
          break;
        case EventKind::Issue:
          issue(e.core);
          break;
      }
    }
    for (std::uint32_t c = 0; c < cores_.size(); ++c)
      if (cores_[c].waiting || cores_[c].next < cores_[c].records.size())
        throw ProtocolViolation("liveness: core " + std::to_string(c) + " never completed its access");
    if (opt_.final_audit && !trace_.empty()) audit(now_, true);
    return finish();
  }

 private:
  void push_issue(std::uint32_t core, Cycle t) {
    Event e;
    e.time = t;
    e.core = core;
    push(std::move(e));
  }

  void issue(std::uint32_t core) {
    CoreRun& c = cores_[core];
    const TraceRecord& r = trace_[c.records[c.next++]];
    c.waiting = true;
    c.issued_at = now_;
    out_.clear();
    const AccessResult res = proto_->access(core, r.op, r.addr, now_, out_);
    if (res.hit) complete(core, now_ + res.latency, res.source);
    drain();
  }

  void complete(std::uint32_t core, Cycle at, ServiceSource src) {
    CoreRun& c = cores_[core];
    if (!c.waiting) throw ProtocolViolation("completion for idle core " + std::to_string(core));
    c.waiting = false;
    const Cycle lat = at - c.issued_at;
    ++stats_.accesses;
    stats_.total_latency += lat;
    stats_.latency_by_source[static_cast<int>(src)] += lat;
    ++stats_.accesses_by_source[static_cast<int>(src)];
    stats_.completion_cycle = std::max(stats_.completion_cycle, at);
    if (c.next < c.records.size()) push_issue(core, at + 1);
  }

  std::size_t channel(const Message& m) const {
    return std::size_t{m.src.dense(cfg_.shape)} * agents_ + m.dst.dense(cfg_.shape);
  }

  void push(Event e) {
    e.seq = seq_++;
    heap_.push_back(std::move(e));
    std::push_heap(heap_.begin(), heap_.end(), Later{});
  }

  // Links are claimed when a message leaves its controller, not when it is
  // queued; a channel's messages leave in the order they were sent.
  void drain() {
    for (const Completion& k : out_.completions) complete(k.core, now_, k.source);
    for (Send& s : out_.sends) {
      Cycle& dep = channel_depart_[channel(s.msg)];
      dep = std::max(dep, now_ + s.delay);
      if (dep == now_) {
        inject(std::move(s.msg));
      } else {
        Event e;
        e.time = dep;
        e.kind = EventKind::Depart;
        e.msg = std::move(s.msg);
        push(std::move(e));
      }
    }
    out_.clear();
  }

  void inject(Message m) {
    const Cycle t = now_;
    const std::uint32_t bytes = m.size_bytes();
    const std::uint32_t flits = topo_.flits(bytes);
    const Cycle link = cfg_.latency.link_cycle;
    Cycle head = t;
    const auto path = topo_.route(m.src, m.dst);
    for (std::uint32_t l : path) {
      const Cycle start = std::max(head, link_free_[l]);
      link_free_[l] = start + flits * link;
      link_flits_[l] += flits;
      head = start + link;
    }
    Cycle arrive = path.empty() ? t : head + (flits - 1);
    Cycle& last = channel_last_[channel(m)];
    arrive = std::max(arrive, last);
    last = arrive;
    ++stats_.messages;
    stats_.message_bytes += bytes;
    stats_.flits += flits * path.size();
    Event e;
    e.time = arrive;
    e.kind = EventKind::Deliver;
    e.msg = std::move(m);
    push(std::move(e));
  }

  void audit(Cycle at, bool quiescent) {
    in_flight_.clear();
    for (const Event& e : heap_)
      if (e.kind != EventKind::Issue) in_flight_.push_back(e.msg);
    std::vector<Violation> v;
    proto_->audit(in_flight_, quiescent, v);
    ++stats_.audits;
    if (!v.empty()) throw AuditFailure(at, std::move(v));
  }

  RunStats finish() {
    stats_.counters = proto_->counters();
    if (stats_.accesses == 0) stats_.counters = ProtocolCounters{};
    stats_.links.reserve(topo_.link_count());
    for (std::size_t i = 0; i < topo_.link_count(); ++i) {
      LinkStats ls;
      ls.link = topo_.link(i);
      ls.flits = link_flits_[i];
      ls.busy_cycles = link_flits_[i] * cfg_.latency.link_cycle;
      ls.utilization = stats_.completion_cycle ? double(ls.busy_cycles) / double(stats_.completion_cycle) : 0.0;
      stats_.links.push_back(ls);
    }
    return std::move(stats_);
  }

  const SystemConfig& cfg_;
  RunOptions opt_;
  const Trace& trace_;
  std::unique_ptr<Protocol> proto_;
  Topology topo_;
  std::vector<CoreRun> cores_;
  std::vector<Cycle> link_free_;
  std::vector<std::uint64_t> link_flits_;
  std::uint32_t agents_;
  std::vector<Cycle> channel_last_;
  std::vector<Cycle> channel_depart_;
  std::vector<Event> heap_;
  std::vector<Message> in_flight_;
  Outbox out_;
  Cycle now_ = 0;
  std::uint64_t seq_ = 0;
  RunStats stats_;
};

}  // namespace

AuditFailure::AuditFailure(Cycle at, std::vector<Violation> v)
    : ProtocolViolation(first_line(at, v)), cycle_(at), violations_(std::move(v)) {}

RunStats run(const SystemConfig& cfg, const std::string& protocol, const Trace& trace, const RunOptions& opt) {
  cfg.validate();
  return Engine(cfg, protocol, trace, opt).run();
}

}  // namespace mcsim
