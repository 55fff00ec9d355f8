#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcsim/config.hpp"
#include "mcsim/types.hpp"

namespace mcsim {

// One directed link: a mesh hop inside a chip or an off-chip hop.
struct LinkId {
  bool off_chip = false;
  std::uint32_t chip = 0;  // owning chip (source chip for off-chip links)
  std::uint32_t from = 0;  // mesh node, or source chip
  std::uint32_t to = 0;    // mesh node, or destination chip

  friend bool operator==(const LinkId&, const LinkId&) = default;
  friend auto operator<=>(const LinkId&, const LinkId&) = default;
};

std::string to_string(const LinkId& l);

// Per-chip XY mesh plus all-to-all chip links attached at node 0.
class Topology {
 public:
  Topology(const SystemShape& shape, TopologyConfig mesh, const LatencyConfig& lat);

  std::uint32_t node_of(const AgentId& a) const;
  std::uint32_t hops(const AgentId& src, const AgentId& dst) const;
  // Uncontended latency: hops x link_cycle + (flits - 1), zero when src and dst share a node.
  Cycle route_latency(const AgentId& src, const AgentId& dst, std::uint32_t msg_bytes) const;
  std::uint32_t flits(std::uint32_t msg_bytes) const;

  // Links in traversal order.
  std::vector<std::uint32_t> route(const AgentId& src, const AgentId& dst) const;

  std::size_t link_count() const { return links_.size(); }
  const LinkId& link(std::size_t i) const { return links_[i]; }

 private:
  std::uint32_t mesh_distance(std::uint32_t a, std::uint32_t b) const;
  void mesh_path(std::uint32_t chip, std::uint32_t a, std::uint32_t b, std::vector<std::uint32_t>& out) const;
  std::uint32_t mesh_link(std::uint32_t chip, std::uint32_t from, std::uint32_t to) const;

  SystemShape shape_;
  TopologyConfig mesh_;
  LatencyConfig lat_;
  std::vector<LinkId> links_;
  std::vector<std::uint32_t> mesh_index_;  // chip * nodes^2 + from * nodes + to -> link index or ~0
  std::vector<std::uint32_t> chip_index_;  // src * chips + dst -> link index
};

}  // namespace mcsim
