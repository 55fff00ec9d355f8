#include "mcsim/topology.hpp"

#include <cstdlib>

namespace mcsim {

std::string to_string(const LinkId& l) {
  if (l.off_chip) return "chip" + std::to_string(l.from) + "->chip" + std::to_string(l.to);
  return "chip" + std::to_string(l.chip) + ":n" + std::to_string(l.from) + "->n" + std::to_string(l.to);
}

Topology::Topology(const SystemShape& shape, TopologyConfig mesh, const LatencyConfig& lat)
    : shape_(shape), mesh_(mesh), lat_(lat) {
  if (mesh.mesh_x == 0 || mesh.mesh_y == 0) throw ConfigError("mesh dimensions must be positive");
  const std::uint32_t n = mesh.mesh_x * mesh.mesh_y;
  mesh_index_.assign(std::size_t{shape.num_chips} * n * n, ~0u);
  for (std::uint32_t c = 0; c < shape.num_chips; ++c)
    for (std::uint32_t a = 0; a < n; ++a)
      for (std::uint32_t b = 0; b < n; ++b)
        if (mesh_distance(a, b) == 1) {
          mesh_index_[(std::size_t{c} * n + a) * n + b] = static_cast<std::uint32_t>(links_.size());
          links_.push_back({false, c, a, b});
        }
  chip_index_.assign(std::size_t{shape.num_chips} * shape.num_chips, ~0u);
  for (std::uint32_t a = 0; a < shape.num_chips; ++a)
    for (std::uint32_t b = 0; b < shape.num_chips; ++b)
      if (a != b) {
        chip_index_[std::size_t{a} * shape.num_chips + b] = static_cast<std::uint32_t>(links_.size());
        links_.push_back({true, a, a, b});
      }
}

std::uint32_t Topology::node_of(const AgentId& a) const {
  const std::uint32_t n = mesh_.mesh_x * mesh_.mesh_y;
  switch (a.kind) {
    case AgentKind::CoreCache:
    case AgentKind::LlcBank:
    case AgentKind::Dfllc:
      return a.unit % n;
    case AgentKind::MemCtrl:
      return 0;
  }
  return 0;
}

std::uint32_t Topology::mesh_distance(std::uint32_t a, std::uint32_t b) const {
  const int ax = static_cast<int>(a % mesh_.mesh_x), ay = static_cast<int>(a / mesh_.mesh_x);
  const int bx = static_cast<int>(b % mesh_.mesh_x), by = static_cast<int>(b / mesh_.mesh_x);
  return static_cast<std::uint32_t>(std::abs(ax - bx) + std::abs(ay - by));
}

std::uint32_t Topology::hops(const AgentId& src, const AgentId& dst) const {
  const std::uint32_t s = node_of(src), d = node_of(dst);
  if (src.chip == dst.chip) return mesh_distance(s, d);
  return mesh_distance(s, 0) + 1 + mesh_distance(0, d);
}

std::uint32_t Topology::flits(std::uint32_t msg_bytes) const {
  const std::uint32_t w = lat_.link_width_bytes;
  return msg_bytes == 0 ? 1 : (msg_bytes + w - 1) / w;
}

Cycle Topology::route_latency(const AgentId& src, const AgentId& dst, std::uint32_t msg_bytes) const {
  const std::uint32_t h = hops(src, dst);
  if (h == 0) return 0;
  return h * lat_.link_cycle + (flits(msg_bytes) - 1);
}

std::uint32_t Topology::mesh_link(std::uint32_t chip, std::uint32_t from, std::uint32_t to) const {
  const std::uint32_t n = mesh_.mesh_x * mesh_.mesh_y;
  return mesh_index_[(std::size_t{chip} * n + from) * n + to];
}

void Topology::mesh_path(std::uint32_t chip, std::uint32_t a, std::uint32_t b, std::vector<std::uint32_t>& out) const {
  // XY routing: finish the X leg before turning.
  std::uint32_t x = a % mesh_.mesh_x, y = a / mesh_.mesh_x;
  const std::uint32_t bx = b % mesh_.mesh_x, by = b / mesh_.mesh_x;
  while (x != bx) {
    const std::uint32_t nx = x < bx ? x + 1 : x - 1;
    out.push_back(mesh_link(chip, y * mesh_.mesh_x + x, y * mesh_.mesh_x + nx));
    x = nx;
  }
  while (y != by) {
    const std::uint32_t ny = y < by ? y + 1 : y - 1;
    out.push_back(mesh_link(chip, y * mesh_.mesh_x + x, ny * mesh_.mesh_x + x));
    y = ny;
  }
}

std::vector<std::uint32_t> Topology::route(const AgentId& src, const AgentId& dst) const {
  std::vector<std::uint32_t> out;
  const std::uint32_t s = node_of(src), d = node_of(dst);
  if (src.chip == dst.chip) {
    mesh_path(src.chip, s, d, out);
    return out;
  }
  mesh_path(src.chip, s, 0, out);
  out.push_back(chip_index_[std::size_t{src.chip} * shape_.num_chips + dst.chip]);
  mesh_path(dst.chip, 0, d, out);
  return out;
}

}  // namespace mcsim
