#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mcsim/config.hpp"
#include "mcsim/types.hpp"

namespace mcsim {

// LRU set-associative array of protocol lines. Line must expose
// `BlockAddress addr` and `std::uint64_t lru`. A set may temporarily hold
// more than `ways` lines when no resident line is evictable.
template <typename Line>
class CacheArray {
 public:
  CacheArray() = default;
  CacheArray(CacheGeometry g, std::uint32_t index_shift, std::uint32_t index_stride = 1)
      : geo_(g), shift_(index_shift), stride_(index_stride), sets_(g.ways == 0 ? 0 : g.sets) {}

  bool enabled() const { return geo_.ways > 0; }
  const CacheGeometry& geometry() const { return geo_; }

  Line* find(BlockAddress a) {
    if (!enabled()) return nullptr;
    for (auto& l : sets_[set_of(a)])
      if (l.addr == a) return &l;
    return nullptr;
  }
  const Line* find(BlockAddress a) const { return const_cast<CacheArray*>(this)->find(a); }

  void touch(Line& l) { l.lru = ++clock_; }

  // Inserts a new line (addr must be absent). Returns the displaced line,
  // picked LRU-first among lines accepted by `evictable`.
  std::optional<Line> insert(Line line, const std::function<bool(const Line&)>& evictable = nullptr) {
    auto& set = sets_[set_of(line.addr)];
    std::optional<Line> victim;
    if (set.size() >= geo_.ways) {
      auto best = set.end();
      for (auto it = set.begin(); it != set.end(); ++it) {
        if (evictable && !evictable(*it)) continue;
        if (best == set.end() || it->lru < best->lru) best = it;
      }
      if (best != set.end()) {
        victim = std::move(*best);
        set.erase(best);
      }
    }
    line.lru = ++clock_;
    set.push_back(std::move(line));
    ++size_;
    if (victim) --size_;
    return victim;
  }

  // Evicts LRU lines (subject to `evictable`) until the set of `a` fits.
  std::optional<Line> shrink_set(BlockAddress a, const std::function<bool(const Line&)>& evictable) {
    auto& set = sets_[set_of(a)];
    if (set.size() <= geo_.ways) return std::nullopt;
    auto best = set.end();
    for (auto it = set.begin(); it != set.end(); ++it) {
      if (evictable && !evictable(*it)) continue;
      if (best == set.end() || it->lru < best->lru) best = it;
    }
    if (best == set.end()) return std::nullopt;
    Line v = std::move(*best);
    set.erase(best);
    --size_;
    return v;
  }

  std::optional<Line> erase(BlockAddress a) {
    if (!enabled()) return std::nullopt;
    auto& set = sets_[set_of(a)];
    for (auto it = set.begin(); it != set.end(); ++it) {
      if (it->addr == a) {
        Line l = std::move(*it);
        set.erase(it);
        --size_;
        return l;
      }
    }
    return std::nullopt;
  }

  bool set_full(BlockAddress a) const { return enabled() && sets_[set_of(a)].size() >= geo_.ways; }
  std::uint64_t size() const { return size_; }

  template <typename F>
  void for_each(F&& f) const {
    for (const auto& set : sets_)
      for (const auto& l : set) f(l);
  }

  // Visits lines set by set, least- to most-recently used, for hashing.
  template <typename F>
  void for_each_canonical(F&& f) const {
    std::vector<const Line*> tmp;
    for (std::size_t s = 0; s < sets_.size(); ++s) {
      if (sets_[s].empty()) continue;
      tmp.clear();
      for (const auto& l : sets_[s]) tmp.push_back(&l);
      std::sort(tmp.begin(), tmp.end(), [](const Line* a, const Line* b) { return a->lru < b->lru; });
      for (const Line* l : tmp) f(*l);
    }
  }

 private:
  std::size_t set_of(BlockAddress a) const {
    return static_cast<std::size_t>(((a.value() >> shift_) / stride_) & (geo_.sets - 1));
  }

  CacheGeometry geo_{1, 0};
  std::uint32_t shift_ = 6;
  std::uint32_t stride_ = 1;
  std::vector<std::vector<Line>> sets_;
  std::uint64_t clock_ = 0;
  std::uint64_t size_ = 0;
};

// Exclusive L1/L2 pair: L2 holds only L1 victims.
template <typename Line>
class PrivateHierarchy {
 public:
  PrivateHierarchy() = default;
  PrivateHierarchy(CacheGeometry l1, CacheGeometry l2, std::uint32_t block_bits)
      : l1_(l1, block_bits), l2_(l2, block_bits) {}

  enum class Level { None, L1, L2 };

  Level level_of(BlockAddress a) const {
    if (l1_.find(a)) return Level::L1;
    if (l2_.find(a)) return Level::L2;
    return Level::None;
  }

  Line* find(BlockAddress a) {
    if (Line* l = l1_.find(a)) return l;
    return l2_.find(a);
  }
  const Line* find(BlockAddress a) const { return const_cast<PrivateHierarchy*>(this)->find(a); }

  // Moves an L2 line into L1; returns any line pushed out of the hierarchy.
  std::optional<Line> promote(BlockAddress a) {
    auto l = l2_.erase(a);
    if (!l) return std::nullopt;
    return fill(std::move(*l));
  }

  // Installs a line in L1, cascading the L1 victim into L2. Returns the line
  // that leaves the private hierarchy, if any.
  std::optional<Line> fill(Line line) {
    auto v1 = l1_.insert(std::move(line));
    if (!v1) return std::nullopt;
    if (!l2_.enabled()) return v1;
    return l2_.insert(std::move(*v1));
  }

  void touch(BlockAddress a) {
    if (Line* l = l1_.find(a)) l1_.touch(*l);
  }

  std::optional<Line> erase(BlockAddress a) {
    if (auto l = l1_.erase(a)) return l;
    return l2_.erase(a);
  }

  template <typename F>
  void for_each(F&& f) const {
    l1_.for_each(f);
    l2_.for_each(f);
  }
  template <typename F>
  void for_each_canonical(F&& f) const {
    l1_.for_each_canonical(f);
    l2_.for_each_canonical(f);
  }

 private:
  CacheArray<Line> l1_;
  CacheArray<Line> l2_;
};

}  // namespace mcsim
