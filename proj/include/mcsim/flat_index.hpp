#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace mcsim {

// Maps 64-bit keys to dense indices in insertion order. Open addressing,
// linear probing; keys are never erased.
class FlatIndex {
 public:
  explicit FlatIndex(std::size_t expected = 16) {
    std::size_t cap = 16;
    while (cap < expected * 2) cap <<= 1;
    slots_.assign(cap, kEmpty);
    keys_.reserve(expected);
  }

  std::pair<std::uint32_t, bool> insert(std::uint64_t key) {
    if ((keys_.size() + 1) * 10 > slots_.size() * 7) grow();
    std::size_t i = pos(key);
    while (slots_[i] != kEmpty) {
      if (keys_[slots_[i]] == key) return {slots_[i], false};
      i = (i + 1) & (slots_.size() - 1);
    }
    const auto id = static_cast<std::uint32_t>(keys_.size());
    slots_[i] = id;
    keys_.push_back(key);
    return {id, true};
  }

  std::optional<std::uint32_t> find(std::uint64_t key) const {
    for (std::size_t i = pos(key); slots_[i] != kEmpty; i = (i + 1) & (slots_.size() - 1))
      if (keys_[slots_[i]] == key) return slots_[i];
    return std::nullopt;
  }

  std::size_t size() const { return keys_.size(); }
  std::uint64_t key(std::uint32_t id) const { return keys_[id]; }

 private:
  static constexpr std::uint32_t kEmpty = ~0u;

  std::size_t pos(std::uint64_t key) const {
    std::uint64_t x = key * 0x9E3779B97F4A7C15ULL;
    x ^= x >> 31;
    return static_cast<std::size_t>(x) & (slots_.size() - 1);
  }

  void grow() {
    std::vector<std::uint32_t> old(slots_.size() * 2, kEmpty);
    slots_.swap(old);
    for (std::uint32_t id = 0; id < keys_.size(); ++id) {
      std::size_t i = pos(keys_[id]);
      while (slots_[i] != kEmpty) i = (i + 1) & (slots_.size() - 1);
      slots_[i] = id;
    }
  }

  std::vector<std::uint32_t> slots_;
  std::vector<std::uint64_t> keys_;
};

}  // namespace mcsim
