#pragma once

#include <cstdint>

#include "elastic/window.hpp"

namespace elastic {

/// Release-mode observer: structures skip every hook when `enabled` is false.
struct NullObserver {
  static constexpr bool enabled = false;
};

/// One resident item as seen by a serialized walk of the lanes.
struct LiveItem {
  std::uint64_t value;
  std::uint32_t lane;
  std::uint64_t row;
};

enum class ShiftDir : std::uint8_t { up = 0, down = 1 };

/// Decoded stack window.
struct StackWindow {
  std::uint32_t max = 0;
  std::uint16_t depth = 2;
  std::uint16_t push_width = 1;
  std::uint16_t pop_width = 1;
  std::uint16_t last_push_width = 1;
  ShiftDir last_shift = ShiftDir::up;
  std::uint32_t version = 0;  // 31 bits

  std::uint32_t min() const { return max >= depth ? max - depth : 0; }
  std::uint32_t shift() const { return depth / 2; }
  WindowView push_view() const { return {max, depth, push_width}; }
  WindowView pop_view() const { return {max, depth, pop_width}; }
  friend bool operator==(const StackWindow&, const StackWindow&) = default;
};

/// (row, width) record of the stack's side structure, listed top-down.
struct LateralEntry {
  std::uint32_t row;
  std::uint32_t width;
  friend bool operator==(const LateralEntry&, const LateralEntry&) = default;
};

}  // namespace elastic
