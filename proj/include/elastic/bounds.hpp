#pragma once

#include <cstdint>

namespace elastic::bounds {

/// Rank-error bound of a queue window: (width - 1) * depth.
constexpr std::uint64_t queue_window(std::uint64_t width, std::uint64_t depth) {
  return width == 0 ? 0 : (width - 1) * depth;
}

/// Per-item bound of the decoupled-window queue, from the item's enqueue
/// window and its dequeue window.
constexpr std::uint64_t lpw_queue_item(std::uint64_t enq_width, std::uint64_t enq_depth,
                                       std::uint64_t deq_depth) {
  if (enq_width == 0) return 0;
  const std::uint64_t span = enq_depth + deq_depth;
  return (enq_width - 1) * (span == 0 ? 0 : span - 1);
}

/// Per-item bound of the elastic stack from the widest push width and the
/// deepest window seen during the item's lifetime.
constexpr std::uint64_t stack_elastic(std::uint64_t max_width, std::uint64_t max_depth) {
  if (max_width == 0 || max_depth == 0) return 0;
  return (max_width - 1) * (3 * max_depth - 1);
}

/// Stack window shift for a given depth.
constexpr std::uint64_t stack_shift(std::uint64_t depth) { return depth / 2; }

/// Bound of the stack under a fixed (width, depth) configuration, with
/// shift = floor(depth / 2). Requires depth >= 2.
constexpr std::uint64_t stack_static(std::uint64_t width, std::uint64_t depth) {
  if (width == 0) return 0;
  const std::uint64_t s = stack_shift(depth);
  if (s == 0) return 0;
  return (2 * depth + 2 * s + ((depth - 1) / s) * s) * (width - 1);
}

/// Largest queue depth with queue_window(width, depth) <= k, or 0 if none.
constexpr std::uint64_t max_queue_depth(std::uint64_t width, std::uint64_t k) {
  if (width <= 1) return k == 0 ? 1 : k;
  return k / (width - 1);
}

/// Largest stack depth >= 2 with stack_static(width, depth) <= k, found by
/// scanning downward from k / (width - 1). Returns 0 if even depth 2 exceeds k.
constexpr std::uint64_t max_stack_depth(std::uint64_t width, std::uint64_t k) {
  if (width <= 1) return k < 2 ? 2 : k;
  for (std::uint64_t d = k / (width - 1); d >= 2; --d) {
    if (stack_static(width, d) <= k) return d;
  }
  return 0;
}

}  // namespace elastic::bounds
