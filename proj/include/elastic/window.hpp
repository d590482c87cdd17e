#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <new>
#include <random>

namespace elastic {

inline constexpr std::size_t kCacheLine = 64;
inline constexpr std::uint32_t kDefaultMaxWidth = 256;
/// Width and depth travel in 16-bit window fields.
inline constexpr std::uint32_t kMaxWindowField = 0xFFFF;

/// Shared, externally writable relaxation knobs. Values are clamped at
/// write time so window shifts can use them unchecked.
class RelaxationTarget {
 public:
  RelaxationTarget(std::uint32_t max_width, std::uint32_t width, std::uint32_t depth,
                   std::uint32_t min_depth = 1)
      : max_width_(std::clamp<std::uint32_t>(max_width, 1, kMaxWindowField)),
        min_depth_(min_depth) {
    set_width(width);
    set_depth(depth);
  }

  std::uint32_t set_width(std::int64_t w) {
    const auto v = static_cast<std::uint32_t>(std::clamp<std::int64_t>(w, 1, max_width_));
    width_.store(v, std::memory_order_relaxed);
    return v;
  }
  std::uint32_t set_depth(std::int64_t d) {
    const auto v =
        static_cast<std::uint32_t>(std::clamp<std::int64_t>(d, min_depth_, kMaxWindowField));
    depth_.store(v, std::memory_order_relaxed);
    return v;
  }

  std::uint32_t width() const { return width_.load(std::memory_order_relaxed); }
  std::uint32_t depth() const { return depth_.load(std::memory_order_relaxed); }
  std::uint32_t max_width() const { return max_width_; }
  std::uint32_t min_depth() const { return min_depth_; }

 private:
  std::uint32_t max_width_;
  std::uint32_t min_depth_;
  alignas(kCacheLine) std::atomic<std::uint32_t> width_{1};
  alignas(kCacheLine) std::atomic<std::uint32_t> depth_{1};
};

struct Targets {
  std::uint32_t width;
  std::uint32_t depth;
};

/// Plain (max, depth, width) view of any window.
struct WindowView {
  std::uint64_t max = 0;
  std::uint32_t depth = 1;
  std::uint32_t width = 1;

  constexpr std::uint64_t min() const { return max >= depth ? max - depth : 0; }
  friend bool operator==(const WindowView&, const WindowView&) = default;
};

/// A lane whose top sits at `lane_row` can take one more item at a row <= max.
constexpr bool row_valid_insert(const WindowView& view, std::uint64_t lane_row) {
  return lane_row < view.max;
}

/// A lane whose top sits at `lane_row` holds an item above the window floor.
constexpr bool row_valid_delete(const WindowView& view, std::uint64_t lane_row) {
  return lane_row > view.min();
}

/// Row for the next insert into a lane whose top is `lane_row`; gaps are
/// created when the lane lags behind the window floor.
constexpr std::uint64_t insert_row(const WindowView& view, std::uint64_t lane_row) {
  return std::max(view.min(), lane_row) + 1;
}

enum class HopReason { contention, invalid_row };

/// Thread-local lane selection state.
class LaneCursor {
 public:
  explicit LaneCursor(std::uint64_t seed = std::random_device{}()) : rng_(seed) {}

  std::uint32_t lane() const { return lane_; }

  /// Keeps the current lane if it is inside `width`, otherwise picks one.
  std::uint32_t settle(std::uint32_t width) {
    if (lane_ >= width) lane_ = uniform(width);
    return lane_;
  }

  /// Moves to a uniformly random lane other than the current one.
  std::uint32_t next_lane(std::uint32_t width, HopReason reason) {
    ++(reason == HopReason::contention ? hops_contention_ : hops_invalid_);
    if (width <= 1) {
      lane_ = 0;
    } else if (lane_ >= width) {
      lane_ = uniform(width);
    } else {
      const std::uint32_t r = uniform(width - 1);
      lane_ = r >= lane_ ? r + 1 : r;
    }
    return lane_;
  }

  void set_lane(std::uint32_t lane) { lane_ = lane; }

  std::uint32_t uniform(std::uint32_t n) {
    return std::uniform_int_distribution<std::uint32_t>(0, n - 1)(rng_);
  }

  std::uint64_t hops_contention() const { return hops_contention_; }
  std::uint64_t hops_invalid() const { return hops_invalid_; }

 private:
  std::mt19937_64 rng_;
  std::uint32_t lane_ = 0;
  std::uint64_t hops_contention_ = 0;
  std::uint64_t hops_invalid_ = 0;
};

/// Visits every lane in [0, width) once, starting at the cursor lane and
/// continuing from a random other lane.
class LaneScan {
 public:
  LaneScan(LaneCursor& cursor, std::uint32_t width)
      : cursor_(cursor), width_(width), first_(cursor.settle(width)) {}

  std::uint32_t current() const { return current_; }
  bool started_fresh() const { return visited_ == 1; }

  /// Lane to try next, or false when the scan is complete.
  bool next(std::uint32_t& lane) {
    if (visited_ == 0) {
      current_ = first_;
    } else if (visited_ >= width_) {
      return false;
    } else if (visited_ == 1) {
      offset_ = cursor_.next_lane(width_, HopReason::invalid_row);
      current_ = offset_;
    } else {
      current_ = (current_ + 1) % width_;
      if (current_ == first_) current_ = (current_ + 1) % width_;
    }
    ++visited_;
    lane = current_;
    return true;
  }

 private:
  LaneCursor& cursor_;
  std::uint32_t width_;
  std::uint32_t first_;
  std::uint32_t current_ = 0;
  std::uint32_t offset_ = 0;
  std::uint32_t visited_ = 0;
};

/// Per-handle operation counters.
struct OpCounters {
  std::uint64_t full_scans_failed = 0;
  std::uint64_t shift_attempts = 0;
  std::uint64_t shifts_won = 0;
  std::uint64_t cas_failures = 0;
  std::uint64_t empty_returns = 0;
};

}  // namespace elastic
