#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "elastic/atomic128.hpp"
#include "elastic/bounds.hpp"
#include "elastic/commit.hpp"
#include "elastic/controller.hpp"
#include "elastic/observer.hpp"
#include "elastic/reclamation.hpp"
#include "elastic/substrate.hpp"
#include "elastic/window.hpp"

namespace elastic {

inline constexpr std::uint32_t kStackVersionMask = 0x7FFFFFFFu;
/// A stack window needs a shift of at least one row.
inline constexpr std::uint32_t kMinStackDepth = 2;

/// lo = max | depth << 32 | push_width << 48
/// hi = pop_width | last_push_width << 16 | last_shift << 32 | version << 33
inline DoubleWord pack_stack_window(const StackWindow& w) {
  return {std::uint64_t{w.max} | (std::uint64_t{w.depth} << 32) |
              (std::uint64_t{w.push_width} << 48),
          std::uint64_t{w.pop_width} | (std::uint64_t{w.last_push_width} << 16) |
              (std::uint64_t{static_cast<std::uint8_t>(w.last_shift)} << 32) |
              (std::uint64_t{w.version & kStackVersionMask} << 33)};
}

inline StackWindow unpack_stack_window(DoubleWord d) {
  StackWindow w;
  w.max = static_cast<std::uint32_t>(d.lo);
  w.depth = static_cast<std::uint16_t>(d.lo >> 32);
  w.push_width = static_cast<std::uint16_t>(d.lo >> 48);
  w.pop_width = static_cast<std::uint16_t>(d.hi);
  w.last_push_width = static_cast<std::uint16_t>(d.hi >> 16);
  w.last_shift = static_cast<ShiftDir>((d.hi >> 32) & 1);
  w.version = static_cast<std::uint32_t>(d.hi >> 33);
  return w;
}

/// Elastic 2D stack. One double-width word holds the window, which moves
/// up or down by half its depth. Width changes are recorded in a stack of
/// immutable (row, width) records that is brought up to date before every
/// shift, so pops always know how many lanes the rows of their window use.
template <typename T, typename Observer = NullObserver>
class LpwStack {
 public:
  using Lane = SubStack<T>;
  using Node = typename Lane::Node;

  LpwStack(std::uint32_t max_width, std::uint32_t width, std::uint32_t depth,
           Observer* obs = nullptr)
      : targets_(max_width, width, depth, kMinStackDepth),
        lanes_(std::make_unique<Lane[]>(targets_.max_width())),
        obs_(obs) {
    StackWindow w;
    w.depth = static_cast<std::uint16_t>(targets_.depth());
    w.max = w.depth;
    w.push_width = w.pop_width = w.last_push_width = static_cast<std::uint16_t>(targets_.width());
    window_.store(pack_stack_window(w));
    lateral_.store({0, 0});
    if constexpr (Observer::enabled) obs_->on_start(w);
  }

  ~LpwStack() {
    LNode* n = reinterpret_cast<LNode*>(lateral_.load().lo);
    while (n != nullptr) {
      LNode* next = n->next;
      delete n;
      n = next;
    }
  }

  LpwStack(const LpwStack&) = delete;
  LpwStack& operator=(const LpwStack&) = delete;

  class Handle {
   public:
    Handle(LpwStack& s, std::uint64_t seed) : s_(&s), cursor_(seed) {}

    void enable_controller(ControllerConfig cfg = {}) {
      ctl_.emplace(cfg, s_->targets_.max_width());
    }
    void disable_controller() { ctl_.reset(); }
    const Controller* controller() const { return ctl_ ? &*ctl_ : nullptr; }

    void push(T value) {
      EpochGuard guard;
      auto* node = new Node{value, 0, nullptr};
      win_ = s_->window();
      for (;;) {
        const StackWindow win = win_;
        const auto row_for = [&](std::uint32_t top) -> std::optional<std::uint32_t> {
          if (top >= win.max) return std::nullopt;
          return std::max(win.min(), top) + 1;
        };
        LaneScan scan(cursor_, win.push_width);
        std::uint32_t lane = 0;
        bool contended = false;
        bool moved = false;
        while (scan.next(lane)) {
          const auto lin = [&](auto&& cas, const T& v, std::uint32_t row) {
            return detail::commit(s_->obs_, s_->guarded(win, moved, cas), [&] {
              if constexpr (Observer::enabled) {
                s_->obs_->on_push(detail::key_of(v), lane, row, s_->window());
                s_->maybe_audit();
              }
            });
          };
          const LaneStatus st = s_->lanes_[lane].try_push(node, row_for, lin);
          if (st == LaneStatus::done) {
            feed(true);
            return;
          }
          if (st == LaneStatus::contended) {
            if (moved) {
              win_ = s_->window();
              contended = true;
              break;
            }
            ++counters_.cas_failures;
            feed(false);
            cursor_.next_lane(win.push_width, HopReason::contention);
            contended = true;
            break;
          }
        }
        if (contended) continue;
        ++counters_.full_scans_failed;
        const StackWindow now = s_->window();
        if (!(now == win)) {
          win_ = now;
          continue;
        }
        ++counters_.shift_attempts;
        if (s_->shift(ShiftDir::up, win)) ++counters_.shifts_won;
        win_ = s_->window();
      }
    }

    std::optional<Taken<T>> pop_taken() {
      EpochGuard guard;
      win_ = s_->window();
      for (;;) {
        const StackWindow win = win_;
        const std::uint32_t floor = win.min();
        const auto valid = [&](std::uint32_t top) { return top > floor; };
        LaneScan scan(cursor_, win.pop_width);
        std::uint32_t lane = 0;
        bool contended = false;
        bool moved = false;
        while (scan.next(lane)) {
          const auto lin = [&](auto&& cas, const T& v, std::uint32_t row) {
            return detail::commit(s_->obs_, s_->guarded(win, moved, cas), [&] {
              if constexpr (Observer::enabled) {
                s_->obs_->on_pop(detail::key_of(v), lane, row, s_->window());
                s_->maybe_audit();
              }
            });
          };
          T value{};
          std::uint32_t row = 0;
          const LaneStatus st = s_->lanes_[lane].try_pop(valid, value, row, lin);
          if (st == LaneStatus::done) {
            feed(true);
            return Taken<T>{value, lane, row};
          }
          if (st == LaneStatus::contended) {
            if (moved) {
              win_ = s_->window();
              contended = true;
              break;
            }
            ++counters_.cas_failures;
            feed(false);
            cursor_.next_lane(win.pop_width, HopReason::contention);
            contended = true;
            break;
          }
        }
        if (contended) continue;
        ++counters_.full_scans_failed;
        const StackWindow now = s_->window();
        if (!(now == win)) {
          win_ = now;
          continue;
        }
        if (floor == 0 && s_->confirm_empty(win)) {
          ++counters_.empty_returns;
          return std::nullopt;
        }
        ++counters_.shift_attempts;
        if (s_->shift(ShiftDir::down, win)) ++counters_.shifts_won;
        win_ = s_->window();
      }
    }

    std::optional<T> pop() {
      auto t = pop_taken();
      if (!t) return std::nullopt;
      return t->value;
    }

    const OpCounters& counters() const { return counters_; }
    const LaneCursor& cursor() const { return cursor_; }

   private:
    void feed(bool success) {
      if (!ctl_) return;
      if (auto w = ctl_->update(success, win_.version, win_.push_width)) {
        s_->targets_.set_width(*w);
      }
    }

    LpwStack* s_;
    LaneCursor cursor_;
    std::optional<Controller> ctl_;
    StackWindow win_;
    OpCounters counters_;
  };

  Handle handle(std::uint64_t seed) { return Handle(*this, seed); }

  std::uint32_t set_width(std::int64_t w) { return targets_.set_width(w); }
  std::uint32_t set_depth(std::int64_t d) { return targets_.set_depth(d); }
  Targets targets() const { return {targets_.width(), targets_.depth()}; }
  RelaxationTarget& relaxation() { return targets_; }
  std::uint32_t max_width() const { return targets_.max_width(); }

  StackWindow window() const { return unpack_stack_window(window_.load()); }

  /// Side structure records, top first.
  std::vector<LateralEntry> lateral() const {
    EpochGuard guard;
    return lateral_entries(reinterpret_cast<LNode*>(lateral_.load().lo));
  }
  std::uint64_t lateral_version() const { return lateral_.load().hi; }

  /// Largest recorded width over rows above `row`, 0 if none.
  std::uint32_t lateral_width(std::uint32_t row) const {
    EpochGuard guard;
    std::uint32_t w = 0;
    for (LNode* n = reinterpret_cast<LNode*>(lateral_.load().lo); n != nullptr && n->row > row;
         n = n->next) {
      w = std::max(w, n->width);
    }
    return w;
  }

  /// Top row of each lane in [0, max_width).
  std::vector<std::uint32_t> lane_rows() const {
    std::vector<std::uint32_t> out(targets_.max_width());
    for (std::uint32_t j = 0; j < targets_.max_width(); ++j) out[j] = lanes_[j].top_row();
    return out;
  }

  std::vector<LiveItem> live_items() const {
    std::vector<LiveItem> out;
    for (std::uint32_t j = 0; j < targets_.max_width(); ++j) {
      lanes_[j].for_each([&](const T& v, std::uint32_t row) {
        out.push_back({detail::key_of(v), j, row});
      });
    }
    return out;
  }

  /// Items per lane, top first. Needs quiescence.
  std::vector<std::vector<std::pair<T, std::uint32_t>>> lane_contents() const {
    std::vector<std::vector<std::pair<T, std::uint32_t>>> out(targets_.max_width());
    for (std::uint32_t j = 0; j < targets_.max_width(); ++j) {
      lanes_[j].for_each([&](const T& v, std::uint32_t row) { out[j].emplace_back(v, row); });
    }
    return out;
  }

  /// Replaces the window and side structure. Needs quiescence; meant for
  /// scripted scenarios.
  void install(const StackWindow& w, const std::vector<LateralEntry>& lateral,
               std::uint32_t lateral_version = 0) {
    LNode* top = nullptr;
    for (auto it = lateral.rbegin(); it != lateral.rend(); ++it) {
      top = new LNode{it->row, it->width, top};
    }
    LNode* old = reinterpret_cast<LNode*>(lateral_.load().lo);
    while (old != nullptr) {
      LNode* next = old->next;
      delete old;
      old = next;
    }
    lateral_.store({reinterpret_cast<std::uint64_t>(top), lateral_version});
    window_.store(pack_stack_window(w));
  }

  /// Pushes `value` at an explicit row of `lane`, bypassing the window.
  void place(std::uint32_t lane, T value, std::uint32_t row) { lanes_[lane].push(value, row); }

  /// Single-step entry points for scripted scenarios.
  bool shift(ShiftDir dir, const StackWindow& old_window) {
    EpochGuard guard;
    stabilize(old_window);
    StackWindow fresh;
    fresh.depth = static_cast<std::uint16_t>(targets_.depth());
    fresh.push_width = static_cast<std::uint16_t>(targets_.width());
    fresh.last_push_width = old_window.push_width;
    fresh.last_shift = dir;
    fresh.version = (old_window.version + 1) & kStackVersionMask;
    const std::uint32_t base = dir == ShiftDir::up ? old_window.max : old_window.min();
    fresh.max = std::max<std::uint32_t>(base + fresh.depth / 2, fresh.depth);
    // The record for a narrowing only appears when this window is
    // stabilized, so pops here must still reach the old push width.
    fresh.pop_width = static_cast<std::uint16_t>(std::max<std::uint32_t>(
        {fresh.push_width, fresh.last_push_width, lateral_width(fresh.min())}));
    DoubleWord expected = pack_stack_window(old_window);
    return detail::commit(
        obs_, [&] { return window_.compare_exchange(expected, pack_stack_window(fresh)); },
        [&] {
          if constexpr (Observer::enabled) {
            obs_->on_shift(old_window, fresh,
                           lateral_entries(reinterpret_cast<LNode*>(lateral_.load().lo)),
                           lane_rows());
          }
        });
  }

  /// Brings the side structure up to date for `win`. At most one call per
  /// window version publishes; later calls for that version return at once.
  void stabilize(const StackWindow& win) {
    EpochGuard guard;
    DoubleWord read = lateral_.load();
    if (!(window() == win) || read.hi == win.version) return;
    LNode* top = reinterpret_cast<LNode*>(read.lo);
    std::vector<LNode*> fresh;
    std::vector<LNode*> replaced;
    LNode* cand = update(top, win, fresh, replaced);

    std::uint32_t upper = win.max;
    for (std::uint32_t j = win.push_width; j < win.last_push_width; ++j) {
      upper = std::max(upper, lanes_[j].top_row());
    }
    const std::uint32_t cand_row = cand != nullptr ? cand->row : 0;
    if (win.push_width > win.last_push_width && cand_row < win.min()) {
      cand = new LNode{win.min(), win.last_push_width, cand};
      fresh.push_back(cand);
    } else if (win.push_width < win.last_push_width && cand_row < upper) {
      cand = new LNode{upper, win.last_push_width, cand};
      fresh.push_back(cand);
    }
    // The version is stamped even when the chain is unchanged so that a
    // slower helper for this window cannot publish afterwards.
    if (lateral_.compare_exchange(read, {reinterpret_cast<std::uint64_t>(cand), win.version})) {
      for (LNode* n : replaced) retire(n);
    } else {
      for (LNode* n : fresh) delete n;
    }
  }

 private:
  struct LNode {
    std::uint32_t row;
    std::uint32_t width;
    LNode* next;
  };

  static std::vector<LateralEntry> lateral_entries(LNode* top) {
    std::vector<LateralEntry> out;
    for (LNode* n = top; n != nullptr; n = n->next) out.push_back({n->row, n->width});
    return out;
  }

  /// Wraps a lane exchange so it only runs while the window is still `win`.
  template <typename Cas>
  auto guarded(const StackWindow& win, bool& moved, Cas& cas) {
    return [this, &win, &moved, &cas] {
      if (!(window() == win)) {
        moved = true;
        return false;
      }
      return cas();
    };
  }

  /// Lowers records above the window floor, cloning every record that
  /// changes. Records whose range collapses onto the one below are dropped.
  static LNode* update(LNode* node, const StackWindow& win, std::vector<LNode*>& fresh,
                       std::vector<LNode*>& replaced) {
    if (node == nullptr || node->row <= win.min()) return node;
    std::uint32_t row = node->row;
    if (node->width <= win.push_width) {
      row = win.min();
    } else if (node->width > win.last_push_width && win.last_shift == ShiftDir::down) {
      row = std::min(row, win.max - win.depth / 2);
    }
    LNode* next = update(node->next, win, fresh, replaced);
    const std::uint32_t next_row = next != nullptr ? next->row : 0;
    if (row <= next_row) {
      replaced.push_back(node);
      return next;
    }
    if (row == node->row && next == node->next) return node;
    auto* clone = new LNode{row, node->width, next};
    fresh.push_back(clone);
    replaced.push_back(node);
    return clone;
  }

  /// Two identical collects of empty lanes under an unchanged window.
  bool confirm_empty(const StackWindow& win) {
    const std::uint32_t span = win.pop_width;
    std::vector<typename Lane::Descriptor> first(span);
    for (std::uint32_t j = 0; j < span; ++j) {
      first[j] = lanes_[j].load();
      if (first[j].top != nullptr) return false;
    }
    const auto second = [&] {
      if (!(window() == win)) return false;
      for (std::uint32_t j = 0; j < span; ++j) {
        if (!(lanes_[j].load() == first[j])) return false;
      }
      return true;
    };
    if constexpr (Observer::enabled) {
      auto lock = obs_->serialize();
      if (!second()) return false;
      obs_->on_empty();
      return true;
    } else {
      return second();
    }
  }

  void maybe_audit() {
    if constexpr (Observer::enabled) {
      if (obs_->audit_due()) obs_->audit(live_items());
    }
  }

  RelaxationTarget targets_;
  std::unique_ptr<Lane[]> lanes_;
  Observer* obs_;
  alignas(kCacheLine) AtomicDoubleWord window_;
  alignas(kCacheLine) AtomicDoubleWord lateral_;
};

}  // namespace elastic
