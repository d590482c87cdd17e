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
#include "elastic/law_queue.hpp"
#include "elastic/observer.hpp"
#include "elastic/reclamation.hpp"
#include "elastic/substrate.hpp"
#include "elastic/window.hpp"

namespace elastic {

/// Tail window of the decoupled queue. Packed as
/// lo = max, hi = depth | width << 16 | next_width << 32.
struct TailWindow {
  std::uint64_t max = 0;
  std::uint16_t depth = 1;
  std::uint16_t width = 1;
  std::uint16_t next_width = 1;

  WindowView view() const { return {max, depth, width}; }
  friend bool operator==(const TailWindow&, const TailWindow&) = default;

  DoubleWord pack() const {
    return {max, std::uint64_t{depth} | (std::uint64_t{width} << 16) |
                     (std::uint64_t{next_width} << 32)};
  }
  static TailWindow unpack(DoubleWord w) {
    return {w.lo, static_cast<std::uint16_t>(w.hi), static_cast<std::uint16_t>(w.hi >> 16),
            static_cast<std::uint16_t>(w.hi >> 32)};
  }
};

/// Head window of the decoupled queue. Packed as lo = max, hi = depth | width << 16.
struct HeadWindow {
  std::uint64_t max = 0;
  std::uint16_t depth = 1;
  std::uint16_t width = 1;

  WindowView view() const { return {max, depth, width}; }
  friend bool operator==(const HeadWindow&, const HeadWindow&) = default;

  DoubleWord pack() const {
    return {max, std::uint64_t{depth} | (std::uint64_t{width} << 16)};
  }
  static HeadWindow unpack(DoubleWord w) {
    return {w.lo, static_cast<std::uint16_t>(w.hi), static_cast<std::uint16_t>(w.hi >> 16)};
  }
};

struct LpwQueueOptions {
  /// Fault injection for tests: tail shifts stop recording width changes.
  bool skip_sync_tail = false;
};

/// Elastic 2D queue with separate head and tail windows in double-width
/// words. The side structure is a queue of (row, width) records, one per
/// width change, and the head consults it so that each head window spans
/// rows of a single width. Head and tail depths are independent.
template <typename T, typename Observer = NullObserver>
class LpwQueue {
 public:
  using Lane = SubQueue<T>;
  using Node = typename Lane::Node;

  LpwQueue(std::uint32_t max_width, std::uint32_t width, std::uint32_t depth,
           Observer* obs = nullptr, LpwQueueOptions opts = {})
      : targets_(max_width, width, depth),
        head_depth_(max_width, width, depth),
        lanes_(std::make_unique<Lane[]>(targets_.max_width())),
        obs_(obs),
        opts_(opts) {
    const auto w = static_cast<std::uint16_t>(targets_.width());
    const auto d = static_cast<std::uint16_t>(targets_.depth());
    tail_.store(TailWindow{d, d, w, w}.pack());
    head_.store(HeadWindow{d, d, w}.pack());
    auto* sentinel = new WidthNode{0, w};
    lat_head_.store(sentinel, std::memory_order_relaxed);
    lat_tail_.store(sentinel, std::memory_order_relaxed);
  }

  ~LpwQueue() {
    WidthNode* n = lat_head_.load(std::memory_order_relaxed);
    while (n != nullptr) {
      WidthNode* next = n->next.load(std::memory_order_relaxed);
      delete n;
      n = next;
    }
  }

  LpwQueue(const LpwQueue&) = delete;
  LpwQueue& operator=(const LpwQueue&) = delete;

  class Handle {
   public:
    Handle(LpwQueue& q, std::uint64_t seed)
        : q_(&q), cursor_(seed), head_(q.load_head()), tail_(q.load_tail()) {}

    void enable_controller(ControllerConfig cfg = {}) {
      ctl_.emplace(cfg, q_->targets_.max_width());
    }
    void disable_controller() { ctl_.reset(); }
    const Controller* controller() const { return ctl_ ? &*ctl_ : nullptr; }

    void enqueue(T value) {
      EpochGuard guard;
      auto* node = new Node{value, 0, {}};
      for (;;) {
        const TailWindow win = tail_;
        const WindowView view = win.view();
        const auto row_for = [&](std::uint64_t top) -> std::optional<std::uint64_t> {
          if (!row_valid_insert(view, top)) return std::nullopt;
          return insert_row(view, top);
        };
        LaneScan scan(cursor_, view.width);
        std::uint32_t lane = 0;
        bool contended = false;
        while (scan.next(lane)) {
          const auto lin = [&](auto&& cas, const T& v, std::uint64_t row) {
            return detail::commit(q_->obs_, cas, [&] {
              if constexpr (Observer::enabled) {
                q_->obs_->on_insert(detail::key_of(v), lane, row, view);
                q_->maybe_audit();
              }
            });
          };
          const LaneStatus st = q_->lanes_[lane].try_enqueue(node, row_for, lin);
          if (st == LaneStatus::done) {
            feed(true);
            return;
          }
          if (st == LaneStatus::contended) {
            ++counters_.cas_failures;
            feed(false);
            cursor_.next_lane(view.width, HopReason::contention);
            contended = true;
            break;
          }
        }
        if (contended) continue;
        ++counters_.full_scans_failed;
        const TailWindow now = q_->load_tail();
        if (!(now == win)) {
          tail_ = now;
          continue;
        }
        ++counters_.shift_attempts;
        if (q_->shift_tail(win)) ++counters_.shifts_won;
        tail_ = q_->load_tail();
      }
    }

    std::optional<Taken<T>> dequeue_taken() {
      EpochGuard guard;
      for (;;) {
        const HeadWindow win = head_;
        const auto valid = [&](std::uint64_t row) { return row <= win.max; };
        LaneScan scan(cursor_, win.width);
        std::uint32_t lane = 0;
        bool contended = false;
        while (scan.next(lane)) {
          const auto lin = [&](auto&& cas, const T& v, std::uint64_t row) {
            return detail::commit(q_->obs_, cas, [&] {
              if constexpr (Observer::enabled) {
                q_->obs_->on_remove(detail::key_of(v), lane, row, q_->load_head().view());
                q_->maybe_audit();
              }
            });
          };
          T value{};
          std::uint64_t row = 0;
          const LaneStatus st = q_->lanes_[lane].try_dequeue(valid, value, row, lin);
          if (st == LaneStatus::done) {
            feed(true);
            return Taken<T>{value, lane, row};
          }
          if (st == LaneStatus::contended) {
            ++counters_.cas_failures;
            feed(false);
            cursor_.next_lane(win.width, HopReason::contention);
            contended = true;
            break;
          }
        }
        if (contended) continue;
        ++counters_.full_scans_failed;
        const HeadWindow now = q_->load_head();
        if (!(now == win)) {
          head_ = now;
          continue;
        }
        tail_ = q_->load_tail();
        if (win.max < tail_.max) {
          ++counters_.shift_attempts;
          if (q_->shift_head(win)) ++counters_.shifts_won;
          head_ = q_->load_head();
          continue;
        }
        if (q_->confirm_empty(win, tail_)) {
          ++counters_.empty_returns;
          return std::nullopt;
        }
      }
    }

    std::optional<T> dequeue() {
      auto t = dequeue_taken();
      if (!t) return std::nullopt;
      return t->value;
    }

    const OpCounters& counters() const { return counters_; }
    const LaneCursor& cursor() const { return cursor_; }

   private:
    void feed(bool success) {
      if (!ctl_) return;
      if (auto w = ctl_->update(success, tail_.max, tail_.width)) q_->targets_.set_width(*w);
    }

    LpwQueue* q_;
    LaneCursor cursor_;
    std::optional<Controller> ctl_;
    HeadWindow head_;
    TailWindow tail_;
    OpCounters counters_;
  };

  Handle handle(std::uint64_t seed) { return Handle(*this, seed); }

  std::uint32_t set_width(std::int64_t w) { return targets_.set_width(w); }
  /// Sets both the head and the tail depth target.
  std::uint32_t set_depth(std::int64_t d) {
    head_depth_.set_depth(d);
    return targets_.set_depth(d);
  }
  std::uint32_t set_tail_depth(std::int64_t d) { return targets_.set_depth(d); }
  std::uint32_t set_head_depth(std::int64_t d) { return head_depth_.set_depth(d); }
  Targets targets() const { return {targets_.width(), targets_.depth()}; }
  std::uint32_t head_depth_target() const { return head_depth_.depth(); }
  RelaxationTarget& relaxation() { return targets_; }
  std::uint32_t max_width() const { return targets_.max_width(); }

  HeadWindow load_head() const { return HeadWindow::unpack(head_.load()); }
  TailWindow load_tail() const { return TailWindow::unpack(tail_.load()); }
  WindowView head_window() const { return load_head().view(); }
  WindowView tail_window() const { return load_tail().view(); }

  QueueStats stats() const {
    EpochGuard guard;
    QueueStats s;
    s.head = head_window();
    s.tail = tail_window();
    s.bound = bounds::queue_window(s.head.width, s.head.depth);
    WidthNode* n = lat_head_.load(std::memory_order_acquire)->next.load(std::memory_order_acquire);
    for (; n != nullptr; n = n->next.load(std::memory_order_acquire)) ++s.lateral_length;
    return s;
  }

  /// Width records past the sentinel, oldest first. Needs quiescence.
  std::vector<LateralEntry> lateral() const {
    std::vector<LateralEntry> out;
    WidthNode* n = lat_head_.load(std::memory_order_acquire)->next.load(std::memory_order_acquire);
    for (; n != nullptr; n = n->next.load(std::memory_order_acquire)) {
      out.push_back({static_cast<std::uint32_t>(n->row), n->width});
    }
    return out;
  }

  std::vector<LiveItem> live_items() const {
    std::vector<LiveItem> out;
    for (std::uint32_t j = 0; j < targets_.max_width(); ++j) {
      lanes_[j].for_each([&](const T& v, std::uint64_t row) {
        out.push_back({detail::key_of(v), j, row});
      });
    }
    return out;
  }

  std::vector<std::vector<std::pair<T, std::uint64_t>>> lane_contents() const {
    std::vector<std::vector<std::pair<T, std::uint64_t>>> out(targets_.max_width());
    for (std::uint32_t j = 0; j < targets_.max_width(); ++j) {
      lanes_[j].for_each([&](const T& v, std::uint64_t row) { out[j].emplace_back(v, row); });
    }
    return out;
  }

  /// Single-step entry points for scripted scenarios. Both return whether
  /// this call installed the new window.
  bool shift_tail(const TailWindow& old_window) {
    EpochGuard guard;
    if (old_window.width != old_window.next_width && !opts_.skip_sync_tail) sync_tail(old_window);
    const auto depth = static_cast<std::uint16_t>(targets_.depth());
    const TailWindow fresh{old_window.max + depth, depth, old_window.next_width,
                           static_cast<std::uint16_t>(targets_.width())};
    DoubleWord expected = old_window.pack();
    return detail::commit(
        obs_, [&] { return tail_.compare_exchange(expected, fresh.pack()); },
        [&] {
          if constexpr (Observer::enabled) obs_->on_tail_shift(old_window.view(), fresh.view());
        });
  }

  bool shift_head(const HeadWindow& old_window) {
    EpochGuard guard;
    // The tail is read before the side structure: any width record at or
    // below this tail max is already linked when the walk below starts.
    const TailWindow tail = load_tail();
    if (old_window.max >= tail.max) return false;
    for (;;) {
      WidthNode* h = lat_head_.load(std::memory_order_acquire);
      WidthNode* n = h->next.load(std::memory_order_acquire);
      if (n == nullptr || n->row > old_window.max) break;
      WidthNode* t = lat_tail_.load(std::memory_order_acquire);
      if (h == t) {
        lat_tail_.compare_exchange_strong(t, n, std::memory_order_acq_rel,
                                          std::memory_order_relaxed);
      }
      if (lat_head_.compare_exchange_strong(h, n, std::memory_order_acq_rel,
                                            std::memory_order_acquire)) {
        retire(h);
      }
    }
    std::uint64_t new_max = std::min<std::uint64_t>(tail.max, old_window.max + head_depth_.depth());
    std::uint16_t width = old_window.width;
    WidthNode* first =
        lat_head_.load(std::memory_order_acquire)->next.load(std::memory_order_acquire);
    if (first != nullptr && first->row == old_window.max + 1) {
      width = static_cast<std::uint16_t>(first->width);
      first = first->next.load(std::memory_order_acquire);
    }
    if (first != nullptr && first->row <= new_max) new_max = first->row - 1;
    if (new_max <= old_window.max) return false;
    const HeadWindow fresh{new_max, static_cast<std::uint16_t>(new_max - old_window.max), width};
    DoubleWord expected = old_window.pack();
    return detail::commit(
        obs_, [&] { return head_.compare_exchange(expected, fresh.pack()); },
        [&] {
          if constexpr (Observer::enabled) {
            obs_->on_head_shift(old_window.view(), fresh.view(), load_tail().max);
          }
        });
  }

  /// Records the width change carried by `window` unless it is already recorded.
  void sync_tail(const TailWindow& window) {
    EpochGuard guard;
    for (;;) {
      WidthNode* t = lateral_tail();
      if (t->row > window.max) return;
      auto* fresh = new WidthNode{window.max + 1, window.next_width};
      WidthNode* expected = nullptr;
      const bool ok = detail::commit(
          obs_,
          [&] {
            return t->next.compare_exchange_strong(expected, fresh, std::memory_order_acq_rel,
                                                   std::memory_order_acquire);
          },
          [&] {
            if constexpr (Observer::enabled) obs_->on_lateral_append(fresh->row, load_head().max);
          });
      if (ok) {
        lat_tail_.compare_exchange_strong(t, fresh, std::memory_order_acq_rel,
                                          std::memory_order_relaxed);
        return;
      }
      delete fresh;
    }
  }

 private:
  struct WidthNode {
    std::uint64_t row;
    std::uint32_t width;
    std::atomic<WidthNode*> next{nullptr};
  };

  WidthNode* lateral_tail() const {
    for (;;) {
      WidthNode* t = lat_tail_.load(std::memory_order_acquire);
      WidthNode* n = t->next.load(std::memory_order_acquire);
      if (n == nullptr) return t;
      lat_tail_.compare_exchange_weak(t, n, std::memory_order_acq_rel, std::memory_order_relaxed);
    }
  }

  bool confirm_empty(const HeadWindow& head, const TailWindow& tail) {
    std::vector<typename Lane::Snapshot> first(head.width);
    for (std::uint32_t j = 0; j < head.width; ++j) {
      first[j] = lanes_[j].snapshot();
      if (first[j].next != nullptr) return false;
    }
    const auto second = [&] {
      if (!(load_head() == head) || !(load_tail() == tail)) return false;
      for (std::uint32_t j = 0; j < head.width; ++j) {
        if (!(lanes_[j].snapshot() == first[j])) return false;
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

  RelaxationTarget targets_;     // width and tail depth
  RelaxationTarget head_depth_;  // depth only
  std::unique_ptr<Lane[]> lanes_;
  Observer* obs_;
  LpwQueueOptions opts_;
  alignas(kCacheLine) AtomicDoubleWord tail_;
  alignas(kCacheLine) AtomicDoubleWord head_;
  alignas(kCacheLine) std::atomic<WidthNode*> lat_head_;
  alignas(kCacheLine) mutable std::atomic<WidthNode*> lat_tail_;
};

}  // namespace elastic
