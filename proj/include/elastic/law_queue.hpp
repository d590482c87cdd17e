#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "elastic/bounds.hpp"
#include "elastic/commit.hpp"
#include "elastic/controller.hpp"
#include "elastic/observer.hpp"
#include "elastic/reclamation.hpp"
#include "elastic/substrate.hpp"
#include "elastic/window.hpp"

namespace elastic {

struct QueueStats {
  WindowView head;
  WindowView tail;
  std::uint64_t bound = 0;        // bound of the current head window
  std::uint64_t lateral_length = 0;
};

/// Elastic 2D queue whose side structure is a queue of windows: the oldest
/// record is the head window and the newest the tail window. Every tail
/// shift appends a window built from the current targets; every head shift
/// drops the oldest record. Rows of successive windows are contiguous, so
/// a window fully describes which lanes its rows may occupy.
template <typename T, typename Observer = NullObserver>
class LawQueue {
 public:
  using Lane = SubQueue<T>;
  using Node = typename Lane::Node;

  LawQueue(std::uint32_t max_width, std::uint32_t width, std::uint32_t depth,
           Observer* obs = nullptr)
      : targets_(max_width, width, depth),
        lanes_(std::make_unique<Lane[]>(targets_.max_width())),
        obs_(obs) {
    auto* w = new Window{targets_.depth(), targets_.depth(), targets_.width()};
    head_.store(w, std::memory_order_relaxed);
    tail_.store(w, std::memory_order_relaxed);
  }

  ~LawQueue() {
    Window* w = head_.load(std::memory_order_relaxed);
    while (w != nullptr) {
      Window* next = w->next.load(std::memory_order_relaxed);
      delete w;
      w = next;
    }
  }

  LawQueue(const LawQueue&) = delete;
  LawQueue& operator=(const LawQueue&) = delete;

  /// Per-thread access point. Not shareable between threads.
  class Handle {
   public:
    Handle(LawQueue& q, std::uint64_t seed) : q_(&q), cursor_(seed) {
      EpochGuard guard;
      head_ = q.head_.load(std::memory_order_acquire)->view();
      tail_ = q.lateral_tail()->view();
    }

    void enable_controller(ControllerConfig cfg = {}) {
      ctl_.emplace(cfg, q_->targets_.max_width());
    }
    void disable_controller() { ctl_.reset(); }
    const Controller* controller() const { return ctl_ ? &*ctl_ : nullptr; }

    void enqueue(T value) {
      EpochGuard guard;
      auto* node = new Node{value, 0, {}};
      for (;;) {
        const WindowView win = tail_;
        const auto row_for = [&](std::uint64_t top) -> std::optional<std::uint64_t> {
          if (!row_valid_insert(win, top)) return std::nullopt;
          return insert_row(win, top);
        };
        LaneScan scan(cursor_, win.width);
        std::uint32_t lane = 0;
        bool contended = false;
        while (scan.next(lane)) {
          const auto lin = [&](auto&& cas, const T& v, std::uint64_t row) {
            return detail::commit(q_->obs_, cas, [&] {
              if constexpr (Observer::enabled) {
                q_->obs_->on_insert(detail::key_of(v), lane, row, win);
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
            cursor_.next_lane(win.width, HopReason::contention);
            contended = true;
            break;
          }
        }
        if (contended) continue;
        ++counters_.full_scans_failed;
        Window* t = q_->lateral_tail();
        if (t->max != win.max) {
          tail_ = t->view();
          continue;
        }
        ++counters_.shift_attempts;
        if (q_->shift_tail(t)) ++counters_.shifts_won;
        tail_ = q_->lateral_tail()->view();
      }
    }

    std::optional<Taken<T>> dequeue_taken() {
      EpochGuard guard;
      for (;;) {
        const WindowView win = head_;
        const auto valid = [&](std::uint64_t row) { return row <= win.max; };
        LaneScan scan(cursor_, win.width);
        std::uint32_t lane = 0;
        bool contended = false;
        while (scan.next(lane)) {
          const auto lin = [&](auto&& cas, const T& v, std::uint64_t row) {
            return detail::commit(q_->obs_, cas, [&] {
              if constexpr (Observer::enabled) {
                q_->obs_->on_remove(detail::key_of(v), lane, row,
                                    q_->head_.load(std::memory_order_acquire)->view());
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
        Window* h = q_->head_.load(std::memory_order_acquire);
        if (h->max != win.max) {
          head_ = h->view();
          continue;
        }
        Window* t = q_->lateral_tail();
        tail_ = t->view();
        if (h != t) {
          ++counters_.shift_attempts;
          if (q_->shift_head(h)) ++counters_.shifts_won;
          head_ = q_->head_.load(std::memory_order_acquire)->view();
          continue;
        }
        if (q_->confirm_empty(h, win.width)) {
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

    LawQueue* q_;
    LaneCursor cursor_;
    std::optional<Controller> ctl_;
    WindowView head_;
    WindowView tail_;
    OpCounters counters_;
  };

  Handle handle(std::uint64_t seed) { return Handle(*this, seed); }

  std::uint32_t set_width(std::int64_t w) { return targets_.set_width(w); }
  std::uint32_t set_depth(std::int64_t d) { return targets_.set_depth(d); }
  Targets targets() const { return {targets_.width(), targets_.depth()}; }
  RelaxationTarget& relaxation() { return targets_; }
  std::uint32_t max_width() const { return targets_.max_width(); }

  WindowView head_window() const {
    EpochGuard guard;
    return head_.load(std::memory_order_acquire)->view();
  }
  WindowView tail_window() const {
    EpochGuard guard;
    return lateral_tail()->view();
  }

  QueueStats stats() const {
    EpochGuard guard;
    QueueStats s;
    Window* h = head_.load(std::memory_order_acquire);
    s.head = h->view();
    s.tail = lateral_tail()->view();
    s.bound = bounds::queue_window(s.head.width, s.head.depth);
    for (Window* w = h; w != nullptr; w = w->next.load(std::memory_order_acquire)) {
      ++s.lateral_length;
    }
    return s;
  }

  /// Window records from head to tail. Needs quiescence.
  std::vector<WindowView> lateral() const {
    std::vector<WindowView> out;
    for (Window* w = head_.load(std::memory_order_acquire); w != nullptr;
         w = w->next.load(std::memory_order_acquire)) {
      out.push_back(w->view());
    }
    return out;
  }

  /// All resident items. Needs quiescence or the observer lock.
  std::vector<LiveItem> live_items() const {
    std::vector<LiveItem> out;
    for (std::uint32_t j = 0; j < targets_.max_width(); ++j) {
      lanes_[j].for_each([&](const T& v, std::uint64_t row) {
        out.push_back({detail::key_of(v), j, row});
      });
    }
    return out;
  }

  /// Items per lane, oldest first. Needs quiescence.
  std::vector<std::vector<std::pair<T, std::uint64_t>>> lane_contents() const {
    std::vector<std::vector<std::pair<T, std::uint64_t>>> out(targets_.max_width());
    for (std::uint32_t j = 0; j < targets_.max_width(); ++j) {
      lanes_[j].for_each([&](const T& v, std::uint64_t row) { out[j].emplace_back(v, row); });
    }
    return out;
  }

 private:
  struct Window {
    std::uint64_t max;
    std::uint32_t depth;
    std::uint32_t width;
    std::atomic<Window*> next{nullptr};

    WindowView view() const { return {max, depth, width}; }
  };

  Window* lateral_tail() const {
    for (;;) {
      Window* t = tail_.load(std::memory_order_acquire);
      Window* n = t->next.load(std::memory_order_acquire);
      if (n == nullptr) return t;
      tail_.compare_exchange_weak(t, n, std::memory_order_acq_rel, std::memory_order_relaxed);
    }
  }

  bool shift_tail(Window* old_window) {
    const std::uint32_t width = targets_.width();
    const std::uint32_t depth = targets_.depth();
    auto* fresh = new Window{old_window->max + depth, depth, width};
    Window* expected = nullptr;
    const bool ok = detail::commit(
        obs_,
        [&] {
          return old_window->next.compare_exchange_strong(expected, fresh, std::memory_order_acq_rel,
                                                          std::memory_order_acquire);
        },
        [&] {
          if constexpr (Observer::enabled) obs_->on_tail_shift(old_window->view(), fresh->view());
        });
    if (!ok) delete fresh;
    Window* t = old_window;
    tail_.compare_exchange_strong(t, old_window->next.load(std::memory_order_acquire),
                                  std::memory_order_acq_rel, std::memory_order_relaxed);
    return ok;
  }

  bool shift_head(Window* h) {
    Window* next = h->next.load(std::memory_order_acquire);
    if (next == nullptr) return false;
    Window* expected = h;
    const bool ok = detail::commit(
        obs_,
        [&] {
          return head_.compare_exchange_strong(expected, next, std::memory_order_acq_rel,
                                               std::memory_order_acquire);
        },
        [&] {
          if constexpr (Observer::enabled) {
            obs_->on_head_shift(h->view(), next->view(), lateral_tail()->max);
          }
        });
    if (ok) retire(h);
    return ok;
  }

  /// Two identical collects of empty lanes with `h` still the only window.
  bool confirm_empty(Window* h, std::uint32_t width) {
    std::vector<typename Lane::Snapshot> first(width);
    for (std::uint32_t j = 0; j < width; ++j) {
      first[j] = lanes_[j].snapshot();
      if (first[j].next != nullptr) return false;
    }
    const auto second = [&] {
      if (head_.load(std::memory_order_acquire) != h || lateral_tail() != h) return false;
      for (std::uint32_t j = 0; j < width; ++j) {
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

  RelaxationTarget targets_;
  std::unique_ptr<Lane[]> lanes_;
  Observer* obs_;
  alignas(kCacheLine) std::atomic<Window*> head_;
  alignas(kCacheLine) mutable std::atomic<Window*> tail_;
};

}  // namespace elastic
