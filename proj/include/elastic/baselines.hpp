#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "elastic/commit.hpp"
#include "elastic/observer.hpp"
#include "elastic/reclamation.hpp"
#include "elastic/substrate.hpp"

namespace elastic {

/// Strict lock-free FIFO: a single row-tagged lane.
template <typename T, typename Observer = NullObserver>
class MsQueue {
 public:
  explicit MsQueue(Observer* obs = nullptr) : obs_(obs) {}

  class Handle {
   public:
    explicit Handle(MsQueue& q) : q_(&q) {}

    void enqueue(T value) {
      EpochGuard guard;
      auto* node = new typename SubQueue<T>::Node{value, 0, {}};
      const auto next_row = [](std::uint64_t top) { return std::optional{top + 1}; };
      const auto lin = [&](auto&& cas, const T& v, std::uint64_t row) {
        return detail::commit(q_->obs_, cas, [&] {
          if constexpr (Observer::enabled) {
            q_->obs_->on_insert(detail::key_of(v), 0, row, WindowView{row, 1, 1});
            q_->maybe_audit();
          }
        });
      };
      while (q_->lane_.try_enqueue(node, next_row, lin) != LaneStatus::done) ++counters_.cas_failures;
    }

    std::optional<Taken<T>> dequeue_taken() {
      EpochGuard guard;
      const auto any = [](std::uint64_t) { return true; };
      for (;;) {
        const auto lin = [&](auto&& cas, const T& v, std::uint64_t row) {
          return detail::commit(q_->obs_, cas, [&] {
            if constexpr (Observer::enabled) {
              q_->obs_->on_remove(detail::key_of(v), 0, row, WindowView{row, 1, 1});
              q_->maybe_audit();
            }
          });
        };
        T value{};
        std::uint64_t row = 0;
        switch (q_->lane_.try_dequeue(any, value, row, lin)) {
          case LaneStatus::done:
            return Taken<T>{value, 0, row};
          case LaneStatus::invalid:
            if (q_->confirm_empty()) {
              ++counters_.empty_returns;
              return std::nullopt;
            }
            break;
          case LaneStatus::contended:
            ++counters_.cas_failures;
            break;
        }
      }
    }

    std::optional<T> dequeue() {
      auto t = dequeue_taken();
      if (!t) return std::nullopt;
      return t->value;
    }

    const OpCounters& counters() const { return counters_; }

   private:
    MsQueue* q_;
    OpCounters counters_;
  };

  Handle handle(std::uint64_t = 0) { return Handle(*this); }

  std::vector<LiveItem> live_items() const {
    std::vector<LiveItem> out;
    lane_.for_each([&](const T& v, std::uint64_t row) { out.push_back({detail::key_of(v), 0, row}); });
    return out;
  }

 private:
  bool confirm_empty() {
    if constexpr (Observer::enabled) {
      auto lock = obs_->serialize();
      if (!lane_.empty()) return false;
      obs_->on_empty();
      return true;
    } else {
      return lane_.empty();
    }
  }

  void maybe_audit() {
    if constexpr (Observer::enabled) {
      if (obs_->audit_due()) obs_->audit(live_items());
    }
  }

  SubQueue<T> lane_;
  Observer* obs_;
};

/// Strict lock-free LIFO: a single row-tagged lane.
template <typename T, typename Observer = NullObserver>
class TreiberStack {
 public:
  explicit TreiberStack(Observer* obs = nullptr) : obs_(obs) {
    if constexpr (Observer::enabled) obs_->on_start(StackWindow{});
  }

  class Handle {
   public:
    explicit Handle(TreiberStack& s) : s_(&s) {}

    void push(T value) {
      EpochGuard guard;
      auto* node = new typename SubStack<T>::Node{value, 0, nullptr};
      const auto next_row = [](std::uint32_t top) { return std::optional{top + 1}; };
      const auto lin = [&](auto&& cas, const T& v, std::uint32_t row) {
        return detail::commit(s_->obs_, cas, [&] {
          if constexpr (Observer::enabled) {
            s_->obs_->on_push(detail::key_of(v), 0, row, StackWindow{});
            s_->maybe_audit();
          }
        });
      };
      while (s_->lane_.try_push(node, next_row, lin) != LaneStatus::done) ++counters_.cas_failures;
    }

    std::optional<Taken<T>> pop_taken() {
      EpochGuard guard;
      const auto any = [](std::uint32_t) { return true; };
      for (;;) {
        const auto lin = [&](auto&& cas, const T& v, std::uint32_t row) {
          return detail::commit(s_->obs_, cas, [&] {
            if constexpr (Observer::enabled) {
              s_->obs_->on_pop(detail::key_of(v), 0, row, StackWindow{});
              s_->maybe_audit();
            }
          });
        };
        T value{};
        std::uint32_t row = 0;
        switch (s_->lane_.try_pop(any, value, row, lin)) {
          case LaneStatus::done:
            return Taken<T>{value, 0, row};
          case LaneStatus::invalid:
            if (s_->confirm_empty()) {
              ++counters_.empty_returns;
              return std::nullopt;
            }
            break;
          case LaneStatus::contended:
            ++counters_.cas_failures;
            break;
        }
      }
    }

    std::optional<T> pop() {
      auto t = pop_taken();
      if (!t) return std::nullopt;
      return t->value;
    }

    const OpCounters& counters() const { return counters_; }

   private:
    TreiberStack* s_;
    OpCounters counters_;
  };

  Handle handle(std::uint64_t = 0) { return Handle(*this); }

  std::vector<LiveItem> live_items() const {
    std::vector<LiveItem> out;
    lane_.for_each([&](const T& v, std::uint32_t row) { out.push_back({detail::key_of(v), 0, row}); });
    return out;
  }

 private:
  bool confirm_empty() {
    if constexpr (Observer::enabled) {
      auto lock = obs_->serialize();
      if (!lane_.empty()) return false;
      obs_->on_empty();
      return true;
    } else {
      return lane_.empty();
    }
  }

  void maybe_audit() {
    if constexpr (Observer::enabled) {
      if (obs_->audit_due()) obs_->audit(live_items());
    }
  }

  SubStack<T> lane_;
  Observer* obs_;
};

}  // namespace elastic
