#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <type_traits>
#include <utility>
#include <vector>

#include "elastic/atomic128.hpp"
#include "elastic/reclamation.hpp"
#include "elastic/window.hpp"

namespace elastic {

/// Outcome of one linearization attempt on a lane.
enum class LaneStatus {
  done,       // the compare-and-exchange succeeded
  invalid,    // the lane has no valid row for this window (or is empty)
  contended,  // another thread changed the lane first
};

/// Runs a linearizing compare-and-exchange on a lane. Observers substitute
/// a callable that holds their lock around the exchange and records
/// (value, row) when it commits.
struct DirectLinearizer {
  template <typename Cas, typename V, typename R>
  bool operator()(Cas&& cas, const V&, R) const {
    return cas();
  }
};

template <typename T>
struct Taken {
  T value;
  std::uint32_t lane;
  std::uint64_t row;
};

/// Row-tagged Michael-Scott queue. Rows strictly increase from head to tail;
/// the sentinel keeps the row of the last removed node so the lane top row
/// survives draining.
template <typename T>
class alignas(kCacheLine) SubQueue {
  static_assert(std::is_trivially_copyable_v<T>);

 public:
  struct Node {
    T value{};
    std::uint64_t row = 0;
    std::atomic<Node*> next{nullptr};
  };

  /// (head, successor) pair used for double-collect emptiness checks.
  struct Snapshot {
    Node* head;
    Node* next;
    friend bool operator==(const Snapshot&, const Snapshot&) = default;
  };

  SubQueue() {
    auto* s = new Node;
    head_.store(s, std::memory_order_relaxed);
    tail_.store(s, std::memory_order_relaxed);
  }

  ~SubQueue() {
    Node* n = head_.load(std::memory_order_relaxed);
    while (n != nullptr) {
      Node* next = n->next.load(std::memory_order_relaxed);
      delete n;
      n = next;
    }
  }

  SubQueue(const SubQueue&) = delete;
  SubQueue& operator=(const SubQueue&) = delete;

  /// Row of the most recently enqueued node (0 for a fresh lane).
  std::uint64_t top_row() const { return tail_node()->row; }

  /// Attempts one append. `row_for(top_row)` returns the row to use or
  /// nullopt if the lane is full for the caller's window. Caller holds an
  /// epoch guard; on anything but `done` the node is still owned by the caller.
  template <typename RowFn, typename Lin = DirectLinearizer>
  LaneStatus try_enqueue(Node* node, RowFn&& row_for, Lin&& lin = {}) {
    Node* t = tail_node();
    const std::optional<std::uint64_t> row = row_for(t->row);
    if (!row) return LaneStatus::invalid;
    node->row = *row;
    node->next.store(nullptr, std::memory_order_relaxed);
    Node* expected = nullptr;
    const bool ok = lin(
        [&] {
          return t->next.compare_exchange_strong(expected, node, std::memory_order_acq_rel,
                                                 std::memory_order_acquire);
        },
        node->value, *row);
    if (!ok) return LaneStatus::contended;
    tail_.compare_exchange_strong(t, node, std::memory_order_acq_rel, std::memory_order_relaxed);
    return LaneStatus::done;
  }

  /// Attempts one removal of the oldest node if `valid(row)` holds for it.
  template <typename ValidFn, typename Lin = DirectLinearizer>
  LaneStatus try_dequeue(ValidFn&& valid, T& value, std::uint64_t& row, Lin&& lin = {}) {
    Node* h = head_.load(std::memory_order_acquire);
    Node* n = h->next.load(std::memory_order_acquire);
    if (n == nullptr) return LaneStatus::invalid;
    Node* t = tail_.load(std::memory_order_acquire);
    if (h == t) {
      tail_.compare_exchange_strong(t, n, std::memory_order_acq_rel, std::memory_order_relaxed);
    }
    if (!valid(n->row)) return LaneStatus::invalid;
    const T v = n->value;
    const std::uint64_t r = n->row;
    const bool ok = lin(
        [&] {
          return head_.compare_exchange_strong(h, n, std::memory_order_acq_rel,
                                               std::memory_order_acquire);
        },
        v, r);
    if (!ok) return LaneStatus::contended;
    retire(h);
    value = v;
    row = r;
    return LaneStatus::done;
  }

  /// Unconditional append at `row`, retrying on contention. Returns whether
  /// the first attempt succeeded.
  bool enqueue(T value, std::uint64_t row) {
    EpochGuard guard;
    auto* node = new Node{value, row, {}};
    bool first = true;
    while (try_enqueue(node, [row](std::uint64_t) { return std::optional{row}; }) !=
           LaneStatus::done) {
      first = false;
    }
    return first;
  }

  std::optional<std::pair<T, std::uint64_t>> dequeue() {
    EpochGuard guard;
    T v{};
    std::uint64_t r = 0;
    for (;;) {
      switch (try_dequeue([](std::uint64_t) { return true; }, v, r)) {
        case LaneStatus::done:
          return std::pair{v, r};
        case LaneStatus::invalid:
          return std::nullopt;
        case LaneStatus::contended:
          break;
      }
    }
  }

  Snapshot snapshot() const {
    Node* h = head_.load(std::memory_order_acquire);
    return {h, h->next.load(std::memory_order_acquire)};
  }

  bool empty() const { return snapshot().next == nullptr; }

  /// Visits (value, row) from oldest to newest. Needs quiescence or a
  /// serialized context.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    Node* n = head_.load(std::memory_order_acquire)->next.load(std::memory_order_acquire);
    for (; n != nullptr; n = n->next.load(std::memory_order_acquire)) fn(n->value, n->row);
  }

 private:
  Node* tail_node() const {
    for (;;) {
      Node* t = tail_.load(std::memory_order_acquire);
      Node* n = t->next.load(std::memory_order_acquire);
      if (n == nullptr) return t;
      tail_.compare_exchange_weak(t, n, std::memory_order_acq_rel, std::memory_order_relaxed);
    }
  }

  alignas(kCacheLine) std::atomic<Node*> head_;
  alignas(kCacheLine) mutable std::atomic<Node*> tail_;
};

/// Row-tagged Treiber stack. The descriptor packs (top, N_j, stamp) in one
/// double-width word, so the top row is read together with the top node.
template <typename T>
class alignas(kCacheLine) SubStack {
  static_assert(std::is_trivially_copyable_v<T>);

 public:
  struct Node {
    T value{};
    std::uint32_t row = 0;
    Node* next = nullptr;
  };

  struct Descriptor {
    Node* top = nullptr;
    std::uint32_t row = 0;  // N_j
    std::uint32_t stamp = 0;

    friend bool operator==(const Descriptor&, const Descriptor&) = default;
  };

  SubStack() = default;
  ~SubStack() {
    Node* n = load().top;
    while (n != nullptr) {
      Node* next = n->next;
      delete n;
      n = next;
    }
  }
  SubStack(const SubStack&) = delete;
  SubStack& operator=(const SubStack&) = delete;

  Descriptor load() const { return unpack(desc_.load()); }
  std::uint32_t top_row() const { return load().row; }

  template <typename RowFn, typename Lin = DirectLinearizer>
  LaneStatus try_push(Node* node, RowFn&& row_for, Lin&& lin = {}) {
    const Descriptor d = load();
    const std::optional<std::uint32_t> row = row_for(d.row);
    if (!row) return LaneStatus::invalid;
    node->row = *row;
    node->next = d.top;
    const Descriptor want{node, *row, d.stamp + 1};
    DoubleWord expected = pack(d);
    const bool ok =
        lin([&] { return desc_.compare_exchange(expected, pack(want)); }, node->value, *row);
    return ok ? LaneStatus::done : LaneStatus::contended;
  }

  template <typename ValidFn, typename Lin = DirectLinearizer>
  LaneStatus try_pop(ValidFn&& valid, T& value, std::uint32_t& row, Lin&& lin = {}) {
    const Descriptor d = load();
    if (d.top == nullptr || !valid(d.row)) return LaneStatus::invalid;
    Node* below = d.top->next;
    const Descriptor want{below, below != nullptr ? below->row : 0u, d.stamp + 1};
    const T v = d.top->value;
    DoubleWord expected = pack(d);
    const bool ok =
        lin([&] { return desc_.compare_exchange(expected, pack(want)); }, v, d.row);
    if (!ok) return LaneStatus::contended;
    retire(d.top);
    value = v;
    row = d.row;
    return LaneStatus::done;
  }

  bool push(T value, std::uint32_t row) {
    EpochGuard guard;
    auto* node = new Node{value, row, nullptr};
    bool first = true;
    while (try_push(node, [row](std::uint32_t) { return std::optional{row}; }) !=
           LaneStatus::done) {
      first = false;
    }
    return first;
  }

  std::optional<std::pair<T, std::uint32_t>> pop() {
    EpochGuard guard;
    T v{};
    std::uint32_t r = 0;
    for (;;) {
      switch (try_pop([](std::uint32_t) { return true; }, v, r)) {
        case LaneStatus::done:
          return std::pair{v, r};
        case LaneStatus::invalid:
          return std::nullopt;
        case LaneStatus::contended:
          break;
      }
    }
  }

  bool empty() const { return load().top == nullptr; }

  /// Visits (value, row) from top to bottom. Needs quiescence or a
  /// serialized context.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (Node* n = load().top; n != nullptr; n = n->next) fn(n->value, n->row);
  }

 private:
  static DoubleWord pack(const Descriptor& d) {
    return {reinterpret_cast<std::uint64_t>(d.top),
            (static_cast<std::uint64_t>(d.stamp) << 32) | d.row};
  }
  static Descriptor unpack(const DoubleWord& w) {
    return {reinterpret_cast<Node*>(w.lo), static_cast<std::uint32_t>(w.hi),
            static_cast<std::uint32_t>(w.hi >> 32)};
  }

  AtomicDoubleWord desc_;
};

}  // namespace elastic
