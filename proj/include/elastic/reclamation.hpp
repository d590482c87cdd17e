#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <new>
#include <vector>

namespace elastic {

/// Epoch-based deferred reclamation.
///
/// Threads announce the global epoch while inside an `EpochGuard`. An object
/// retired at epoch e is freed once the global epoch has reached e + 2, at
/// which point no guard that could have observed it is still open. Guards
/// nest; only the outermost one announces.
class EpochDomain {
 public:
  using Deleter = void (*)(void*);

  static EpochDomain& global();

  EpochDomain();
  ~EpochDomain();
  EpochDomain(const EpochDomain&) = delete;
  EpochDomain& operator=(const EpochDomain&) = delete;

  void enter();
  void exit();

  /// Defers `deleter(p)` until no guard that predates this call remains open.
  /// `deleter` runs the destructor only; storage is released by the domain.
  void retire(void* p, Deleter deleter, std::size_t size, std::size_t align);

  template <typename T>
  void retire(T* p) {
    retire(const_cast<void*>(static_cast<const void*>(p)),
           [](void* q) { static_cast<T*>(q)->~T(); }, sizeof(T), alignof(T));
  }

  /// When set, freed memory is overwritten with 0xDB before it is released.
  void set_poisoning(bool on) { poison_.store(on, std::memory_order_relaxed); }
  bool poisoning() const { return poison_.load(std::memory_order_relaxed); }

  /// Frees everything retired by the calling thread and by exited threads.
  /// Only valid when no other thread holds a guard.
  void drain();

  std::uint64_t epoch() const { return epoch_.load(std::memory_order_acquire); }
  std::uint64_t freed() const { return freed_.load(std::memory_order_relaxed); }
  std::uint64_t retired() const { return retired_.load(std::memory_order_relaxed); }

 private:
  struct Retired {
    void* ptr;
    Deleter deleter;
    std::size_t size;
    std::size_t align;
  };
  struct Bag {
    std::uint64_t epoch = 0;
    std::vector<Retired> items;
  };
  struct alignas(64) Record {
    // (announced epoch << 1) | active
    std::atomic<std::uint64_t> state{0};
    std::atomic<bool> in_use{false};
    Record* next = nullptr;
    unsigned nesting = 0;
    unsigned since_advance = 0;
    Bag bags[3];
  };
  struct Binding;

  Record& local();
  Record* acquire_record();
  void release_record(Record* rec);
  bool try_advance();
  void free_bag(Bag& bag);
  void free_one(const Retired& r);
  void collect_orphans(std::uint64_t safe_below);

  std::uint64_t id_;
  std::atomic<std::uint64_t> epoch_{2};
  std::atomic<Record*> records_{nullptr};
  std::atomic<bool> poison_{false};
  std::atomic<std::uint64_t> freed_{0};
  std::atomic<std::uint64_t> retired_{0};

  std::mutex orphan_mu_;
  std::vector<Bag> orphans_;
};

/// RAII critical section on the global domain.
class EpochGuard {
 public:
  EpochGuard() { EpochDomain::global().enter(); }
  ~EpochGuard() { EpochDomain::global().exit(); }
  EpochGuard(const EpochGuard&) = delete;
  EpochGuard& operator=(const EpochGuard&) = delete;
};

template <typename T>
void retire(T* p) {
  EpochDomain::global().retire(p);
}

}  // namespace elastic
