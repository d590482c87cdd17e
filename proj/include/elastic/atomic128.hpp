#pragma once

#include <atomic>
#include <cstdint>

#include "elastic/reclamation.hpp"

namespace elastic {

/// Two machine words updated as one unit.
struct alignas(16) DoubleWord {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;

  friend bool operator==(const DoubleWord&, const DoubleWord&) = default;
};

#if defined(__x86_64__) && defined(__GCC_HAVE_SYNC_COMPARE_AND_SWAP_16)
#define ELASTIC_HAS_NATIVE_DWCAS 1
#else
#define ELASTIC_HAS_NATIVE_DWCAS 0
#endif

#if ELASTIC_HAS_NATIVE_DWCAS

namespace detail {
/// Aligned 16-byte SSE loads are single-copy atomic on CPUs that report AVX.
inline bool vector_load_is_atomic() noexcept {
  static const bool ok = __builtin_cpu_supports("avx");
  return ok;
}
}  // namespace detail

/// cmpxchg16b-backed double-width atomic. Loads use an aligned vector load
/// where that is atomic, else a compare-and-swap of zero with zero.
class NativeAtomicDoubleWord {
 public:
  NativeAtomicDoubleWord() = default;
  explicit NativeAtomicDoubleWord(DoubleWord init) : word_(pack(init)) {}

  NativeAtomicDoubleWord(const NativeAtomicDoubleWord&) = delete;
  NativeAtomicDoubleWord& operator=(const NativeAtomicDoubleWord&) = delete;

  DoubleWord load() const noexcept {
    if (detail::vector_load_is_atomic()) {
      __int128 v;
      asm volatile("movdqa %1, %0" : "=x"(v) : "m"(word_) : "memory");
      return unpack(static_cast<unsigned __int128>(v));
    }
    return load_locked();
  }

  /// Load through the locked compare-and-swap path.
  DoubleWord load_locked() const noexcept {
    auto* p = const_cast<unsigned __int128*>(&word_);
    return unpack(__sync_val_compare_and_swap(p, 0, 0));
  }

  /// On failure `expected` receives the current value.
  bool compare_exchange(DoubleWord& expected, DoubleWord desired) noexcept {
    const unsigned __int128 want = pack(expected);
    const unsigned __int128 prev = __sync_val_compare_and_swap(&word_, want, pack(desired));
    if (prev == want) return true;
    expected = unpack(prev);
    return false;
  }

  void store(DoubleWord desired) noexcept {
    DoubleWord cur = load();
    while (!compare_exchange(cur, desired)) {
    }
  }

 private:
  static unsigned __int128 pack(DoubleWord w) noexcept {
    return (static_cast<unsigned __int128>(w.hi) << 64) | w.lo;
  }
  static DoubleWord unpack(unsigned __int128 v) noexcept {
    return {static_cast<std::uint64_t>(v), static_cast<std::uint64_t>(v >> 64)};
  }

  alignas(16) unsigned __int128 word_ = 0;
};

#endif

/// Fallback for targets without a double-width CAS: the value lives in an
/// immutable heap record and the atomic swaps record pointers. Replaced
/// records go through the epoch domain.
class IndirectAtomicDoubleWord {
 public:
  IndirectAtomicDoubleWord() : rec_(new Record{}) {}
  explicit IndirectAtomicDoubleWord(DoubleWord init) : rec_(new Record{init}) {}
  ~IndirectAtomicDoubleWord() { delete rec_.load(std::memory_order_relaxed); }

  IndirectAtomicDoubleWord(const IndirectAtomicDoubleWord&) = delete;
  IndirectAtomicDoubleWord& operator=(const IndirectAtomicDoubleWord&) = delete;

  DoubleWord load() const noexcept {
    EpochGuard guard;
    return rec_.load(std::memory_order_acquire)->value;
  }

  bool compare_exchange(DoubleWord& expected, DoubleWord desired) {
    EpochGuard guard;
    const Record* cur = rec_.load(std::memory_order_acquire);
    auto* fresh = new Record{desired};
    while (cur->value == expected) {
      if (rec_.compare_exchange_weak(cur, fresh, std::memory_order_acq_rel,
                                     std::memory_order_acquire)) {
        EpochDomain::global().retire(const_cast<Record*>(cur));
        return true;
      }
    }
    delete fresh;
    expected = cur->value;
    return false;
  }

  void store(DoubleWord desired) {
    DoubleWord cur = load();
    while (!compare_exchange(cur, desired)) {
    }
  }

 private:
  struct Record {
    DoubleWord value;
  };
  std::atomic<const Record*> rec_;
};

#if ELASTIC_HAS_NATIVE_DWCAS && !defined(ELASTIC_FORCE_INDIRECT_DWCAS)
using AtomicDoubleWord = NativeAtomicDoubleWord;
#else
using AtomicDoubleWord = IndirectAtomicDoubleWord;
#endif

}  // namespace elastic
