#include <doctest.h>

#include <atomic>
#include <map>
#include <random>
#include <thread>
#include <type_traits>
#include <vector>

#include "elastic/law_queue.hpp"
#include "elastic/lpw_queue.hpp"
#include "elastic/lpw_stack.hpp"

// Built with the pointer-swap double word forced on. Value types differ from
// the library's instantiations so no template is shared with it.

using namespace elastic;

static_assert(std::is_same_v<AtomicDoubleWord, IndirectAtomicDoubleWord>);

namespace {

template <typename Insert, typename Remove, typename Knob>
bool mixed_run(Insert insert, Remove remove, Knob knob) {
  constexpr unsigned kThreads = 4;
  constexpr std::uint32_t kOps = 20000;
  std::vector<std::map<std::uint32_t, int>> seen(kThreads);
  std::atomic<bool> stop{false};
  std::vector<std::thread> ts;
  for (unsigned t = 0; t < kThreads; ++t) {
    ts.emplace_back([&, t] {
      std::mt19937 rng(t);
      for (std::uint32_t i = 0; i < kOps; ++i) {
        if (rng() & 1) {
          const std::uint32_t v = (t << 24) | i;
          insert(t, v);
          ++seen[t][v];
        } else if (auto v = remove(t)) {
          --seen[t][*v];
        }
      }
    });
  }
  std::thread k([&] {
    std::mt19937 rng(99);
    while (!stop) {
      knob(rng);
      std::this_thread::sleep_for(std::chrono::microseconds(300));
    }
  });
  for (auto& t : ts) t.join();
  stop = true;
  k.join();
  std::map<std::uint32_t, int> total;
  for (const auto& m : seen) {
    for (const auto& [v, n] : m) total[v] += n;
  }
  while (auto v = remove(0)) --total[*v];
  for (const auto& [v, n] : total) {
    if (n != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("double word exchange through records") {
  IndirectAtomicDoubleWord w({1, 2});
  DoubleWord expected{1, 3};
  CHECK_FALSE(w.compare_exchange(expected, {5, 6}));
  CHECK(expected == DoubleWord{1, 2});
  CHECK(w.compare_exchange(expected, {5, 6}));
  CHECK(w.load() == DoubleWord{5, 6});
  w.store({7, 8});
  CHECK(w.load() == DoubleWord{7, 8});
}

TEST_CASE("halves never tear under concurrent increments") {
  IndirectAtomicDoubleWord w({0, ~0ull});
  std::atomic<bool> torn{false};
  std::vector<std::thread> ts;
  for (int t = 0; t < 4; ++t) {
    ts.emplace_back([&] {
      for (int i = 0; i < 20000; ++i) {
        DoubleWord cur = w.load();
        if (cur.hi != ~cur.lo) torn = true;
        while (!w.compare_exchange(cur, {cur.lo + 1, ~(cur.lo + 1)})) {
          if (cur.hi != ~cur.lo) torn = true;
        }
      }
    });
  }
  for (auto& t : ts) t.join();
  CHECK_FALSE(torn);
  CHECK(w.load().lo == 80000);
  EpochDomain::global().drain();
}

TEST_CASE("window queue keeps every item") {
  LawQueue<std::uint32_t> q(8, 3, 4);
  std::vector<LawQueue<std::uint32_t>::Handle> hs;
  for (unsigned t = 0; t < 4; ++t) hs.push_back(q.handle(t + 1));
  CHECK(mixed_run([&](unsigned t, std::uint32_t v) { hs[t].enqueue(v); },
                  [&](unsigned t) { return hs[t].dequeue(); },
                  [&](std::mt19937& rng) {
                    q.set_width(1 + rng() % 8);
                    q.set_depth(1 + rng() % 6);
                  }));
  EpochDomain::global().drain();
}

TEST_CASE("side-record queue keeps every item") {
  LpwQueue<std::uint32_t> q(8, 3, 4);
  std::vector<LpwQueue<std::uint32_t>::Handle> hs;
  for (unsigned t = 0; t < 4; ++t) hs.push_back(q.handle(t + 1));
  CHECK(mixed_run([&](unsigned t, std::uint32_t v) { hs[t].enqueue(v); },
                  [&](unsigned t) { return hs[t].dequeue(); },
                  [&](std::mt19937& rng) {
                    q.set_width(1 + rng() % 8);
                    q.set_head_depth(1 + rng() % 6);
                    q.set_tail_depth(1 + rng() % 6);
                  }));
  EpochDomain::global().drain();
}

TEST_CASE("stack keeps every item") {
  LpwStack<std::uint32_t> s(8, 3, 4);
  std::vector<LpwStack<std::uint32_t>::Handle> hs;
  for (unsigned t = 0; t < 4; ++t) hs.push_back(s.handle(t + 1));
  CHECK(mixed_run([&](unsigned t, std::uint32_t v) { hs[t].push(v); },
                  [&](unsigned t) { return hs[t].pop(); },
                  [&](std::mt19937& rng) {
                    s.set_width(1 + rng() % 8);
                    s.set_depth(2 + rng() % 6);
                  }));
  EpochDomain::global().drain();
}
