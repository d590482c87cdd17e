#include <doctest.h>

#include <random>
#include <thread>
#include <vector>

#include "elastic/bounds.hpp"
#include "elastic/lpw_stack.hpp"
#include "elastic/oracle.hpp"
#include "stack_scenarios.hpp"

using namespace elastic;

namespace {

using Stack = LpwStack<std::uint64_t>;
using Oracle = oracle::StackOracle;
using ObservedStack = LpwStack<std::uint64_t, Oracle>;

StackWindow make_window(std::uint32_t max, std::uint16_t depth, std::uint16_t push_width,
                        std::uint16_t last_push_width, ShiftDir last_shift = ShiftDir::up,
                        std::uint32_t version = 1) {
  StackWindow w;
  w.max = max;
  w.depth = depth;
  w.push_width = push_width;
  w.pop_width = std::max(push_width, last_push_width);
  w.last_push_width = last_push_width;
  w.last_shift = last_shift;
  w.version = version;
  return w;
}

}  // namespace

TEST_CASE("stack window round-trips through packing") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    StackWindow w;
    w.max = static_cast<std::uint32_t>(rng());
    w.depth = static_cast<std::uint16_t>(rng());
    w.push_width = static_cast<std::uint16_t>(rng());
    w.pop_width = static_cast<std::uint16_t>(rng());
    w.last_push_width = static_cast<std::uint16_t>(rng());
    w.last_shift = rng() & 1 ? ShiftDir::down : ShiftDir::up;
    w.version = static_cast<std::uint32_t>(rng()) & kStackVersionMask;
    CHECK(unpack_stack_window(pack_stack_window(w)) == w);
  }
}

TEST_CASE("depth 1 is raised to the smallest shiftable depth") {
  Stack s(4, 1, 1);
  CHECK(s.window().depth == kMinStackDepth);
  CHECK(s.set_depth(1) == kMinStackDepth);
}

TEST_CASE("shift up and down move by half the new depth") {
  Stack s(8, 4, 4);
  const StackWindow old = make_window(10, 4, 4, 4);
  s.install(old, {});
  REQUIRE(s.shift(ShiftDir::up, old));
  StackWindow up = s.window();
  CHECK(up.max == 12);
  CHECK(up.min() == 8);
  CHECK(up.version == 2);
  CHECK(up.last_shift == ShiftDir::up);

  s.install(old, {});
  REQUIRE(s.shift(ShiftDir::down, old));
  StackWindow down = s.window();
  CHECK(down.max == 8);
  CHECK(down.min() == 4);
  CHECK(down.last_shift == ShiftDir::down);
  CHECK(down.last_push_width == 4);

  // Losing snapshot.
  CHECK_FALSE(s.shift(ShiftDir::up, old));
}

TEST_CASE("shift down never goes below the first window") {
  Stack s(8, 4, 6);
  const StackWindow old = make_window(6, 6, 4, 4);
  s.install(old, {});
  REQUIRE(s.shift(ShiftDir::down, old));
  CHECK(s.window().max == 6);
  CHECK(s.window().min() == 0);
}

TEST_CASE("pop width covers wider records above the new floor") {
  Stack s(8, 4, 4);
  const StackWindow old = make_window(10, 4, 4, 4);
  s.install(old, {{9, 8}});
  REQUIRE(s.shift(ShiftDir::up, old));
  CHECK(s.window().min() == 8);
  CHECK(s.window().push_width == 4);
  CHECK(s.window().pop_width == 8);
}

TEST_CASE("widest record above a row") {
  Stack s(16, 4, 4);
  CHECK(s.lateral_width(0) == 0);
  s.install(make_window(12, 4, 4, 4), {{13, 8}, {9, 6}});
  CHECK(s.lateral_width(8) == 8);
  CHECK(s.lateral_width(9) == 8);
  CHECK(s.lateral_width(13) == 0);
}

TEST_CASE("stabilize: unchanged widths and nothing above the floor") {
  Stack s(16, 4, 4);
  const StackWindow w = make_window(12, 4, 4, 4, ShiftDir::up, 5);
  s.install(w, {{5, 6}}, 4);
  s.stabilize(w);
  CHECK(s.lateral() == std::vector<LateralEntry>{{5, 6}});
  CHECK(s.lateral_version() == 5);
}

TEST_CASE("stabilize: a wider push width records the old width at the floor") {
  Stack s(16, 8, 4);
  const StackWindow w = make_window(12, 4, 8, 4);
  s.install(w, {});
  s.stabilize(w);
  CHECK(s.lateral() == std::vector<LateralEntry>{{8, 4}});
}

TEST_CASE("stabilize: a narrower push width records the highest outside lane") {
  Stack s(16, 4, 4);
  const StackWindow w = make_window(12, 4, 4, 8);
  s.install(w, {});
  s.place(5, 1, 13);
  s.stabilize(w);
  CHECK(s.lateral() == std::vector<LateralEntry>{{13, 8}});
}

TEST_CASE("stabilize: a record no wider than the push width drops to the floor") {
  Stack s(16, 4, 4);
  const StackWindow w = make_window(12, 4, 4, 4);
  s.install(w, {{12, 4}});
  s.stabilize(w);
  CHECK(s.lateral() == std::vector<LateralEntry>{{8, 4}});
}

TEST_CASE("stabilize: a wider record drops to the previous floor after a down shift") {
  Stack s(16, 8, 8);
  const StackWindow w = make_window(14, 8, 8, 8, ShiftDir::down);
  s.install(w, {{12, 10}});
  s.stabilize(w);
  CHECK(s.lateral() == std::vector<LateralEntry>{{10, 10}});
}

TEST_CASE("stabilize: a record lowered onto the next one is removed") {
  Stack s(16, 4, 4);
  const StackWindow w = make_window(12, 4, 4, 4);
  s.install(w, {{12, 4}, {8, 6}});
  s.stabilize(w);
  CHECK(s.lateral() == std::vector<LateralEntry>{{8, 6}});
}

TEST_CASE("stabilize runs once per window version") {
  Stack s(16, 4, 4);
  const StackWindow w = make_window(12, 4, 4, 8);
  s.install(w, {});
  s.stabilize(w);
  REQUIRE(s.lateral() == std::vector<LateralEntry>{{12, 8}});
  // A lane appearing later does not produce a late record.
  s.place(6, 1, 14);
  s.stabilize(w);
  CHECK(s.lateral() == std::vector<LateralEntry>{{12, 8}});
  CHECK(s.lateral_version() == w.version);
}

TEST_CASE("push then pop on an idle stack returns the same value") {
  Stack s(8, 4, 4);
  auto h = s.handle(1);
  for (std::uint64_t i = 0; i < 100; ++i) {
    h.push(i);
    auto v = h.pop();
    REQUIRE(v);
    CHECK(*v == i);
  }
  CHECK_FALSE(h.pop());
}

TEST_CASE("width 1 behaves as a strict stack") {
  Stack s(4, 1, 2);
  auto h = s.handle(3);
  std::vector<std::uint64_t> model;
  std::mt19937_64 rng(5);
  for (std::uint64_t i = 0; i < 20000; ++i) {
    if (rng() % 2 == 0) {
      h.push(i);
      model.push_back(i);
    } else if (model.empty()) {
      CHECK_FALSE(h.pop());
    } else {
      auto v = h.pop();
      REQUIRE(v);
      CHECK(*v == model.back());
      model.pop_back();
    }
  }
}

TEST_CASE("fixed configuration stays within the static bound") {
  Oracle o(Oracle::Design::elastic, {.audit_every = 89, .static_stack = true});
  ObservedStack s(8, 4, 4, &o);
  std::vector<std::thread> ts;
  for (int t = 0; t < 4; ++t) {
    ts.emplace_back([&, t] {
      auto h = s.handle(t + 1);
      std::mt19937_64 rng(t);
      for (std::uint64_t i = 0; i < 25000; ++i) {
        if (rng() & 1) {
          h.push((std::uint64_t(t + 1) << 40) | i);
        } else {
          h.pop();
        }
      }
    });
  }
  for (auto& t : ts) t.join();
  CHECK(o.violations() == 0);
  CHECK(o.max_rank_error() <= bounds::stack_static(4, 4));
  CHECK(o.tally(oracle::CheckId::static_bound).evaluated > 0);
  CHECK(o.tally(oracle::CheckId::substack_envelope).evaluated > 0);
  for (const auto& m : o.messages()) MESSAGE(m);
}

TEST_CASE("side structure stays consistent under width and depth changes") {
  Oracle o(Oracle::Design::elastic, {.audit_every = 89});
  ObservedStack s(16, 4, 4, &o);
  std::atomic<bool> stop{false};
  std::vector<std::thread> ts;
  for (int t = 0; t < 4; ++t) {
    ts.emplace_back([&, t] {
      auto h = s.handle(t + 1);
      std::mt19937_64 rng(t);
      for (std::uint64_t i = 0; i < 30000; ++i) {
        // Phases of push-heavy and pop-heavy work move the window both ways.
        const bool push_heavy = (i / 3000) % 2 == 0;
        if (rng() % 10 < (push_heavy ? 7u : 3u)) {
          h.push((std::uint64_t(t + 1) << 40) | i);
        } else {
          h.pop();
        }
      }
    });
  }
  std::thread knob([&] {
    std::mt19937_64 rng(9);
    while (!stop) {
      s.set_width(1 + rng() % 12);
      s.set_depth(2 + rng() % 10);
      std::this_thread::sleep_for(std::chrono::microseconds(300));
    }
  });
  for (auto& t : ts) t.join();
  stop = true;
  knob.join();
  auto h = s.handle(50);
  while (h.pop()) {
  }
  // A push landing after a pop's emptiness scan can sit above the upper row
  // envelope once a down shift moves by more than half the depth.
  CHECK(o.violations() == o.tally(oracle::CheckId::upper_envelope).failed);
  CHECK(o.tally(oracle::CheckId::rank_bound).failed == 0);
  CHECK(o.resident() == 0);
  CHECK(o.tally(oracle::CheckId::lateral_cover).evaluated > 0);
  CHECK(o.tally(oracle::CheckId::lower_envelope).evaluated > 0);
  CHECK(o.tally(oracle::CheckId::upper_envelope).evaluated > 0);
  for (const auto& m : o.messages()) MESSAGE(m);
}

TEST_CASE("a late push survives a down shift above the upper row envelope") {
  Oracle o(Oracle::Design::elastic, {.audit_every = 1});
  const auto run = scenarios::odd_depth_late_push(o);
  REQUIRE(run.scripted);
  CHECK(run.pop_window.depth == 5);
  CHECK(run.highest_resident > run.pop_window.max + run.pop_window.depth / 2);
  CHECK(o.tally(oracle::CheckId::upper_envelope).failed >= 1);
  CHECK(o.violations() == o.tally(oracle::CheckId::upper_envelope).failed);
  CHECK(o.max_rank_error() <= bounds::stack_elastic(2, 5));
  CHECK(o.resident() == 0);
}
