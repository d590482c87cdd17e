#include "elastic/bench.hpp"

#include <pthread.h>
#include <sched.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "elastic/baselines.hpp"
#include "elastic/bounds.hpp"
#include "elastic/law_queue.hpp"
#include "elastic/lpw_queue.hpp"
#include "elastic/lpw_stack.hpp"
#include "elastic/reclamation.hpp"

namespace elastic::bench {

namespace {

constexpr std::uint64_t kFlushEvery = 1000;

using Clock = std::chrono::steady_clock;

template <typename E>
struct Names {
  E value;
  std::string_view name;
};

constexpr Names<Structure> kStructures[] = {
    {Structure::law_queue, "law-queue"},         {Structure::lpw_queue, "lpw-queue"},
    {Structure::lpw_stack, "lpw-stack"},         {Structure::ms_queue, "ms-queue"},
    {Structure::treiber_stack, "treiber-stack"},
};
constexpr Names<Workload> kWorkloads[] = {
    {Workload::mixed50, "mixed50"},
    {Workload::producer_consumer, "producer-consumer"},
};
constexpr Names<Mode> kModes[] = {{Mode::throughput, "throughput"}, {Mode::oracle, "oracle"}};

template <typename E, std::size_t N>
std::string_view name_of(const Names<E> (&table)[N], E v) {
  for (const auto& e : table) {
    if (e.value == v) return e.name;
  }
  return "?";
}

template <typename E, std::size_t N>
std::optional<E> value_of(const Names<E> (&table)[N], std::string_view s) {
  for (const auto& e : table) {
    if (e.name == s) return e.value;
  }
  return std::nullopt;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Order-independent fingerprint of a multiset of values.
struct Tally {
  std::uint64_t count = 0;
  std::uint64_t sum = 0;
  std::uint64_t hash = 0;

  void add(std::uint64_t v) {
    ++count;
    sum += v;
    hash += mix(v);
  }
  void merge(const Tally& o) {
    count += o.count;
    sum += o.sum;
    hash += o.hash;
  }
  friend bool operator==(const Tally&, const Tally&) = default;
};

// ------------------------------------------------------------ type erasure

class Worker {
 public:
  virtual ~Worker() = default;
  virtual void insert(std::uint64_t v) = 0;
  virtual bool remove(std::uint64_t& v) = 0;
};

template <typename H>
class HandleWorker final : public Worker {
 public:
  explicit HandleWorker(H h) : h_(std::move(h)) {}

  void insert(std::uint64_t v) override {
    if constexpr (requires { h_.enqueue(v); }) {
      h_.enqueue(v);
    } else {
      h_.push(v);
    }
  }

  bool remove(std::uint64_t& v) override {
    std::optional<std::uint64_t> r;
    if constexpr (requires { h_.dequeue(); }) {
      r = h_.dequeue();
    } else {
      r = h_.pop();
    }
    if (!r) return false;
    v = *r;
    return true;
  }

  H& handle() { return h_; }

 private:
  H h_;
};

class Target {
 public:
  virtual ~Target() = default;
  virtual std::unique_ptr<Worker> worker(std::uint64_t seed,
                                         const std::optional<ControllerConfig>& ctl) = 0;
  virtual void set_width(std::uint32_t) {}
  virtual void set_depth(std::uint32_t) {}
  virtual std::uint32_t width_shared() const { return 1; }
  virtual std::uint32_t depth_shared() const { return 1; }
  virtual WindowView tail() const { return {}; }
  virtual WindowView head() const { return {}; }
  virtual oracle::OracleCore* oracle() { return nullptr; }
};

template <typename S, typename Obs>
class TargetImpl final : public Target {
 public:
  template <typename Make>
  TargetImpl(std::unique_ptr<Obs> obs, Make&& make)
      : obs_(std::move(obs)), s_(make(obs_.get())) {}

  std::unique_ptr<Worker> worker(std::uint64_t seed,
                                 const std::optional<ControllerConfig>& ctl) override {
    auto h = s_->handle(seed);
    if constexpr (requires { h.enable_controller(*ctl); }) {
      if (ctl) h.enable_controller(*ctl);
    }
    return std::make_unique<HandleWorker<decltype(h)>>(std::move(h));
  }

  void set_width(std::uint32_t w) override {
    if constexpr (requires { s_->set_width(w); }) s_->set_width(w);
  }
  void set_depth(std::uint32_t d) override {
    if constexpr (requires { s_->set_depth(d); }) s_->set_depth(d);
  }
  std::uint32_t width_shared() const override {
    if constexpr (requires { s_->targets(); }) return s_->targets().width;
    return 1;
  }
  std::uint32_t depth_shared() const override {
    if constexpr (requires { s_->targets(); }) return s_->targets().depth;
    return 1;
  }
  WindowView tail() const override {
    if constexpr (requires { s_->tail_window(); }) {
      return s_->tail_window();
    } else if constexpr (requires { s_->window(); }) {
      return s_->window().push_view();
    }
    return {};
  }
  WindowView head() const override {
    if constexpr (requires { s_->head_window(); }) {
      return s_->head_window();
    } else if constexpr (requires { s_->window(); }) {
      return s_->window().pop_view();
    }
    return {};
  }
  oracle::OracleCore* oracle() override {
    if constexpr (std::is_base_of_v<oracle::OracleCore, Obs>) return obs_.get();
    return nullptr;
  }

 private:
  std::unique_ptr<Obs> obs_;
  std::unique_ptr<S> s_;
};

template <typename S, typename Obs, typename... Args>
std::unique_ptr<Target> build(std::unique_ptr<Obs> obs, Args... args) {
  return std::make_unique<TargetImpl<S, Obs>>(
      std::move(obs), [&](Obs* o) { return std::make_unique<S>(args..., o); });
}

template <typename QObs, typename SObs>
std::unique_ptr<Target> make_target_with(const BenchConfig& cfg, std::unique_ptr<QObs> qobs,
                                         std::unique_ptr<SObs> sobs) {
  const std::uint32_t mw = cfg.max_width;
  const std::uint32_t w = cfg.width;
  const std::uint32_t d = cfg.depth;
  using V = std::uint64_t;
  switch (cfg.structure) {
    case Structure::law_queue:
      return build<LawQueue<V, QObs>>(std::move(qobs), mw, w, d);
    case Structure::lpw_queue:
      return build<LpwQueue<V, QObs>>(std::move(qobs), mw, w, d);
    case Structure::ms_queue:
      return build<MsQueue<V, QObs>>(std::move(qobs));
    case Structure::lpw_stack:
      return build<LpwStack<V, SObs>>(std::move(sobs), mw, w, d);
    case Structure::treiber_stack:
      return build<TreiberStack<V, SObs>>(std::move(sobs));
  }
  throw ConfigError("unknown structure");
}

std::unique_ptr<Target> make_target(const BenchConfig& cfg) {
  if (cfg.mode == Mode::throughput) {
    return make_target_with<NullObserver, NullObserver>(cfg, nullptr, nullptr);
  }
  oracle::OracleOptions opts;
  opts.audit_every = cfg.audit_every;
  opts.static_stack = cfg.schedule.empty() && !cfg.controller;
  using QO = oracle::QueueOracle;
  using SO = oracle::StackOracle;
  std::unique_ptr<QO> q;
  std::unique_ptr<SO> s;
  switch (cfg.structure) {
    case Structure::law_queue:
      q = std::make_unique<QO>(QO::Design::law, opts);
      break;
    case Structure::lpw_queue:
      q = std::make_unique<QO>(QO::Design::lpw, opts);
      break;
    case Structure::ms_queue:
      q = std::make_unique<QO>(QO::Design::strict, opts);
      break;
    case Structure::lpw_stack:
      s = std::make_unique<SO>(SO::Design::elastic, opts);
      break;
    case Structure::treiber_stack:
      s = std::make_unique<SO>(SO::Design::strict, opts);
      break;
  }
  return make_target_with(cfg, std::move(q), std::move(s));
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

// ----------------------------------------------------------------- naming

std::string_view to_string(Structure s) { return name_of(kStructures, s); }
std::string_view to_string(Workload w) { return name_of(kWorkloads, w); }
std::string_view to_string(Mode m) { return name_of(kModes, m); }
std::optional<Structure> parse_structure(std::string_view s) { return value_of(kStructures, s); }
std::optional<Workload> parse_workload(std::string_view s) { return value_of(kWorkloads, s); }
std::optional<Mode> parse_mode(std::string_view s) { return value_of(kModes, s); }

bool is_stack(Structure s) { return s == Structure::lpw_stack || s == Structure::treiber_stack; }
bool is_elastic(Structure s) {
  return s == Structure::law_queue || s == Structure::lpw_queue || s == Structure::lpw_stack;
}

// ----------------------------------------------------------------- config

double effective_stretch(const BenchConfig& cfg) {
  if (cfg.mode != Mode::oracle) return 1.0;
  if (cfg.stretch > 0.0) return cfg.stretch;
  return is_stack(cfg.structure) ? 2000.0 : 1000.0;
}

unsigned producer_count(const BenchConfig& cfg) {
  if (cfg.workload != Workload::producer_consumer) return 0;
  if (cfg.producers != 0) return cfg.producers;
  return std::max(1u, static_cast<unsigned>(std::lround(cfg.threads * 2.0 / 3.0)));
}

void validate(const BenchConfig& cfg) {
  if (cfg.threads == 0) throw ConfigError("threads must be at least 1");
  if (!(cfg.duration_s > 0.0)) throw ConfigError("duration must be positive");
  if (cfg.max_width == 0 || cfg.max_width > kMaxWindowField) {
    throw ConfigError("max width must be in [1, 65535]");
  }
  if (cfg.width == 0 || cfg.width > cfg.max_width) {
    throw ConfigError("width must be in [1, max width]");
  }
  if (cfg.depth == 0 || cfg.depth > kMaxWindowField) {
    throw ConfigError("depth must be in [1, 65535]");
  }
  if (cfg.bucket_ms <= 0.0 || cfg.window_ms <= 0.0 || cfg.monitor_ms <= 0.0) {
    throw ConfigError("bucket, window and monitor periods must be positive");
  }
  if (cfg.stretch < 0.0) throw ConfigError("stretch must not be negative");
  for (const auto& e : cfg.schedule) {
    if (e.at_s < 0.0 || e.at_s > cfg.duration_s) {
      throw ConfigError("schedule time " + fmt_double(e.at_s) + " s outside the run");
    }
    if (e.width == 0 || e.width > cfg.max_width || e.depth == 0) {
      throw ConfigError("schedule entry at " + fmt_double(e.at_s) + " s has invalid width/depth");
    }
  }
  if (!cfg.schedule.empty() && !is_elastic(cfg.structure)) {
    throw ConfigError("a width/depth schedule needs an elastic structure");
  }
  for (const auto& a : cfg.activity) {
    if (a.at_s < 0.0 || a.at_s > cfg.duration_s) {
      throw ConfigError("activity time " + fmt_double(a.at_s) + " s outside the run");
    }
    if (a.active < 0.0 || a.active > 1.0) throw ConfigError("activity fraction must be in [0, 1]");
  }
  if (!cfg.activity.empty() && cfg.workload != Workload::producer_consumer) {
    throw ConfigError("an activity schedule needs the producer-consumer workload");
  }
  if (cfg.workload == Workload::producer_consumer) {
    if (cfg.threads < 2) throw ConfigError("producer-consumer needs at least 2 threads");
    if (producer_count(cfg) >= cfg.threads) {
      throw ConfigError("producer-consumer needs at least one consumer");
    }
  }
}

Selection choose_config(Structure s, unsigned threads, std::uint64_t k, std::uint32_t max_width) {
  Selection sel;
  std::uint64_t w = std::clamp<std::uint64_t>(2ull * threads, 1, max_width);
  if (!is_elastic(s)) return {1, 1, 0};
  if (is_stack(s)) {
    for (; w > 1; --w) {
      if (bounds::max_stack_depth(w, k) >= kMinStackDepth) break;
    }
    const std::uint64_t d = std::min<std::uint64_t>(bounds::max_stack_depth(w, k), kMaxWindowField);
    sel.width = static_cast<std::uint32_t>(w);
    sel.depth = static_cast<std::uint32_t>(std::max<std::uint64_t>(d, kMinStackDepth));
    sel.bound = bounds::stack_static(sel.width, sel.depth);
  } else {
    w = std::min<std::uint64_t>(w, k + 1);
    const std::uint64_t d =
        std::clamp<std::uint64_t>(bounds::max_queue_depth(w, k), 1, kMaxWindowField);
    sel.width = static_cast<std::uint32_t>(w);
    sel.depth = static_cast<std::uint32_t>(d);
    sel.bound = bounds::queue_window(sel.width, sel.depth);
  }
  return sel;
}

// ---------------------------------------------------------------- pinning

bool pin_current_thread(unsigned index) {
  if (const char* mode = std::getenv("ELASTIC_PIN")) {
    if (std::string_view(mode) == "none") return false;
  }
  cpu_set_t allowed;
  CPU_ZERO(&allowed);
  if (sched_getaffinity(0, sizeof(allowed), &allowed) != 0) return false;
  std::vector<int> cpus;
  for (int c = 0; c < CPU_SETSIZE; ++c) {
    if (CPU_ISSET(c, &allowed)) cpus.push_back(c);
  }
  if (cpus.empty()) return false;
  cpu_set_t one;
  CPU_ZERO(&one);
  CPU_SET(cpus[index % cpus.size()], &one);
  return pthread_setaffinity_np(pthread_self(), sizeof(one), &one) == 0;
}

// -------------------------------------------------------------- aggregate

std::vector<Bucket> aggregate(const std::vector<FlushRecord>& flushes,
                              const std::vector<MonitorSample>& monitor, double end_ms,
                              double bucket_ms, double window_ms) {
  std::vector<Bucket> out;
  if (end_ms <= 0.0) return out;
  std::vector<const FlushRecord*> fl;
  fl.reserve(flushes.size());
  for (const auto& f : flushes) fl.push_back(&f);
  std::sort(fl.begin(), fl.end(), [](auto* a, auto* b) { return a->t_ns < b->t_ns; });
  std::vector<const MonitorSample*> mon;
  mon.reserve(monitor.size());
  for (const auto& m : monitor) mon.push_back(&m);
  std::sort(mon.begin(), mon.end(), [](auto* a, auto* b) { return a->t_ns < b->t_ns; });

  std::size_t lo = 0;
  std::size_t hi = 0;
  std::size_t mi = 0;
  double ops = 0.0;
  double ins = 0.0;
  double busy = 0.0;
  const auto ms = [](std::uint64_t ns) { return static_cast<double>(ns) / 1e6; };
  const auto n_steps = static_cast<std::size_t>(std::floor(end_ms / bucket_ms + 1e-9));
  for (std::size_t i = 1; i <= n_steps; ++i) {
    const double t = static_cast<double>(i) * bucket_ms;
    while (hi < fl.size() && ms(fl[hi]->t_ns) <= t) {
      ops += static_cast<double>(fl[hi]->inserts + fl[hi]->removes + fl[hi]->empties);
      ins += static_cast<double>(fl[hi]->inserts);
      busy += static_cast<double>(fl[hi]->insert_busy_ns);
      ++hi;
    }
    while (lo < hi && ms(fl[lo]->t_ns) <= t - window_ms) {
      ops -= static_cast<double>(fl[lo]->inserts + fl[lo]->removes + fl[lo]->empties);
      ins -= static_cast<double>(fl[lo]->inserts);
      busy -= static_cast<double>(fl[lo]->insert_busy_ns);
      ++lo;
    }
    while (mi < mon.size() && ms(mon[mi]->t_ns) <= t) ++mi;
    Bucket b;
    b.t_ms = t;
    const double span_s = std::min(window_ms, t) / 1e3;
    b.throughput = ops / span_s;
    b.latency_ns = ins > 0.0 ? busy / ins : 0.0;
    if (mi > 0) {
      const MonitorSample& m = *mon[mi - 1];
      b.width_shared = m.width_shared;
      b.window_width = m.window_width;
      b.window_depth = m.window_depth;
      b.active = m.active;
    }
    out.push_back(b);
  }
  return out;
}

// -------------------------------------------------------------------- run

RunRecord run_benchmark(const BenchConfig& in) {
  validate(in);
  BenchConfig cfg = in;
  if (cfg.k) {
    const Selection sel = choose_config(cfg.structure, cfg.threads, *cfg.k, cfg.max_width);
    cfg.width = sel.width;
    cfg.depth = sel.depth;
  }
  const double stretch = effective_stretch(cfg);
  const unsigned producers = producer_count(cfg);
  std::unique_ptr<Target> target = make_target(cfg);

  RunRecord rec;
  rec.meta = {
      {"structure", std::string(to_string(cfg.structure))},
      {"workload", std::string(to_string(cfg.workload))},
      {"mode", std::string(to_string(cfg.mode))},
      {"threads", std::to_string(cfg.threads)},
      {"producers", std::to_string(producers)},
      {"duration_s", fmt_double(cfg.duration_s)},
      {"prefill", std::to_string(cfg.prefill)},
      {"width", std::to_string(cfg.width)},
      {"depth", std::to_string(cfg.depth)},
      {"max_width", std::to_string(cfg.max_width)},
      {"k", cfg.k ? std::to_string(*cfg.k) : std::string("none")},
      {"controller", cfg.controller ? "on" : "off"},
      {"seed", std::to_string(cfg.seed)},
      {"stretch", fmt_double(stretch)},
  };
  {
    std::string s;
    for (const auto& e : cfg.schedule) {
      if (!s.empty()) s += ';';
      s += fmt_double(e.at_s * 1e3) + ":" + std::to_string(e.width) + ":" + std::to_string(e.depth);
    }
    rec.meta.emplace_back("schedule", s);
    std::string a;
    for (const auto& e : cfg.activity) {
      if (!a.empty()) a += ';';
      a += fmt_double(e.at_s * 1e3) + ":" + fmt_double(e.active);
    }
    rec.meta.emplace_back("activity", a);
  }

  // Prefill through a single handle; values below 2^40 are prefill items.
  Tally inserted;
  {
    auto w = target->worker(cfg.seed ^ 0xF111u, std::nullopt);
    for (std::uint64_t i = 0; i < cfg.prefill; ++i) {
      w->insert(i);
      inserted.add(i);
    }
  }

  const unsigned n = cfg.threads;
  std::atomic<bool> go{false};
  std::atomic<bool> stop{false};
  std::atomic<unsigned> finished{0};
  std::atomic<unsigned> active_producers{producers};
  if (!cfg.activity.empty()) {
    std::vector<ActivityEntry> act = cfg.activity;
    std::sort(act.begin(), act.end(), [](auto& a, auto& b) { return a.at_s < b.at_s; });
    if (act.front().at_s <= 0.0) {
      active_producers = static_cast<unsigned>(std::ceil(act.front().active * producers - 1e-9));
    }
  }
  const std::uint64_t quota = cfg.max_ops == 0 ? 0 : (cfg.max_ops + n - 1) / n;

  std::vector<std::vector<FlushRecord>> flush_buf(n);
  std::vector<Tally> ins_tally(n);
  std::vector<Tally> rem_tally(n);
  std::vector<std::uint64_t> empties(n, 0);
  std::vector<char> pinned(n, 0);
  Clock::time_point start;

  std::vector<std::unique_ptr<Worker>> workers;
  workers.reserve(n);
  const std::optional<ControllerConfig> ctl =
      cfg.controller ? std::optional(cfg.controller_cfg) : std::nullopt;
  for (unsigned i = 0; i < n; ++i) {
    workers.push_back(target->worker(mix(cfg.seed * 1315423911u + i), ctl));
  }

  std::vector<std::thread> threads;
  threads.reserve(n);
  for (unsigned i = 0; i < n; ++i) {
    threads.emplace_back([&, i] {
      pinned[i] = pin_current_thread(i) ? 1 : 0;
      Worker& w = *workers[i];
      std::mt19937_64 rng(mix(cfg.seed + 77 * i));
      const bool pc = cfg.workload == Workload::producer_consumer;
      const bool producer = pc && i < producers;
      const bool consumer = pc && !producer;
      std::uint64_t seq = 0;
      const std::uint64_t tag = static_cast<std::uint64_t>(i + 1) << 40;
      FlushRecord chunk;
      chunk.thread = i;
      std::uint64_t chunk_ops = 0;
      std::uint64_t done = 0;
      const auto flush = [&] {
        chunk.t_ns = static_cast<std::uint64_t>(
            std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count() /
            stretch);
        flush_buf[i].push_back(chunk);
        chunk = FlushRecord{};
        chunk.thread = i;
        chunk_ops = 0;
      };
      while (!go.load(std::memory_order_acquire)) std::this_thread::yield();
      while (!stop.load(std::memory_order_relaxed) && (quota == 0 || done < quota)) {
        bool do_insert;
        if (producer) {
          if (i >= active_producers.load(std::memory_order_relaxed)) {
            std::this_thread::sleep_for(std::chrono::microseconds(200));
            continue;
          }
          do_insert = true;
        } else if (consumer) {
          do_insert = false;
        } else {
          do_insert = (rng() & 1) != 0;
        }
        if (do_insert) {
          const std::uint64_t v = tag | seq++;
          if (pc) {
            const auto t0 = Clock::now();
            w.insert(v);
            chunk.insert_busy_ns += static_cast<std::uint64_t>(
                std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count());
          } else {
            w.insert(v);
          }
          ins_tally[i].add(v);
          ++chunk.inserts;
        } else {
          std::uint64_t v = 0;
          if (w.remove(v)) {
            rem_tally[i].add(v);
            ++chunk.removes;
          } else {
            ++chunk.empties;
            ++empties[i];
          }
        }
        ++done;
        if (++chunk_ops == kFlushEvery) flush();
      }
      if (chunk_ops > 0) flush();
      finished.fetch_add(1, std::memory_order_acq_rel);
    });
  }

  // Monitor: width target and window, sampled periodically.
  std::atomic<bool> monitor_stop{false};
  std::vector<MonitorSample> monitor;
  std::thread monitor_thread([&] {
    while (!go.load(std::memory_order_acquire)) std::this_thread::yield();
    const auto period = std::chrono::duration<double, std::milli>(cfg.monitor_ms * stretch);
    auto next = start;
    while (!monitor_stop.load(std::memory_order_acquire)) {
      MonitorSample m;
      m.t_ns = static_cast<std::uint64_t>(
          std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count() /
          stretch);
      m.width_shared = target->width_shared();
      m.depth_shared = target->depth_shared();
      const WindowView tv = target->tail();
      m.window_width = tv.width;
      m.window_depth = tv.depth;
      m.active = producers == 0 ? 1.0
                                : static_cast<double>(active_producers.load()) /
                                      static_cast<double>(producers);
      monitor.push_back(m);
      next += std::chrono::duration_cast<Clock::duration>(period);
      std::this_thread::sleep_until(next);
    }
  });

  // Timeline of schedule and activity changes.
  struct Event {
    double at_s;
    bool reconfig;
    ScheduleEntry s;
    double active;
  };
  std::vector<Event> events;
  for (const auto& s : cfg.schedule) events.push_back({s.at_s, true, s, 0.0});
  for (const auto& a : cfg.activity) events.push_back({a.at_s, false, {}, a.active});
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.at_s < b.at_s; });

  start = Clock::now();
  go.store(true, std::memory_order_release);
  const auto at = [&](double s) {
    return start + std::chrono::duration_cast<Clock::duration>(
                       std::chrono::duration<double>(s * stretch));
  };
  const auto all_done = [&] { return finished.load(std::memory_order_acquire) == n; };
  const auto wait_until = [&](Clock::time_point tp) {
    while (Clock::now() < tp && !all_done()) {
      std::this_thread::sleep_until(std::min(tp, Clock::now() + std::chrono::milliseconds(1)));
    }
  };
  for (const Event& e : events) {
    wait_until(at(e.at_s));
    if (all_done()) break;
    if (e.reconfig) {
      target->set_width(e.s.width);
      target->set_depth(e.s.depth);
      rec.schedule.push_back({e.at_s * 1e3, e.s.width, e.s.depth, std::nullopt});
    } else {
      active_producers.store(static_cast<unsigned>(std::ceil(e.active * producers - 1e-9)));
    }
  }
  wait_until(at(cfg.duration_s));
  stop.store(true, std::memory_order_relaxed);
  for (auto& t : threads) t.join();
  const double elapsed_real =
      std::chrono::duration<double>(Clock::now() - start).count();
  monitor_stop.store(true, std::memory_order_release);
  monitor_thread.join();

  rec.elapsed_s = elapsed_real / stretch;
  rec.per_thread_ops.resize(n);
  Tally removed;
  for (unsigned i = 0; i < n; ++i) {
    for (const auto& f : flush_buf[i]) {
      rec.flushes.push_back(f);
      rec.per_thread_ops[i] += f.inserts + f.removes + f.empties;
      rec.inserts += f.inserts;
      rec.removes += f.removes;
      rec.empties += f.empties;
    }
    inserted.merge(ins_tally[i]);
    removed.merge(rem_tally[i]);
    rec.pinned = rec.pinned || pinned[i] != 0;
  }
  rec.total_ops = rec.inserts + rec.removes + rec.empties;
  rec.throughput = rec.elapsed_s > 0.0 ? static_cast<double>(rec.total_ops) / rec.elapsed_s : 0.0;
  rec.monitor = std::move(monitor);
  rec.buckets = aggregate(rec.flushes, rec.monitor, rec.elapsed_s * 1e3, cfg.bucket_ms,
                          cfg.window_ms);
  for (auto& ev : rec.schedule) {
    for (const auto& m : rec.monitor) {
      if (static_cast<double>(m.t_ns) / 1e6 >= ev.at_ms && m.window_width == ev.width &&
          m.window_depth == ev.depth) {
        ev.observed_ms = static_cast<double>(m.t_ns) / 1e6;
        break;
      }
    }
  }

  // Drain and check that every inserted value came out exactly once.
  {
    auto w = target->worker(cfg.seed ^ 0xD4A1u, std::nullopt);
    std::uint64_t v = 0;
    while (w->remove(v)) {
      removed.add(v);
      ++rec.drained;
    }
  }
  rec.inserted_total = inserted.count;
  rec.removed_total = removed.count;
  rec.multiset_ok = inserted == removed;
  rec.final_head = target->head();
  rec.final_tail = target->tail();

  if (oracle::OracleCore* o = target->oracle()) {
    OracleOutcome out;
    out.violations = o->violations();
    out.samples = o->sample_count();
    out.max_rank_error = o->max_rank_error();
    out.mean_rank_error = o->mean_rank_error();
    for (std::size_t c = 0; c < static_cast<std::size_t>(oracle::CheckId::count_); ++c) {
      const auto id = static_cast<oracle::CheckId>(c);
      out.checks.emplace_back(std::string(oracle::check_name(id)), o->tally(id));
    }
    out.messages = o->messages();
    out.rank_samples = o->samples();
    for (auto& s : out.rank_samples) {
      s.timestamp_ns = static_cast<std::uint64_t>(static_cast<double>(s.timestamp_ns) / stretch);
    }
    rec.oracle = std::move(out);
  }
  EpochDomain::global().drain();
  return rec;
}

// -------------------------------------------------------------------- csv

namespace {
constexpr std::string_view kHeader =
    "t_ms,throughput,latency_ns,width_shared,window_width,window_depth,active";
}

void emit_csv(const RunRecord& record, std::ostream& out) {
  for (const auto& [k, v] : record.meta) out << "# " << k << '=' << v << '\n';
  out << kHeader << '\n';
  out << std::setprecision(17);
  for (const auto& b : record.buckets) {
    out << b.t_ms << ',' << b.throughput << ',' << b.latency_ns << ',' << b.width_shared << ','
        << b.window_width << ',' << b.window_depth << ',' << b.active << '\n';
  }
}

void emit_csv(const RunRecord& record, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  emit_csv(record, out);
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

RunRecord parse_csv(std::istream& in) {
  RunRecord rec;
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::size_t start = line.find_first_not_of(" ", 1);
      const std::size_t eq = line.find('=');
      if (start == std::string::npos || eq == std::string::npos) continue;
      rec.meta.emplace_back(line.substr(start, eq - start), line.substr(eq + 1));
      continue;
    }
    if (!header) {
      if (line != kHeader) {
        throw std::runtime_error("line " + std::to_string(lineno) + ": unexpected header '" +
                                 line + "'");
      }
      header = true;
      continue;
    }
    Bucket b;
    char c1 = 0, c2 = 0, c3 = 0, c4 = 0, c5 = 0, c6 = 0;
    std::istringstream is(line);
    is >> b.t_ms >> c1 >> b.throughput >> c2 >> b.latency_ns >> c3 >> b.width_shared >> c4 >>
        b.window_width >> c5 >> b.window_depth >> c6 >> b.active;
    if (!is || c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',' || c5 != ',' || c6 != ',') {
      throw std::runtime_error("line " + std::to_string(lineno) + ": malformed row '" + line +
                               "'");
    }
    rec.buckets.push_back(b);
  }
  if (!header) throw std::runtime_error("missing header row");
  return rec;
}

RunRecord parse_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return parse_csv(in);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace elastic::bench
