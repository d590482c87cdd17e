#include "elastic/oracle.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "elastic/bounds.hpp"

namespace elastic::oracle {

namespace {

constexpr std::string_view kCheckNames[] = {
    "divergence",     "audit",          "rank_bound",     "static_bound",
    "lateness",       "window_rows",    "lateral_ahead",  "single_width",
    "head_behind_tail", "monotone_shift", "lateral_cover", "lower_envelope",
    "upper_envelope", "substack_envelope", "empty_return",
};
static_assert(std::size(kCheckNames) == static_cast<std::size_t>(CheckId::count_));

std::string describe(const StackWindow& w) {
  std::ostringstream os;
  os << "{max=" << w.max << " depth=" << w.depth << " push_width=" << w.push_width
     << " pop_width=" << w.pop_width << " last_push_width=" << w.last_push_width
     << (w.last_shift == ShiftDir::up ? " up" : " down") << " version=" << w.version << "}";
  return os.str();
}

}  // namespace

std::string_view check_name(CheckId id) { return kCheckNames[static_cast<std::size_t>(id)]; }

// ---------------------------------------------------------------- SeqIndex

void SeqIndex::grow(std::uint64_t need) {
  std::uint64_t cap = cap_ == 0 ? 1024 : cap_;
  while (cap <= need) cap *= 2;
  std::vector<std::uint32_t> cnt(2 * cap, 0);
  std::vector<std::int64_t> mx(2 * cap, -1);
  for (std::uint64_t i = 0; i < cap_; ++i) {
    cnt[cap + i] = cnt_[cap_ + i];
    mx[cap + i] = max_[cap_ + i];
  }
  for (std::uint64_t i = cap - 1; i >= 1; --i) {
    cnt[i] = cnt[2 * i] + cnt[2 * i + 1];
    mx[i] = std::max(mx[2 * i], mx[2 * i + 1]);
  }
  cap_ = cap;
  cnt_ = std::move(cnt);
  max_ = std::move(mx);
}

void SeqIndex::insert(std::uint64_t seq, std::uint64_t row) {
  if (seq >= cap_) grow(seq);
  std::uint64_t i = cap_ + seq;
  if (cnt_[i] == 0) ++size_;
  cnt_[i] = 1;
  max_[i] = static_cast<std::int64_t>(row);
  for (i /= 2; i >= 1; i /= 2) {
    cnt_[i] = cnt_[2 * i] + cnt_[2 * i + 1];
    max_[i] = std::max(max_[2 * i], max_[2 * i + 1]);
  }
}

void SeqIndex::erase(std::uint64_t seq) {
  if (seq >= cap_) return;
  std::uint64_t i = cap_ + seq;
  if (cnt_[i] == 0) return;
  --size_;
  cnt_[i] = 0;
  max_[i] = -1;
  for (i /= 2; i >= 1; i /= 2) {
    cnt_[i] = cnt_[2 * i] + cnt_[2 * i + 1];
    max_[i] = std::max(max_[2 * i], max_[2 * i + 1]);
  }
}

std::uint64_t SeqIndex::count(std::uint64_t lo, std::uint64_t hi) const {
  hi = std::min(hi, cap_);
  std::uint64_t total = 0;
  for (std::uint64_t l = lo + cap_, r = hi + cap_; l < r; l /= 2, r /= 2) {
    if (l & 1) total += cnt_[l++];
    if (r & 1) total += cnt_[--r];
  }
  return total;
}

std::optional<std::uint64_t> SeqIndex::max_row(std::uint64_t lo, std::uint64_t hi) const {
  hi = std::min(hi, cap_);
  std::int64_t best = -1;
  for (std::uint64_t l = lo + cap_, r = hi + cap_; l < r; l /= 2, r /= 2) {
    if (l & 1) best = std::max(best, max_[l++]);
    if (r & 1) best = std::max(best, max_[--r]);
  }
  if (best < 0) return std::nullopt;
  return static_cast<std::uint64_t>(best);
}

// -------------------------------------------------------------- OracleCore

OracleCore::OracleCore(Order order, OracleOptions opts)
    : opts_(opts), order_(order), start_(std::chrono::steady_clock::now()) {}

std::uint64_t OracleCore::now_ns() const {
  return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                        std::chrono::steady_clock::now() - start_)
                                        .count());
}

bool OracleCore::check(CheckId id, bool ok) {
  auto& t = tallies_[static_cast<std::size_t>(id)];
  ++t.evaluated;
  if (!ok) ++t.failed;
  return ok;
}

void OracleCore::note(CheckId id, const std::string& detail) {
  if (messages_.size() < opts_.max_messages) {
    messages_.push_back(std::string(check_name(id)) + ": " + detail);
  }
}

std::uint64_t OracleCore::violations() const {
  std::uint64_t total = 0;
  for (const auto& t : tallies_) total += t.failed;
  return total;
}

OracleCore::Item* OracleCore::admit(std::uint64_t value, std::uint32_t lane, std::uint64_t row) {
  ++steps_;
  const std::uint64_t seq = next_seq_++;
  auto [it, fresh] = items_.try_emplace(value, Item{seq, lane, row, {}, {}, 0});
  if (!check(CheckId::divergence, fresh, [&] {
        return "value " + std::to_string(value) + " inserted while already resident";
      })) {
    return nullptr;
  }
  index_.insert(seq, row);
  ++inserted_;
  return &it->second;
}

std::optional<OracleCore::Item> OracleCore::release(std::uint64_t value, std::uint32_t lane,
                                                    std::uint64_t row,
                                                    std::uint64_t& rank_error) {
  ++steps_;
  auto it = items_.find(value);
  if (!check(CheckId::divergence, it != items_.end(), [&] {
        return "value " + std::to_string(value) + " removed but not resident";
      })) {
    return std::nullopt;
  }
  Item item = it->second;
  check(CheckId::divergence, item.lane == lane && item.row == row, [&] {
    std::ostringstream os;
    os << "value " << value << " removed from lane " << lane << " row " << row
       << " but was inserted at lane " << item.lane << " row " << item.row;
    return os.str();
  });
  rank_error = order_ == Order::fifo ? index_.count(0, item.seq)
                                     : index_.count(item.seq + 1, next_seq_);
  index_.erase(item.seq);
  items_.erase(it);
  ++removed_;
  max_rank_ = std::max(max_rank_, rank_error);
  return item;
}

void OracleCore::sample(std::uint64_t rank, std::uint64_t bound, std::uint32_t width,
                        std::uint32_t depth) {
  ++sample_count_;
  rank_sum_ += static_cast<double>(rank);
  if (!opts_.keep_samples || samples_.size() >= opts_.max_samples) return;
  samples_.push_back({removed_ - 1, now_ns(), rank, bound, width, depth});
}

void OracleCore::audit(const std::vector<LiveItem>& live) {
  bool ok = live.size() == items_.size();
  std::string detail;
  if (!ok) {
    detail = "live holds " + std::to_string(live.size()) + " items, shadow " +
             std::to_string(items_.size());
  }
  for (const LiveItem& li : live) {
    if (!ok) break;
    auto it = items_.find(li.value);
    if (it == items_.end() || it->second.lane != li.lane || it->second.row != li.row) {
      ok = false;
      detail = "live value " + std::to_string(li.value) + " missing or misplaced in shadow";
    }
  }
  check(CheckId::audit, ok, [&] { return detail; });
}

void OracleCore::on_empty() {
  check(CheckId::empty_return, items_.empty(), [&] {
    return "empty result while " + std::to_string(items_.size()) + " items are resident";
  });
}

std::vector<LiveItem> OracleCore::shadow_contents() const {
  std::vector<LiveItem> out;
  out.reserve(items_.size());
  for (const auto& [v, item] : items_) out.push_back({v, item.lane, item.row});
  return out;
}

// ------------------------------------------------------------- QueueOracle

QueueOracle::QueueOracle(Design design, OracleOptions opts)
    : OracleCore(Order::fifo, opts), design_(design) {}

void QueueOracle::on_insert(std::uint64_t value, std::uint32_t lane, std::uint64_t row,
                            const WindowView& tail) {
  if (Item* item = admit(value, lane, row)) item->window = tail;
}

void QueueOracle::on_remove(std::uint64_t value, std::uint32_t lane, std::uint64_t row,
                            const WindowView& head) {
  std::uint64_t rank = 0;
  const auto item = release(value, lane, row, rank);
  if (!item) return;

  std::uint64_t bound = 0;
  switch (design_) {
    case Design::strict:
      bound = 0;
      break;
    case Design::law:
      bound = bounds::queue_window(head.width, head.depth);
      check(CheckId::window_rows, row > head.min() && row <= head.max, [&] {
        return "row " + std::to_string(row) + " outside head window (" +
               std::to_string(head.min()) + ", " + std::to_string(head.max) + "]";
      });
      break;
    case Design::lpw:
      bound = bounds::lpw_queue_item(item->window.width, item->window.depth, head.depth);
      check(CheckId::window_rows, row <= head.max, [&] {
        return "row " + std::to_string(row) + " above head max " + std::to_string(head.max);
      });
      if (row > head.min()) {
        check(CheckId::single_width, item->window.width == head.width, [&] {
          return "row " + std::to_string(row) + " enqueued under width " +
                 std::to_string(item->window.width) + " but head window width is " +
                 std::to_string(head.width);
        });
      }
      break;
  }
  check(CheckId::rank_bound, rank <= bound, [&] {
    std::ostringstream os;
    os << "value " << value << " rank error " << rank << " exceeds bound " << bound
       << " (lane " << lane << ", row " << row << ", head max " << head.max << " depth "
       << head.depth << " width " << head.width << ", enqueue width " << item->window.width
       << " depth " << item->window.depth << ")";
    return os.str();
  });

  if (design_ == Design::law) {
    if (rank == 0) {
      streak_ = 0;
      streak_bound_ = 0;
    } else {
      ++streak_;
      streak_bound_ = std::max(streak_bound_, bound);
      check(CheckId::lateness, streak_ <= streak_bound_, [&] {
        return std::to_string(streak_) + " consecutive dequeues skipped the oldest item";
      });
    }
  }
  sample(rank, bound, head.width, head.depth);
}

void QueueOracle::on_lateral_append(std::uint64_t row, std::uint64_t head_max) {
  check(CheckId::lateral_ahead, head_max < row, [&] {
    return "width record at row " + std::to_string(row) + " appended while head max is " +
           std::to_string(head_max);
  });
}

void QueueOracle::on_tail_shift(const WindowView& old_window, const WindowView& new_window) {
  check(CheckId::monotone_shift, new_window.max > old_window.max, [&] {
    return "tail max " + std::to_string(old_window.max) + " -> " + std::to_string(new_window.max);
  });
}

void QueueOracle::on_head_shift(const WindowView& old_window, const WindowView& new_window,
                                std::uint64_t tail_max) {
  check(CheckId::monotone_shift,
        new_window.max > old_window.max && new_window.depth == new_window.max - old_window.max,
        [&] {
          return "head max " + std::to_string(old_window.max) + " -> " +
                 std::to_string(new_window.max) + " depth " + std::to_string(new_window.depth);
        });
  check(CheckId::head_behind_tail, new_window.max <= tail_max, [&] {
    return "head max " + std::to_string(new_window.max) + " passed tail max " +
           std::to_string(tail_max);
  });
}

// ------------------------------------------------------------- StackOracle

StackOracle::StackOracle(Design design, OracleOptions opts)
    : OracleCore(Order::lifo, opts), design_(design) {}

void StackOracle::on_start(const StackWindow& initial) {
  history_.clear();
  history_.push_back(initial);
  hist_width_.push(0, initial.push_width);
  hist_depth_.push(0, initial.depth);
}

std::uint32_t StackOracle::width_bound(const std::vector<LateralEntry>& lateral,
                                       std::uint32_t push_width, std::uint32_t row) {
  if (lateral.empty() || row > lateral.front().row) return push_width;
  // Rows strictly decrease top-down; entry i covers (row_{i+1}, row_i].
  for (std::size_t i = 0; i < lateral.size(); ++i) {
    const bool below_next = i + 1 == lateral.size() || lateral[i + 1].row < row;
    if (row <= lateral[i].row && below_next) return lateral[i].width;
  }
  return push_width;
}

void StackOracle::on_push(std::uint64_t value, std::uint32_t lane, std::uint32_t row,
                          const StackWindow& window) {
  Item* item = admit(value, lane, row);
  if (item == nullptr) return;
  item->stack = window;
  item->window = window.push_view();
  item->history = history_.empty() ? 0 : history_.size() - 1;
  pushed_rows_.push(item->seq, row);
}

std::string StackOracle::envelope_trace(std::uint64_t after_seq, std::uint64_t row,
                                        std::uint64_t from_history, std::uint32_t popped_lane) const {
  std::string out = "; popped lane " + std::to_string(popped_lane);
  std::uint64_t start = from_history;
  for (const auto& [v, it] : residents()) {
    if (it.seq > after_seq && it.row == row) {
      out += "; resident lane " + std::to_string(it.lane) + " pushed in " + describe(it.stack);
      start = std::min<std::uint64_t>(start, it.history);
    }
  }
  for (std::size_t h = start; h < history_.size() && h < start + 40; ++h)
    out += "\n    " + describe(history_[h]);
  return out;
}

void StackOracle::on_pop(std::uint64_t value, std::uint32_t lane, std::uint32_t row,
                         const StackWindow& window) {
  std::uint64_t rank = 0;
  const auto item = release(value, lane, row, rank);
  if (!item) return;
  if (design_ == Design::strict) {
    check(CheckId::rank_bound, rank == 0, [&] {
      return "strict stack popped value " + std::to_string(value) + " at rank " +
             std::to_string(rank);
    });
    sample(rank, 0, 1, 1);
    return;
  }

  const StackWindow& pushed = item->stack;
  std::int64_t max_width = std::max<std::int64_t>(pushed.push_width, window.push_width);
  std::int64_t max_depth = std::max<std::int64_t>(pushed.depth, window.depth);
  if (auto w = hist_width_.query(item->history)) max_width = std::max(max_width, *w);
  if (auto d = hist_depth_.query(item->history)) max_depth = std::max(max_depth, *d);
  const std::int64_t max_shift = max_depth / 2;

  const std::uint64_t bound = bounds::stack_elastic(max_width, max_depth);
  check(CheckId::rank_bound, rank <= bound, [&] {
    std::ostringstream os;
    os << "value " << value << " rank error " << rank << " exceeds bound " << bound
       << " (max width " << max_width << ", max depth " << max_depth << ")";
    return os.str();
  });

  if (opts_.static_stack) {
    const std::uint64_t fixed = bounds::stack_static(pushed.push_width, pushed.depth);
    check(CheckId::static_bound, rank <= fixed, [&] {
      return "value " + std::to_string(value) + " rank error " + std::to_string(rank) +
             " exceeds fixed-configuration bound " + std::to_string(fixed);
    });
  }

  // Rows of items pushed after this one, popped or not.
  if (auto lowest = pushed_rows_.query(item->seq + 1)) {
    const std::int64_t floor = static_cast<std::int64_t>(pushed.min()) - max_shift;
    check(CheckId::lower_envelope, *lowest >= floor, [&] {
      return "row " + std::to_string(*lowest) + " pushed during lifetime of value " +
             std::to_string(value) + " is below " + std::to_string(floor);
    });
  }
  // Rows of items pushed after this one that are still resident.
  if (auto highest = index().max_row(item->seq + 1, next_seq())) {
    const std::uint64_t ceiling = window.max + static_cast<std::uint64_t>(max_shift);
    check(CheckId::upper_envelope, *highest <= ceiling, [&] {
      return "resident row " + std::to_string(*highest) + " above " + std::to_string(ceiling) +
             " when popping value " + std::to_string(value) + " in window " + describe(window) +
             envelope_trace(item->seq, *highest, item->history, lane);
    });
  }
  sample(rank, bound, window.pop_width, window.depth);
}

void StackOracle::check_envelope(const StackWindow& w,
                                 const std::vector<std::uint32_t>& lane_rows) {
  const std::int64_t lo = w.min();
  const std::int64_t hi = w.max;
  const std::int64_t s = w.shift();
  bool lower_ok = true;
  bool upper_ok = true;
  for (std::size_t j = 0; j < w.push_width && j < lane_rows.size(); ++j) {
    const std::int64_t n = lane_rows[j];
    lower_ok = lower_ok && lo - s <= n && n <= hi;
    upper_ok = upper_ok && lo <= n && n <= hi + s;
  }
  check(CheckId::substack_envelope, lower_ok || upper_ok, [&] {
    std::ostringstream os;
    os << "lane rows outside both envelopes of window " << describe(w) << ":";
    for (std::size_t j = 0; j < w.push_width && j < lane_rows.size(); ++j) os << ' ' << lane_rows[j];
    return os.str();
  });
}

void StackOracle::on_shift(const StackWindow& old_window, const StackWindow& new_window,
                           const std::vector<LateralEntry>& lateral,
                           const std::vector<std::uint32_t>& lane_rows) {
  if (design_ == Design::elastic) {
    bool ok = true;
    std::string detail;
    for (const auto& [value, item] : residents()) {
      const std::uint32_t bound =
          width_bound(lateral, old_window.push_width, static_cast<std::uint32_t>(item.row));
      if (bound < item.lane + 1) {
        ok = false;
        detail = "value " + std::to_string(value) + " at lane " + std::to_string(item.lane) +
                 " row " + std::to_string(item.row) + " exceeds width bound " +
                 std::to_string(bound) + " before shift from " + describe(old_window);
        detail += "; side records:";
        for (const auto& e : lateral) {
          detail += " (" + std::to_string(e.row) + ", " + std::to_string(e.width) + ")";
        }
        const std::size_t from = history_.size() > 6 ? history_.size() - 6 : 0;
        for (std::size_t h = from; h < history_.size(); ++h) detail += "\n    " + describe(history_[h]);
        break;
      }
    }
    check(CheckId::lateral_cover, ok, [&] { return detail; });
  }
  if (opts_.static_stack) {
    check_envelope(old_window, lane_rows);
    check_envelope(new_window, lane_rows);
  }
  history_.push_back(new_window);
  hist_width_.push(history_.size() - 1, new_window.push_width);
  hist_depth_.push(history_.size() - 1, new_window.depth);
}

// ----------------------------------------------------------------- Summary

Summary summarize(const std::vector<RankSample>& samples, double window_ms, double step_ms,
                  double compress) {
  Summary s;
  if (samples.empty()) return s;
  s.count = samples.size();
  double total = 0.0;
  for (const auto& x : samples) {
    total += static_cast<double>(x.rank_error);
    s.max = std::max(s.max, x.rank_error);
    if (x.rank_error > x.bound_k) ++s.violations;
  }
  s.mean = total / static_cast<double>(s.count);

  std::vector<const RankSample*> ordered;
  ordered.reserve(samples.size());
  for (const auto& x : samples) ordered.push_back(&x);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](auto* a, auto* b) { return a->timestamp_ns < b->timestamp_ns; });
  auto t_ms = [&](const RankSample* x) {
    return static_cast<double>(x->timestamp_ns) / 1e6 / compress;
  };
  const double end = t_ms(ordered.back());
  std::size_t lo = 0;
  std::size_t hi = 0;
  double sum_rank = 0.0;
  double sum_bound = 0.0;
  for (double t = step_ms; t < end + step_ms; t += step_ms) {
    while (hi < ordered.size() && t_ms(ordered[hi]) < t) {
      sum_rank += static_cast<double>(ordered[hi]->rank_error);
      sum_bound += static_cast<double>(ordered[hi]->bound_k);
      ++hi;
    }
    while (lo < hi && t_ms(ordered[lo]) < t - window_ms) {
      sum_rank -= static_cast<double>(ordered[lo]->rank_error);
      sum_bound -= static_cast<double>(ordered[lo]->bound_k);
      ++lo;
    }
    const std::uint64_t n = hi - lo;
    if (n == 0) {
      s.series.push_back({t, 0.0, 0.0, 0});
    } else {
      s.series.push_back({t, sum_rank / static_cast<double>(n), sum_bound / static_cast<double>(n), n});
    }
  }
  return s;
}

void write_samples_csv(const std::filesystem::path& path, const std::vector<RankSample>& samples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "timestamp_ns,op,rank_error,bound_k,width,depth\n";
  for (const auto& x : samples) {
    out << x.timestamp_ns << ',' << x.op_index << ',' << x.rank_error << ',' << x.bound_k << ','
        << x.width << ',' << x.depth << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<RankSample> read_samples_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<RankSample> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    RankSample x;
    char c = 0;
    std::istringstream is(line);
    is >> x.timestamp_ns >> c >> x.op_index >> c >> x.rank_error >> c >> x.bound_k >> c >>
        x.width >> c >> x.depth;
    if (!is) throw std::runtime_error("malformed sample row in " + path.string() + ": " + line);
    out.push_back(x);
  }
  return out;
}

}  // namespace elastic::oracle
