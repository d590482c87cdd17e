#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "elastic/observer.hpp"
#include "elastic/window.hpp"

namespace elastic::oracle {

struct RankSample {
  std::uint64_t op_index = 0;
  std::uint64_t timestamp_ns = 0;
  std::uint64_t rank_error = 0;
  std::uint64_t bound_k = 0;
  std::uint32_t width = 0;
  std::uint32_t depth = 0;
};

/// Every assertion the oracle evaluates. `rank_bound` is the headline
/// per-item bound of whichever design is observed.
enum class CheckId : std::size_t {
  divergence,        // shadow and live structure disagree
  audit,             // full shadow/live multiset comparison
  rank_bound,        // rank error <= per-item bound
  static_bound,      // stack rank error <= fixed-configuration bound
  lateness,          // consecutive removals that skip the oldest item
  window_rows,       // removed queue item lies inside its window
  lateral_ahead,     // head max < row of an appended width record
  single_width,      // one width per head window
  head_behind_tail,  // head max never exceeds tail max
  monotone_shift,    // window max strictly increases on queue shifts
  lateral_cover,     // stack side structure bounds every resident lane
  lower_envelope,    // stack rows pushed during an item's lifetime
  upper_envelope,    // stack rows still resident at an item's removal
  substack_envelope, // fixed-configuration lane size envelope
  empty_return,      // an empty result coincides with an empty shadow
  count_
};

std::string_view check_name(CheckId id);

struct CheckTally {
  std::uint64_t evaluated = 0;
  std::uint64_t failed = 0;
};

struct OracleOptions {
  /// Full shadow/live audit every N serialized steps (0 disables).
  std::uint64_t audit_every = 0;
  /// Enables the fixed-configuration stack checks.
  bool static_stack = false;
  std::size_t max_messages = 16;
  bool keep_samples = true;
  /// Samples past this count are tallied but not stored.
  std::size_t max_samples = std::size_t{1} << 22;
};

/// Seq-indexed view of resident items: counts and highest row over
/// insertion-sequence ranges.
class SeqIndex {
 public:
  void insert(std::uint64_t seq, std::uint64_t row);
  void erase(std::uint64_t seq);
  std::uint64_t count(std::uint64_t lo, std::uint64_t hi) const;  // [lo, hi)
  std::optional<std::uint64_t> max_row(std::uint64_t lo, std::uint64_t hi) const;
  std::uint64_t size() const { return size_; }

 private:
  void grow(std::uint64_t need);
  std::uint64_t cap_ = 0;
  std::uint64_t size_ = 0;
  std::vector<std::uint32_t> cnt_;
  std::vector<std::int64_t> max_;
};

/// Extremum of an append-only series over suffixes [from, end).
template <typename Better>
class SuffixExtremum {
 public:
  void push(std::uint64_t index, std::int64_t value) {
    while (!stack_.empty() && !Better{}(stack_.back().value, value)) stack_.pop_back();
    stack_.push_back({index, value});
  }
  std::optional<std::int64_t> query(std::uint64_t from) const {
    std::size_t lo = 0;
    std::size_t hi = stack_.size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (stack_[mid].index < from) lo = mid + 1; else hi = mid;
    }
    if (lo == stack_.size()) return std::nullopt;
    return stack_[lo].value;
  }

 private:
  struct Entry {
    std::uint64_t index;
    std::int64_t value;
  };
  std::vector<Entry> stack_;
};

struct Greater {
  bool operator()(std::int64_t a, std::int64_t b) const { return a > b; }
};
struct Less {
  bool operator()(std::int64_t a, std::int64_t b) const { return a < b; }
};
using SuffixMax = SuffixExtremum<Greater>;
using SuffixMin = SuffixExtremum<Less>;

/// Serialization lock, sequential shadow, and check bookkeeping shared by
/// the queue and stack oracles. Every `on_*` hook must run under the lock
/// returned by `serialize()`.
class OracleCore {
 public:
  enum class Order { fifo, lifo };

  OracleCore(Order order, OracleOptions opts);
  virtual ~OracleCore() = default;

  static constexpr bool enabled = true;

  std::unique_lock<std::mutex> serialize() { return std::unique_lock(mu_); }

  /// True once every `audit_every` serialized mutations.
  bool audit_due() const { return opts_.audit_every != 0 && steps_ % opts_.audit_every == 0; }
  void audit(const std::vector<LiveItem>& live);

  const std::vector<RankSample>& samples() const { return samples_; }
  const CheckTally& tally(CheckId id) const { return tallies_[static_cast<std::size_t>(id)]; }
  std::uint64_t violations() const;
  std::vector<std::string> messages() const { return messages_; }
  std::uint64_t inserted() const { return inserted_; }
  std::uint64_t removed() const { return removed_; }
  std::uint64_t resident() const { return index_.size(); }
  std::uint64_t max_rank_error() const { return max_rank_; }
  /// Rank samples taken, stored or not.
  std::uint64_t sample_count() const { return sample_count_; }
  double mean_rank_error() const {
    return sample_count_ == 0 ? 0.0 : rank_sum_ / static_cast<double>(sample_count_);
  }
  const OracleOptions& options() const { return opts_; }

  /// Called under the lock at the instant an empty result is confirmed.
  void on_empty();

  /// Residents as (value, lane, row), for end-of-run comparisons.
  std::vector<LiveItem> shadow_contents() const;

 protected:
  struct Item {
    std::uint64_t seq;
    std::uint32_t lane;
    std::uint64_t row;
    WindowView window;       // window of the inserting thread
    StackWindow stack;       // stack only
    std::uint64_t history;   // stack only: first relevant history entry
  };

  /// Registers a fresh value; returns nullptr after flagging divergence.
  Item* admit(std::uint64_t value, std::uint32_t lane, std::uint64_t row);
  /// Removes a resident value, computing its rank error; nullopt after
  /// flagging divergence.
  std::optional<Item> release(std::uint64_t value, std::uint32_t lane, std::uint64_t row,
                              std::uint64_t& rank_error);

  bool check(CheckId id, bool ok);
  template <typename Detail>
  bool check(CheckId id, bool ok, Detail&& detail) {
    if (!check(id, ok)) {
      note(id, detail());
      return false;
    }
    return true;
  }
  void note(CheckId id, const std::string& detail);
  void sample(std::uint64_t rank, std::uint64_t bound, std::uint32_t width, std::uint32_t depth);
  std::uint64_t now_ns() const;

  const std::unordered_map<std::uint64_t, Item>& residents() const { return items_; }
  const SeqIndex& index() const { return index_; }
  std::uint64_t next_seq() const { return next_seq_; }

  OracleOptions opts_;

 private:
  Order order_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point start_;
  std::unordered_map<std::uint64_t, Item> items_;
  SeqIndex index_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t steps_ = 0;
  std::uint64_t inserted_ = 0;
  std::uint64_t removed_ = 0;
  std::uint64_t max_rank_ = 0;
  std::uint64_t sample_count_ = 0;
  double rank_sum_ = 0.0;
  std::vector<RankSample> samples_;
  std::array<CheckTally, static_cast<std::size_t>(CheckId::count_)> tallies_{};
  std::vector<std::string> messages_;
};

/// Observer for the FIFO designs.
class QueueOracle : public OracleCore {
 public:
  enum class Design {
    strict,   // single-lane baseline: every rank error must be 0
    law,      // bound from the dequeuer's window
    lpw,      // bound from the item's enqueue and dequeue windows
  };

  explicit QueueOracle(Design design, OracleOptions opts = {});

  void on_insert(std::uint64_t value, std::uint32_t lane, std::uint64_t row,
                 const WindowView& tail);
  void on_remove(std::uint64_t value, std::uint32_t lane, std::uint64_t row,
                 const WindowView& head);
  void on_lateral_append(std::uint64_t row, std::uint64_t head_max);
  void on_tail_shift(const WindowView& old_window, const WindowView& new_window);
  void on_head_shift(const WindowView& old_window, const WindowView& new_window,
                     std::uint64_t tail_max);

  Design design() const { return design_; }

 private:
  Design design_;
  std::uint64_t streak_ = 0;
  std::uint64_t streak_bound_ = 0;
};

/// Observer for the LIFO designs.
class StackOracle : public OracleCore {
 public:
  enum class Design { strict, elastic };

  explicit StackOracle(Design design, OracleOptions opts = {});

  void on_start(const StackWindow& initial);
  void on_push(std::uint64_t value, std::uint32_t lane, std::uint32_t row,
               const StackWindow& window);
  void on_pop(std::uint64_t value, std::uint32_t lane, std::uint32_t row,
              const StackWindow& window);
  /// Runs right after a successful window exchange; the lanes and the side
  /// structure are unchanged since the instant before it.
  void on_shift(const StackWindow& old_window, const StackWindow& new_window,
                const std::vector<LateralEntry>& lateral,
                const std::vector<std::uint32_t>& lane_rows);

  /// Width bound of `row` under `lateral` (top-down) and `push_width`.
  static std::uint32_t width_bound(const std::vector<LateralEntry>& lateral,
                                   std::uint32_t push_width, std::uint32_t row);

 private:
  void check_envelope(const StackWindow& w, const std::vector<std::uint32_t>& lane_rows);
  std::string envelope_trace(std::uint64_t after_seq, std::uint64_t row, std::uint64_t from_history,
                             std::uint32_t popped_lane) const;

  Design design_;
  std::vector<StackWindow> history_;
  SuffixMax hist_width_;
  SuffixMax hist_depth_;
  SuffixMin pushed_rows_;
};

struct SeriesPoint {
  double t_ms;
  double mean_rank_error;
  double mean_bound;
  std::uint64_t samples;
};

struct Summary {
  std::uint64_t count = 0;
  double mean = 0.0;
  std::uint64_t max = 0;
  std::uint64_t violations = 0;
  std::vector<SeriesPoint> series;
};

/// Mean/max rank error, bound violations, and a trailing moving average of
/// width `window_ms` sampled every `step_ms`. Timestamps are divided by
/// `compress` first (for stretched oracle runs).
Summary summarize(const std::vector<RankSample>& samples, double window_ms = 25.0,
                  double step_ms = 5.0, double compress = 1.0);

/// CSV dump: timestamp_ns,op,rank_error,bound_k,width,depth
void write_samples_csv(const std::filesystem::path& path, const std::vector<RankSample>& samples);
std::vector<RankSample> read_samples_csv(const std::filesystem::path& path);

}  // namespace elastic::oracle
