#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "elastic/controller.hpp"
#include "elastic/oracle.hpp"
#include "elastic/window.hpp"

namespace elastic::bench {

enum class Structure { law_queue, lpw_queue, lpw_stack, ms_queue, treiber_stack };
enum class Workload { mixed50, producer_consumer };
enum class Mode { throughput, oracle };

std::string_view to_string(Structure s);
std::string_view to_string(Workload w);
std::string_view to_string(Mode m);
std::optional<Structure> parse_structure(std::string_view s);
std::optional<Workload> parse_workload(std::string_view s);
std::optional<Mode> parse_mode(std::string_view s);

bool is_stack(Structure s);
bool is_elastic(Structure s);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Manual reconfiguration at `at_s` seconds into the run.
struct ScheduleEntry {
  double at_s = 0.0;
  std::uint32_t width = 1;
  std::uint32_t depth = 1;
};

/// Fraction of producers active from `at_s` on.
struct ActivityEntry {
  double at_s = 0.0;
  double active = 1.0;
};

struct BenchConfig {
  Structure structure = Structure::law_queue;
  Workload workload = Workload::mixed50;
  Mode mode = Mode::throughput;
  unsigned threads = 4;
  double duration_s = 1.0;
  std::uint64_t prefill = 1u << 15;
  std::uint32_t max_width = kDefaultMaxWidth;
  /// Initial relaxation; ignored when `k` is set.
  std::uint32_t width = 8;
  std::uint32_t depth = 64;
  /// Rank-error budget: picks width = 2 * threads and the deepest window within it.
  std::optional<std::uint64_t> k;
  std::vector<ScheduleEntry> schedule;
  /// Producer/consumer split; 0 derives two thirds producers.
  unsigned producers = 0;
  std::vector<ActivityEntry> activity;
  bool controller = false;
  ControllerConfig controller_cfg;
  std::uint64_t seed = 1;
  /// Oracle runs last `duration_s * stretch`; timestamps are divided back.
  /// 0 picks 1000 for queues and 2000 for the stack.
  double stretch = 0.0;
  /// Stop after this many operations in total (0 = time only).
  std::uint64_t max_ops = 0;
  std::uint64_t audit_every = 0;
  double bucket_ms = 5.0;
  double window_ms = 25.0;
  /// Monitor sampling period for width/window series.
  double monitor_ms = 1.0;
};

/// Throws ConfigError on the first invalid field.
void validate(const BenchConfig& cfg);

double effective_stretch(const BenchConfig& cfg);
unsigned producer_count(const BenchConfig& cfg);

struct Selection {
  std::uint32_t width = 1;
  std::uint32_t depth = 1;
  std::uint64_t bound = 0;
};

/// Width 2 * threads and the largest depth whose fixed-configuration bound
/// stays within k. The width is reduced when even the smallest depth does
/// not fit.
Selection choose_config(Structure s, unsigned threads, std::uint64_t k,
                        std::uint32_t max_width = kDefaultMaxWidth);

/// One per-thread counter flush (every 1000 operations and at exit).
struct FlushRecord {
  std::uint32_t thread = 0;
  std::uint64_t t_ns = 0;
  std::uint64_t inserts = 0;
  std::uint64_t removes = 0;
  std::uint64_t empties = 0;
  std::uint64_t insert_busy_ns = 0;  // time spent inside inserts in this chunk
};

struct MonitorSample {
  std::uint64_t t_ns = 0;
  std::uint32_t width_shared = 0;
  std::uint32_t depth_shared = 0;
  std::uint32_t window_width = 0;
  std::uint32_t window_depth = 0;
  double active = 0.0;
};

struct ScheduleEvent {
  double at_ms = 0.0;
  std::uint32_t width = 0;
  std::uint32_t depth = 0;
  /// First monitor time at which the window carried the new width and depth.
  std::optional<double> observed_ms;
};

struct Bucket {
  double t_ms = 0.0;
  double throughput = 0.0;  // ops/s, moving average
  double latency_ns = 0.0;  // mean insert latency, moving average
  double width_shared = 0.0;
  double window_width = 0.0;
  double window_depth = 0.0;
  double active = 0.0;
};

struct OracleOutcome {
  std::uint64_t violations = 0;
  std::uint64_t samples = 0;
  std::uint64_t max_rank_error = 0;
  double mean_rank_error = 0.0;
  std::vector<std::pair<std::string, oracle::CheckTally>> checks;
  std::vector<std::string> messages;
  std::vector<oracle::RankSample> rank_samples;
};

struct RunRecord {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<Bucket> buckets;
  std::vector<FlushRecord> flushes;
  std::vector<MonitorSample> monitor;
  std::vector<ScheduleEvent> schedule;
  std::vector<std::uint64_t> per_thread_ops;
  std::uint64_t total_ops = 0;
  std::uint64_t inserts = 0;
  std::uint64_t removes = 0;
  std::uint64_t empties = 0;
  double elapsed_s = 0.0;
  double throughput = 0.0;  // ops/s over the (compressed) run
  // Post-run verification after draining.
  std::uint64_t inserted_total = 0;
  std::uint64_t removed_total = 0;
  std::uint64_t drained = 0;
  bool multiset_ok = false;
  WindowView final_head;
  WindowView final_tail;
  std::optional<OracleOutcome> oracle;
  bool pinned = false;
};

RunRecord run_benchmark(const BenchConfig& cfg);

/// Aggregates flushes and monitor samples into fixed buckets.
std::vector<Bucket> aggregate(const std::vector<FlushRecord>& flushes,
                              const std::vector<MonitorSample>& monitor, double end_ms,
                              double bucket_ms, double window_ms);

/// CSV with '#'-prefixed key=value metadata lines, then
/// t_ms,throughput,latency_ns,width_shared,window_width,window_depth,active
void emit_csv(const RunRecord& record, const std::filesystem::path& path);
void emit_csv(const RunRecord& record, std::ostream& out);
RunRecord parse_csv(const std::filesystem::path& path);
RunRecord parse_csv(std::istream& in);

/// Pins the calling thread to the `index`-th allowed CPU, round robin.
/// Returns false when pinning is unsupported or disabled by ELASTIC_PIN=none.
bool pin_current_thread(unsigned index);

}  // namespace elastic::bench
