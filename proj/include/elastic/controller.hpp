#pragma once

#include <cstdint>
#include <optional>

namespace elastic {

struct ControllerConfig {
  std::int64_t succ_inc = 1;
  std::int64_t fail_dec = 75;
  std::int64_t cont_threshold = 5000;
  std::int64_t width_diff = 5;
};

/// Thread-local contention vote controller. Every lane linearization
/// attempt nudges a contention accumulator up on success and down on
/// failure; crossing the threshold casts a vote and proposes a new shared
/// width one step away from the current tail width. Votes are only
/// meaningful within one tail window: a change of `version` (tail max for
/// queues, window version for the stack) clears them.
class Controller {
 public:
  explicit Controller(ControllerConfig cfg = {}, std::uint32_t max_width = 256)
      : cfg_(cfg), max_width_(max_width) {}

  /// Returns the width to publish, if this update crossed the threshold.
  std::optional<std::uint32_t> update(bool cas_success, std::uint64_t version,
                                      std::uint32_t tail_width);

  std::int64_t contention() const { return contention_; }
  std::int64_t votes() const { return votes_; }
  std::uint64_t version() const { return version_; }
  const ControllerConfig& config() const { return cfg_; }

 private:
  ControllerConfig cfg_;
  std::uint32_t max_width_;
  std::int64_t contention_ = 0;
  std::uint64_t version_ = 0;
  std::int64_t votes_ = 0;
};

}  // namespace elastic
