#include "elastic/controller.hpp"

#include <algorithm>
#include <cstdlib>

namespace elastic {

namespace {
constexpr std::int64_t sign(std::int64_t v) { return (v > 0) - (v < 0); }
}  // namespace

std::optional<std::uint32_t> Controller::update(bool cas_success, std::uint64_t version,
                                                std::uint32_t tail_width) {
  if (version != version_) {
    version_ = version;
    votes_ = 0;
  }
  contention_ += cas_success ? cfg_.succ_inc : -cfg_.fail_dec;
  if (std::abs(contention_) < cfg_.cont_threshold) return std::nullopt;

  votes_ += sign(contention_);
  contention_ = 0;
  const std::int64_t proposal =
      static_cast<std::int64_t>(tail_width) - cfg_.width_diff * sign(votes_);
  return static_cast<std::uint32_t>(
      std::clamp<std::int64_t>(proposal, 1, static_cast<std::int64_t>(max_width_)));
}

}  // namespace elastic
