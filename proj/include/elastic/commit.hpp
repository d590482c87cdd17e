#pragma once

#include <cstdint>
#include <type_traits>

#include "elastic/observer.hpp"

namespace elastic::detail {

/// Runs a linearizing compare-and-exchange. With an enabled observer the
/// exchange and `on_commit` form one step under the observer's lock.
template <typename Observer, typename Cas, typename OnCommit>
bool commit(Observer* obs, Cas&& cas, OnCommit&& on_commit) {
  if constexpr (Observer::enabled) {
    auto lock = obs->serialize();
    if (!cas()) return false;
    on_commit();
    return true;
  } else {
    (void)obs;
    (void)on_commit;
    return cas();
  }
}

template <typename T>
std::uint64_t key_of(const T& v) {
  static_assert(std::is_convertible_v<T, std::uint64_t>,
                "observed structures need values convertible to uint64_t");
  return static_cast<std::uint64_t>(v);
}

}  // namespace elastic::detail
