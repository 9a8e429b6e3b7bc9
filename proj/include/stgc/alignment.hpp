#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "stgc/data_model.hpp"
#include "stgc/error.hpp"
#include "stgc/lag_engine.hpp"

namespace stgc {

/// Cause and effect series after shifting the cause forward by `lag` steps:
/// cause[k] is original index k, effect[k] is original index k + lag.
struct AlignedPair {
  Vector cause;
  Vector effect;
  int lag = 0;
  std::size_t original_length = 0;

  std::size_t length() const { return static_cast<std::size_t>(cause.size()); }
};

/// Shortest aligned length a pair needs before it is tested with a VAR of
/// order `var_order`: var_order presample rows plus 10 * var_order observations.
inline std::size_t min_aligned_length(int var_order) { return 11 * static_cast<std::size_t>(var_order); }

/// Returns nullopt for the undefined-lag sentinel; throws for any other lag
/// outside [0, T).
inline std::optional<AlignedPair> align_pair(const Vector& cause, const Vector& effect, int lag) {
  if (cause.size() != effect.size()) throw InputError("aligned series must have equal length");
  const auto t = cause.size();
  if (lag == kUndefinedLag) return std::nullopt;
  if (lag < 0 || lag >= t)
    throw InputError("lag " + std::to_string(lag) + " outside [0, " + std::to_string(t) + ")");
  const auto len = t - lag;
  return AlignedPair{cause.head(len), effect.tail(len), lag, static_cast<std::size_t>(t)};
}

}  // namespace stgc
