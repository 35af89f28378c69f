// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace proxlab {

// Counter-based generator. Output i of a stream with key k is
// splitmix64_finalize(k + i * GOLDEN_GAMMA); streams are split by hashing a
// label into the key. Pure 64-bit integer arithmetic, so sequences are
// identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Derived stream; independent of this stream's position.
  Rng split(std::string_view label) const;
  Rng split(std::uint64_t index) const;

  std::uint64_t next_u64();
  double next_double();    // uniform [0, 1)
  double next_gaussian();  // standard normal, Box-Muller
  std::size_t next_index(std::size_t n);  // uniform {0..n-1}, n >= 1

  // Inverse-CDF draw; probs need not be normalized but must be nonnegative.
  std::size_t sample_categorical(std::span<const double> probs);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = next_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool have_cached_gaussian_ = false;
  double cached_gaussian_ = 0.0;
};

}  // namespace proxlab
