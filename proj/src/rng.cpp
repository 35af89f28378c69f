// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
#include "rng.hpp"

#include <cmath>
#include <stdexcept>

namespace proxlab {
namespace {

constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ull;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) : key_(mix64(seed + kGoldenGamma)) {}

Rng Rng::split(std::string_view label) const {
  Rng child(0);
  child.key_ = mix64(key_ ^ fnv1a(label));
  child.counter_ = 0;
  child.have_cached_gaussian_ = false;
  return child;
}

Rng Rng::split(std::uint64_t index) const {
  Rng child(0);
  child.key_ = mix64(key_ ^ mix64(index + kGoldenGamma));
  child.counter_ = 0;
  child.have_cached_gaussian_ = false;
  return child;
}

std::uint64_t Rng::next_u64() { return mix64(key_ + (counter_++) * kGoldenGamma); }

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_gaussian() {
  if (have_cached_gaussian_) {
    have_cached_gaussian_ = false;
    return cached_gaussian_;
  }
  // Box-Muller; u1 in (0,1] so the log is finite.
  double u1 = 1.0 - next_double();
  double u2 = next_double();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  cached_gaussian_ = r * std::sin(theta);
  have_cached_gaussian_ = true;
  return r * std::cos(theta);
}

std::size_t Rng::next_index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::next_index: n must be >= 1");
  // Rejection-free modulo with 64-bit state; bias is negligible for desk-scale n
  // but we still use the standard multiply-shift reduction for uniformity.
  unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
  return static_cast<std::size_t>(m >> 64);
}

std::size_t Rng::sample_categorical(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("sample_categorical: empty");
  double total = 0.0;
  for (double p : probs) {
    if (p < 0.0) throw std::invalid_argument("sample_categorical: negative weight");
    total += p;
  }
  if (total <= 0.0) throw std::invalid_argument("sample_categorical: zero mass");
  double u = next_double() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

}  // namespace proxlab
