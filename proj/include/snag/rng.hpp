#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace snag {

using Rng = std::mt19937_64;

// Independent, reproducible stream for a (seed, purpose, index...) tuple.
inline Rng make_rng(std::initializer_list<std::uint64_t> key) {
  // seed_seq keeps 32 bits per element, so feed both halves of each word.
  std::vector<std::uint32_t> words;
  for (std::uint64_t k : key) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Stream identifiers passed as the second element of a make_rng key.
namespace stream {
inline constexpr std::uint64_t kSplit = 1;
inline constexpr std::uint64_t kController = 2;
inline constexpr std::uint64_t kChildInit = 3;
inline constexpr std::uint64_t kDropout = 4;
inline constexpr std::uint64_t kRandomSearch = 5;
inline constexpr std::uint64_t kDerive = 6;
inline constexpr std::uint64_t kControllerInit = 7;
}  // namespace stream

}  // namespace snag
