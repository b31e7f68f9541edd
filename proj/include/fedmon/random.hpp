#pragma once

#include <cstdint>
#include <random>

namespace fedmon {

using Rng = std::mt19937_64;

// Named streams so that adding a draw in one place never shifts another.
enum class Stream : std::uint64_t {
  kFeatureParams = 1,
  kGroundTruth = 2,
  kFeatureNoise = 3,
  kRewardNoise = 4,
  kPolicyInit = 5,
  kSubjects = 6,
  kFixture = 7,
};

std::uint64_t splitmix64(std::uint64_t x);

// Independent generator for (seed, stream, index). Random access by index
// lets per-trial draws be replayed without generating earlier trials.
Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0);

}  // namespace fedmon
