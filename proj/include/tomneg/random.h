// Copyright 2026 The tomneg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TOMNEG_RANDOM_H_
#define TOMNEG_RANDOM_H_

#include <cstdint>
#include <random>
#include <span>

namespace tomneg {

using Rng = std::mt19937_64;

// Per-episode seed streams: seed = mix(run_seed, index). SplitMix64 finalizer.
constexpr std::uint64_t DeriveSeed(std::uint64_t run_seed, std::uint64_t index) {
  std::uint64_t z = run_seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double Uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// Index drawn proportionally to non-negative `weights`. Returns the last
// positive-weight index on round-off.
int SampleIndex(std::span<const double> weights, Rng& rng);

}  // namespace tomneg

#endif  // TOMNEG_RANDOM_H_
