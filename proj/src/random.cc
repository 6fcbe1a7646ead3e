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

#include "tomneg/random.h"

#include <stdexcept>

namespace tomneg {

int SampleIndex(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  int last_positive = -1;
  for (int i = 0; i < static_cast<int>(weights.size()); ++i) {
    if (weights[i] < 0.0) throw std::invalid_argument("negative weight");
    if (weights[i] > 0.0) last_positive = i;
    total += weights[i];
  }
  if (last_positive < 0) throw std::invalid_argument("all weights are zero");
  double u = Uniform01(rng) * total;
  for (int i = 0; i < static_cast<int>(weights.size()); ++i) {
    if (weights[i] <= 0.0) continue;
    u -= weights[i];
    if (u < 0.0) return i;
  }
  return last_positive;
}

}  // namespace tomneg
