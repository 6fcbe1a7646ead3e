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

#ifndef TOMNEG_NN_CHECKPOINT_H_
#define TOMNEG_NN_CHECKPOINT_H_

#include <iosfwd>
#include <string>

#include "tomneg/nn/parameters.h"

namespace tomneg::nn {

// Text dump of named tensors:
//   tomneg-params 1
//   <count>
//   <name> <rows> <cols>
//   <values in column-major order, %.17g>
// Output is byte-identical for identical parameters and reloads exactly.
void SaveParameters(const ParameterSet<double>& params, std::ostream& out);
ParameterSet<double> LoadParameters(std::istream& in);

void SaveParametersFile(const ParameterSet<double>& params,
                        const std::string& path);
ParameterSet<double> LoadParametersFile(const std::string& path);

}  // namespace tomneg::nn

#endif  // TOMNEG_NN_CHECKPOINT_H_
