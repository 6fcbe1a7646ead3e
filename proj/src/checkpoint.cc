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

#include "tomneg/nn/checkpoint.h"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace tomneg::nn {
namespace {

constexpr char kMagic[] = "tomneg-params";
constexpr int kVersion = 1;

}  // namespace

void SaveParameters(const ParameterSet<double>& params, std::ostream& out) {
  out << kMagic << ' ' << kVersion << '\n' << params.size() << '\n';
  char buf[32];
  for (int i = 0; i < params.size(); ++i) {
    const Matrix<double>& m = params[i];
    out << params.name(i) << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%.17g", m.data()[k]);
      if (k > 0) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

ParameterSet<double> LoadParameters(std::istream& in) {
  std::string magic;
  int version = 0;
  int count = 0;
  if (!(in >> magic >> version) || magic != kMagic) {
    throw std::runtime_error("not a tomneg parameter file");
  }
  if (version != kVersion) {
    throw std::runtime_error("unsupported parameter file version " +
                             std::to_string(version));
  }
  if (!(in >> count) || count < 0) {
    throw std::runtime_error("bad tensor count");
  }
  ParameterSet<double> params;
  for (int i = 0; i < count; ++i) {
    std::string name;
    int rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols) || rows < 0 || cols < 0) {
      throw std::runtime_error("bad tensor header");
    }
    const int slot = params.Add(name, rows, cols);
    Matrix<double>& m = params[slot];
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      if (!(in >> m.data()[k])) {
        throw std::runtime_error("truncated tensor " + name);
      }
    }
  }
  return params;
}

void SaveParametersFile(const ParameterSet<double>& params,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  SaveParameters(params, out);
  if (!out) throw std::runtime_error("write failed for " + path);
}

ParameterSet<double> LoadParametersFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return LoadParameters(in);
}

}  // namespace tomneg::nn
