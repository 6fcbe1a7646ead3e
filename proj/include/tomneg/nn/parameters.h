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

#ifndef TOMNEG_NN_PARAMETERS_H_
#define TOMNEG_NN_PARAMETERS_H_

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace tomneg::nn {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Ordered collection of named dense tensors. Gradients and optimizer moments
// use the same layout as the parameters they belong to.
template <typename Scalar>
class ParameterSet {
 public:
  // Adds a zero-filled tensor and returns its slot.
  int Add(const std::string& name, int rows, int cols) {
    if (index_.count(name)) {
      throw std::invalid_argument("duplicate parameter " + name);
    }
    index_.emplace(name, static_cast<int>(values_.size()));
    names_.push_back(name);
    values_.push_back(Matrix<Scalar>::Zero(rows, cols));
    return static_cast<int>(values_.size()) - 1;
  }

  int size() const { return static_cast<int>(values_.size()); }
  const std::string& name(int slot) const { return names_[slot]; }
  Matrix<Scalar>& operator[](int slot) { return values_[slot]; }
  const Matrix<Scalar>& operator[](int slot) const { return values_[slot]; }

  int Slot(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter " + name);
    return it->second;
  }
  bool Contains(const std::string& name) const { return index_.count(name); }
  Matrix<Scalar>& operator[](const std::string& name) {
    return values_[Slot(name)];
  }
  const Matrix<Scalar>& operator[](const std::string& name) const {
    return values_[Slot(name)];
  }

  std::int64_t NumScalars() const {
    std::int64_t n = 0;
    for (const auto& m : values_) n += m.size();
    return n;
  }

  ParameterSet ZerosLike() const {
    ParameterSet out = *this;
    out.SetZero();
    return out;
  }
  void SetZero() {
    for (auto& m : values_) m.setZero();
  }
  void AddScaled(const ParameterSet& other, Scalar scale) {
    CheckLayout(other);
    for (int i = 0; i < size(); ++i) values_[i] += scale * other.values_[i];
  }
  void Scale(Scalar scale) {
    for (auto& m : values_) m *= scale;
  }
  Scalar SquaredNorm() const {
    Scalar total = 0;
    for (const auto& m : values_) total += m.squaredNorm();
    return total;
  }
  bool AllFinite() const {
    for (const auto& m : values_) {
      if (!m.allFinite()) return false;
    }
    return true;
  }
  // First tensor holding a NaN or infinity, or -1.
  int FirstNonFinite() const {
    for (int i = 0; i < size(); ++i) {
      if (!values_[i].allFinite()) return i;
    }
    return -1;
  }

  bool SameLayout(const ParameterSet& other) const {
    if (names_ != other.names_) return false;
    for (int i = 0; i < size(); ++i) {
      if (values_[i].rows() != other.values_[i].rows() ||
          values_[i].cols() != other.values_[i].cols()) {
        return false;
      }
    }
    return true;
  }
  void CheckLayout(const ParameterSet& other) const {
    if (!SameLayout(other)) {
      throw std::invalid_argument("parameter layouts differ");
    }
  }

  // Copies every tensor whose name starts with `prefix` from `other`.
  void CopyMatching(const ParameterSet& other, const std::string& prefix) {
    for (int i = 0; i < size(); ++i) {
      if (names_[i].rfind(prefix, 0) != 0) continue;
      const Matrix<Scalar>& src = other[names_[i]];
      if (src.rows() != values_[i].rows() || src.cols() != values_[i].cols()) {
        throw std::invalid_argument("shape mismatch for " + names_[i]);
      }
      values_[i] = src;
    }
  }

  template <typename Other>
  ParameterSet<Other> Cast() const {
    ParameterSet<Other> out;
    for (int i = 0; i < size(); ++i) {
      const int slot = out.Add(names_[i], static_cast<int>(values_[i].rows()),
                               static_cast<int>(values_[i].cols()));
      out[slot] = values_[i].template cast<Other>();
    }
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix<Scalar>> values_;
  std::unordered_map<std::string, int> index_;
};

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
template <typename Scalar>
void UniformInit(Matrix<Scalar>& m, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      m(i, j) = static_cast<Scalar>(dist(rng));
    }
  }
}

}  // namespace tomneg::nn

#endif  // TOMNEG_NN_PARAMETERS_H_
