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

#ifndef TOMNEG_NN_TRAINING_H_
#define TOMNEG_NN_TRAINING_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tomneg/nn/parameters.h"
#include "tomneg/nn/sequence_net.h"

namespace tomneg::nn {

// Entries with allowed[i] == false get probability zero. An empty mask allows
// everything.
using Mask = std::vector<bool>;

template <typename Derived>
Vector<typename Derived::Scalar> Softmax(const Eigen::MatrixBase<Derived>& logits,
                                         const Mask& allowed = {}) {
  using S = typename Derived::Scalar;
  const Eigen::Index n = logits.size();
  if (!allowed.empty() && static_cast<Eigen::Index>(allowed.size()) != n) {
    throw std::invalid_argument("Softmax: mask size mismatch");
  }
  auto ok = [&](Eigen::Index i) { return allowed.empty() || allowed[i]; };
  S top = -std::numeric_limits<S>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (ok(i)) top = std::max(top, static_cast<S>(logits(i)));
  }
  if (!std::isfinite(static_cast<double>(top))) {
    throw std::invalid_argument("Softmax: no allowed finite entry");
  }
  Vector<S> p = Vector<S>::Zero(n);
  S total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!ok(i)) continue;
    p(i) = std::exp(logits(i) - top);
    total += p(i);
  }
  return p / total;
}

template <typename Scalar>
struct LossGrad {
  Scalar loss = 0;
  Vector<Scalar> grad;  // dloss / doutput
};

// Cross entropy of `target` under softmax(logits) restricted to `allowed`.
template <typename Scalar>
LossGrad<Scalar> CrossEntropy(const Vector<Scalar>& logits, int target,
                              const Mask& allowed = {}) {
  if (target < 0 || target >= logits.size() ||
      (!allowed.empty() && !allowed[target])) {
    throw std::invalid_argument("CrossEntropy: target not allowed");
  }
  LossGrad<Scalar> out;
  out.grad = Softmax(logits, allowed);
  out.loss = -std::log(out.grad(target));
  out.grad(target) -= Scalar(1);
  return out;
}

// Layout of a policy-style output vector: `num_intents` logits followed by
// one pre-sigmoid price unit.
//   loss = CE(intent) + alpha * (sigmoid(m) - price)^2
// The squared-error term is present only when the target carries a price.
template <typename Scalar>
LossGrad<Scalar> IntentPriceLoss(const Vector<Scalar>& out, int num_intents,
                                 int target_intent,
                                 std::optional<Scalar> target_price,
                                 Scalar alpha, const Mask& allowed = {}) {
  if (out.size() < num_intents + 1) {
    throw std::invalid_argument("IntentPriceLoss: output too short");
  }
  LossGrad<Scalar> ce =
      CrossEntropy<Scalar>(out.head(num_intents), target_intent, allowed);
  LossGrad<Scalar> result;
  result.grad = Vector<Scalar>::Zero(out.size());
  result.grad.head(num_intents) = ce.grad;
  result.loss = ce.loss;
  if (target_price) {
    const Scalar s = Scalar(1) / (Scalar(1) + std::exp(-out(num_intents)));
    const Scalar diff = s - *target_price;
    result.loss += alpha * diff * diff;
    result.grad(num_intents) = alpha * Scalar(2) * diff * s * (Scalar(1) - s);
  }
  return result;
}

template <typename Scalar>
LossGrad<Scalar> SquaredError(Scalar prediction, Scalar target) {
  LossGrad<Scalar> out;
  const Scalar diff = prediction - target;
  out.loss = diff * diff;
  out.grad = Vector<Scalar>::Constant(1, Scalar(2) * diff);
  return out;
}

// N(grid_i; mean, sigma) renormalized over the grid.
template <typename Scalar>
Vector<Scalar> DiscretizedGaussian(Scalar mean, Scalar sigma,
                                   const Vector<Scalar>& grid) {
  const Vector<Scalar> logits =
      (-(grid.array() - mean).square() / (Scalar(2) * sigma * sigma)).matrix();
  return Softmax(logits);
}

// d log DiscretizedGaussian(mean)[index] / d mean.
template <typename Scalar>
Scalar DiscretizedGaussianScore(Scalar mean, Scalar sigma,
                                const Vector<Scalar>& grid, int index) {
  const Vector<Scalar> p = DiscretizedGaussian(mean, sigma, grid);
  const Scalar expected = p.dot(grid);
  return (grid(index) - expected) / (sigma * sigma);
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Rescales the whole gradient to this L2 norm when exceeded; 0 disables.
  double clip_norm = 0.0;
};

template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterSet<Scalar>& params, AdamConfig config)
      : config_(config), m_(params.ZerosLike()), v_(params.ZerosLike()) {
    if (!(config.learning_rate > 0.0)) {
      throw std::invalid_argument("Adam: learning rate must be positive");
    }
  }

  // Applies one update. Throws std::runtime_error naming the first tensor
  // with a non-finite gradient; parameters are left untouched in that case.
  void Step(ParameterSet<Scalar>* params, ParameterSet<Scalar> grads) {
    params->CheckLayout(grads);
    if (const int bad = grads.FirstNonFinite(); bad >= 0) {
      throw std::runtime_error("non-finite gradient in " + grads.name(bad));
    }
    if (config_.clip_norm > 0.0) {
      const double norm = std::sqrt(static_cast<double>(grads.SquaredNorm()));
      if (norm > config_.clip_norm) {
        grads.Scale(static_cast<Scalar>(config_.clip_norm / norm));
      }
    }
    ++steps_;
    const Scalar b1 = static_cast<Scalar>(config_.beta1);
    const Scalar b2 = static_cast<Scalar>(config_.beta2);
    const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(steps_));
    const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(steps_));
    const Scalar lr = static_cast<Scalar>(config_.learning_rate);
    const Scalar eps = static_cast<Scalar>(config_.epsilon);
    for (int i = 0; i < params->size(); ++i) {
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * grads[i];
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * grads[i].cwiseAbs2();
      (*params)[i].array() -=
          lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
  }

  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  ParameterSet<Scalar> m_, v_;
  std::int64_t steps_ = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  int probes = 0;
};

// Compares `analytic` with five-point central differences of `loss` at
// `probes` uniformly drawn coordinates. The relative error of a coordinate is
// |a - n| / max(|a|, |n|, floor).
template <typename Scalar>
GradCheckResult GradCheck(
    const std::function<Scalar(const ParameterSet<Scalar>&)>& loss,
    ParameterSet<Scalar> params, const ParameterSet<Scalar>& analytic,
    int probes, double eps, std::uint64_t seed, double floor = 1e-6) {
  if (eps < 1e-6 || eps > 1e-3) {
    throw std::invalid_argument("GradCheck: eps must lie in [1e-6, 1e-3]");
  }
  params.CheckLayout(analytic);
  std::mt19937_64 rng(seed);
  std::vector<std::int64_t> offsets;
  std::int64_t total = 0;
  for (int i = 0; i < params.size(); ++i) {
    offsets.push_back(total);
    total += params[i].size();
  }
  if (total == 0) return {};
  std::uniform_int_distribution<std::int64_t> pick(0, total - 1);
  GradCheckResult result;
  for (int k = 0; k < probes; ++k) {
    const std::int64_t flat = pick(rng);
    const int slot = static_cast<int>(
        std::upper_bound(offsets.begin(), offsets.end(), flat) -
        offsets.begin() - 1);
    Scalar* x = params[slot].data() + (flat - offsets[slot]);
    const Scalar saved = *x;
    auto at = [&](double step) {
      *x = saved + static_cast<Scalar>(step);
      return static_cast<double>(loss(params));
    };
    const double numeric =
        (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) /
        (12.0 * eps);
    *x = saved;
    const double a =
        static_cast<double>(analytic[slot].data()[flat - offsets[slot]]);
    const double denom =
        std::max({std::abs(a), std::abs(numeric), floor});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_parameter = params.name(slot);
    }
    ++result.probes;
  }
  return result;
}

}  // namespace tomneg::nn

#endif  // TOMNEG_NN_TRAINING_H_
