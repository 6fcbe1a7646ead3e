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

#ifndef TOMNEG_NN_SEQUENCE_NET_H_
#define TOMNEG_NN_SEQUENCE_NET_H_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tomneg/nn/parameters.h"

namespace tomneg::nn {

// Elementwise activations. These return Eigen expressions; assign them to a
// concrete matrix rather than `auto`.
template <typename Derived>
auto Sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
}

template <typename Derived>
auto Softsign(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) { return v / (S(1) + std::abs(v)); });
}

// d softsign(x) / dx = 1 / (1 + |x|)^2.
template <typename Derived>
auto SoftsignGrad(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) {
    const S d = S(1) + std::abs(v);
    return S(1) / (d * d);
  });
}

// One gated recurrent layer with gates (update z, reset r, candidate c):
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   c = tanh(Wc x + Uc (r * h) + bc)
//   h' = (1 - z) * c + z * h
// W, U and b stack the three gates in that order.
struct GruSlots {
  int w = -1, u = -1, b = -1, h0 = -1;
  int input_dim = 0;
  int hidden = 0;
};

template <typename Scalar>
struct GruCache {
  Matrix<Scalar> inputs;  // input_dim x T
  Matrix<Scalar> h;       // hidden x (T + 1); column 0 is the initial state
  Matrix<Scalar> z, r, c;  // hidden x T
};

template <typename Scalar>
void GruForward(const ParameterSet<Scalar>& p, const GruSlots& s,
                const Matrix<Scalar>& inputs, GruCache<Scalar>* cache) {
  const int H = s.hidden;
  const Eigen::Index T = inputs.cols();
  const Matrix<Scalar>& W = p[s.w];
  const Matrix<Scalar>& U = p[s.u];
  cache->inputs = inputs;
  cache->h.resize(H, T + 1);
  cache->h.col(0) = p[s.h0];
  cache->z.resize(H, T);
  cache->r.resize(H, T);
  cache->c.resize(H, T);
  if (T == 0) return;
  Matrix<Scalar> gx = W * inputs;
  gx.colwise() += p[s.b].col(0);
  Vector<Scalar> zr(2 * H), rh(H);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto prev = cache->h.col(t);
    zr.noalias() = U.topRows(2 * H) * prev;
    zr = Sigmoid(zr + gx.col(t).head(2 * H));
    cache->z.col(t) = zr.head(H);
    cache->r.col(t) = zr.tail(H);
    rh = zr.tail(H).cwiseProduct(prev);
    Vector<Scalar> cand = gx.col(t).tail(H);
    cand.noalias() += U.bottomRows(H) * rh;
    cache->c.col(t) = cand.array().tanh().matrix();
    cache->h.col(t + 1) =
        (Scalar(1) - zr.head(H).array()) * cache->c.col(t).array() +
        zr.head(H).array() * prev.array();
  }
}

// `d_h` holds dL/dh for every column of cache.h. Accumulates parameter
// gradients into `grads`; if `d_inputs` is non-null it receives dL/dinputs.
template <typename Scalar>
void GruBackward(const ParameterSet<Scalar>& p, const GruSlots& s,
                 const GruCache<Scalar>& cache, const Matrix<Scalar>& d_h,
                 ParameterSet<Scalar>* grads, Matrix<Scalar>* d_inputs) {
  const int H = s.hidden;
  const Eigen::Index T = cache.inputs.cols();
  const Matrix<Scalar>& W = p[s.w];
  const Matrix<Scalar>& U = p[s.u];
  Matrix<Scalar> d_gates(3 * H, T);
  Vector<Scalar> carry = Vector<Scalar>::Zero(H);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const auto prev = cache.h.col(t);
    const auto z = cache.z.col(t).array();
    const auto r = cache.r.col(t).array();
    const auto c = cache.c.col(t).array();
    const Vector<Scalar> dh = d_h.col(t + 1) + carry;
    const Vector<Scalar> dc_pre =
        (dh.array() * (Scalar(1) - z) * (Scalar(1) - c * c)).matrix();
    const Vector<Scalar> dz_pre =
        (dh.array() * (prev.array() - c) * z * (Scalar(1) - z)).matrix();
    carry = (dh.array() * z).matrix();
    const Vector<Scalar> d_rh = U.bottomRows(H).transpose() * dc_pre;
    const Vector<Scalar> dr_pre =
        (d_rh.array() * prev.array() * r * (Scalar(1) - r)).matrix();
    carry.array() += d_rh.array() * r;
    d_gates.col(t).head(H) = dz_pre;
    d_gates.col(t).segment(H, H) = dr_pre;
    d_gates.col(t).tail(H) = dc_pre;
    carry.noalias() += U.topRows(2 * H).transpose() * d_gates.col(t).head(2 * H);
  }
  (*grads)[s.h0] += d_h.col(0) + carry;
  if (T == 0) {
    if (d_inputs) d_inputs->resize(s.input_dim, 0);
    return;
  }
  const auto prev_h = cache.h.leftCols(T);
  (*grads)[s.w].noalias() += d_gates * cache.inputs.transpose();
  (*grads)[s.b] += d_gates.rowwise().sum();
  (*grads)[s.u].topRows(2 * H).noalias() +=
      d_gates.topRows(2 * H) * prev_h.transpose();
  const Matrix<Scalar> rh = cache.r.cwiseProduct(prev_h);
  (*grads)[s.u].bottomRows(H).noalias() += d_gates.bottomRows(H) * rh.transpose();
  if (d_inputs) d_inputs->noalias() = W.transpose() * d_gates;
}

// Stacked recurrent encoder over a feature sequence followed by a one-layer
// softsign MLP on [h_k; q], where h_k is the top-layer state after the first
// k inputs and q a per-query vector.
template <typename Scalar>
class SequenceNet {
 public:
  struct Config {
    int input_dim = 0;
    int query_dim = 0;
    int hidden = 300;
    int layers = 2;
    int mlp = 300;
    int output_dim = 1;
  };

  struct Trace {
    std::vector<GruCache<Scalar>> layers;
    std::vector<int> prefix;
    Matrix<Scalar> h_sel;    // hidden x B
    Matrix<Scalar> queries;  // query_dim x B
    Matrix<Scalar> pre;      // mlp x B
    Matrix<Scalar> act;      // mlp x B
  };

  SequenceNet() = default;

  SequenceNet(const Config& config, std::uint64_t seed) : config_(config) {
    Build();
    std::mt19937_64 rng(seed);
    for (const GruSlots& g : gru_) {
      UniformInit(params_[g.w], g.input_dim, rng);
      UniformInit(params_[g.u], g.hidden, rng);
    }
    UniformInit(params_[wh_], config_.hidden + config_.query_dim, rng);
    UniformInit(params_[wq_], config_.hidden + config_.query_dim, rng);
    UniformInit(params_[w2_], config_.mlp, rng);
  }

  // Wraps existing parameters, e.g. from a checkpoint.
  SequenceNet(const Config& config, const ParameterSet<Scalar>& params)
      : config_(config) {
    Build();
    params_.CheckLayout(params);
    params_ = params;
  }

  const Config& config() const { return config_; }
  ParameterSet<Scalar>& params() { return params_; }
  const ParameterSet<Scalar>& params() const { return params_; }

  // Top-layer states for every prefix length 0..T of `inputs`.
  Matrix<Scalar> Encode(const Matrix<Scalar>& inputs,
                        std::vector<GruCache<Scalar>>* caches = nullptr) const {
    CheckInputs(inputs);
    std::vector<GruCache<Scalar>> local;
    std::vector<GruCache<Scalar>>& layers = caches ? *caches : local;
    layers.resize(gru_.size());
    const Matrix<Scalar>* x = &inputs;
    Matrix<Scalar> next;
    for (size_t l = 0; l < gru_.size(); ++l) {
      GruForward(params_, gru_[l], *x, &layers[l]);
      next = layers[l].h.rightCols(inputs.cols());
      x = &next;
    }
    return layers.back().h;
  }

  // W_h h + b for the first MLP layer.
  Vector<Scalar> HiddenPre(const Vector<Scalar>& h) const {
    Vector<Scalar> pre = params_[bias1_];
    pre.noalias() += params_[wh_] * h;
    return pre;
  }
  const Matrix<Scalar>& query_weights() const { return params_[wq_]; }
  const Matrix<Scalar>& output_weights() const { return params_[w2_]; }
  const Matrix<Scalar>& output_bias() const { return params_[b2_]; }

  // MLP on precomputed pre-activations (mlp x B).
  Matrix<Scalar> OutputFromPre(const Matrix<Scalar>& pre) const {
    Matrix<Scalar> out = params_[w2_] * Softsign(pre);
    out.colwise() += params_[b2_].col(0);
    return out;
  }

  // Outputs (output_dim x B) for B (prefix length, query) pairs over one
  // sequence.
  Matrix<Scalar> Forward(const Matrix<Scalar>& inputs,
                         const std::vector<int>& prefix,
                         const Matrix<Scalar>& queries,
                         Trace* trace = nullptr) const {
    Trace local;
    Trace& tr = trace ? *trace : local;
    if (static_cast<Eigen::Index>(prefix.size()) != queries.cols() ||
        queries.rows() != config_.query_dim) {
      throw std::invalid_argument("SequenceNet: query shape mismatch");
    }
    const Matrix<Scalar> top = Encode(inputs, &tr.layers);
    tr.prefix = prefix;
    tr.h_sel.resize(config_.hidden, prefix.size());
    for (size_t b = 0; b < prefix.size(); ++b) {
      if (prefix[b] < 0 || prefix[b] > inputs.cols()) {
        throw std::out_of_range("SequenceNet: prefix length out of range");
      }
      tr.h_sel.col(b) = top.col(prefix[b]);
    }
    tr.queries = queries;
    tr.pre = params_[wh_] * tr.h_sel;
    if (config_.query_dim > 0) tr.pre.noalias() += params_[wq_] * queries;
    tr.pre.colwise() += params_[bias1_].col(0);
    tr.act = Softsign(tr.pre);
    Matrix<Scalar> out = params_[w2_] * tr.act;
    out.colwise() += params_[b2_].col(0);
    return out;
  }

  void Backward(const Trace& tr, const Matrix<Scalar>& d_out,
                ParameterSet<Scalar>* grads) const {
    (*grads)[w2_].noalias() += d_out * tr.act.transpose();
    (*grads)[b2_] += d_out.rowwise().sum();
    const Matrix<Scalar> d_pre =
        (params_[w2_].transpose() * d_out).cwiseProduct(SoftsignGrad(tr.pre));
    (*grads)[wh_].noalias() += d_pre * tr.h_sel.transpose();
    if (config_.query_dim > 0) {
      (*grads)[wq_].noalias() += d_pre * tr.queries.transpose();
    }
    (*grads)[bias1_] += d_pre.rowwise().sum();
    const Matrix<Scalar> d_sel = params_[wh_].transpose() * d_pre;

    const Eigen::Index T = tr.layers.front().inputs.cols();
    Matrix<Scalar> d_h = Matrix<Scalar>::Zero(config_.hidden, T + 1);
    for (size_t b = 0; b < tr.prefix.size(); ++b) {
      d_h.col(tr.prefix[b]) += d_sel.col(b);
    }
    for (int l = static_cast<int>(gru_.size()) - 1; l >= 0; --l) {
      Matrix<Scalar> d_in;
      GruBackward(params_, gru_[l], tr.layers[l], d_h, grads,
                  l > 0 ? &d_in : nullptr);
      if (l > 0) {
        d_h = Matrix<Scalar>::Zero(config_.hidden, T + 1);
        d_h.rightCols(T) = d_in;
      }
    }
  }

 private:
  void Build() {
    if (config_.input_dim < 1 || config_.hidden < 1 || config_.layers < 1 ||
        config_.mlp < 1 || config_.output_dim < 1 || config_.query_dim < 0) {
      throw std::invalid_argument("SequenceNet: bad config");
    }
    params_ = ParameterSet<Scalar>();
    gru_.clear();
    for (int l = 0; l < config_.layers; ++l) {
      const std::string prefix = "enc.l" + std::to_string(l) + ".";
      GruSlots g;
      g.input_dim = l == 0 ? config_.input_dim : config_.hidden;
      g.hidden = config_.hidden;
      g.w = params_.Add(prefix + "W", 3 * g.hidden, g.input_dim);
      g.u = params_.Add(prefix + "U", 3 * g.hidden, g.hidden);
      g.b = params_.Add(prefix + "b", 3 * g.hidden, 1);
      g.h0 = params_.Add(prefix + "h0", g.hidden, 1);
      gru_.push_back(g);
    }
    wh_ = params_.Add("mlp.Wh", config_.mlp, config_.hidden);
    wq_ = params_.Add("mlp.Wq", config_.mlp, config_.query_dim);
    bias1_ = params_.Add("mlp.b", config_.mlp, 1);
    w2_ = params_.Add("out.W", config_.output_dim, config_.mlp);
    b2_ = params_.Add("out.b", config_.output_dim, 1);
  }

  void CheckInputs(const Matrix<Scalar>& inputs) const {
    if (inputs.rows() != config_.input_dim) {
      throw std::invalid_argument("SequenceNet: input dimension mismatch");
    }
  }

  Config config_;
  ParameterSet<Scalar> params_;
  std::vector<GruSlots> gru_;
  int wh_ = -1, wq_ = -1, bias1_ = -1, w2_ = -1, b2_ = -1;
};

}  // namespace tomneg::nn

#endif  // TOMNEG_NN_SEQUENCE_NET_H_
