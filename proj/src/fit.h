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

#ifndef TOMNEG_SRC_FIT_H_
#define TOMNEG_SRC_FIT_H_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "tomneg/episode.h"
#include "tomneg/managers.h"
#include "tomneg/nn/training.h"
#include "tomneg/random.h"

namespace tomneg::internal {

// Mean of `loss(model, transcript, grads, samples)` per sample.
template <typename Model, typename LossFn>
double MeanLoss(const Model& model, const std::vector<Transcript>& corpus,
                const LossFn& loss) {
  double total = 0.0;
  int count = 0;
  for (const Transcript& t : corpus) {
    int n = 0;
    total += loss(model, t, nullptr, &n);
    count += n;
  }
  return count > 0 ? total / count : 0.0;
}

// Minibatch Adam over per-transcript losses. The last
// config.validation_fraction of the corpus is held out and the parameters
// of the best validation epoch are kept.
template <typename Model, typename LossFn>
void Fit(Model* model, const std::vector<Transcript>& corpus,
         const TrainConfig& config, const LossFn& loss, TrainReport* report) {
  if (corpus.empty()) throw std::invalid_argument("training on an empty corpus");
  const int total = static_cast<int>(corpus.size());
  int n_val = static_cast<int>(std::lround(config.validation_fraction * total));
  n_val = std::clamp(n_val, 0, total - 1);
  const std::vector<Transcript> train(corpus.begin(), corpus.end() - n_val);
  std::vector<Transcript> val(corpus.end() - n_val, corpus.end());
  if (val.empty()) val = train;

  nn::AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  adam_config.clip_norm = config.clip_norm;
  nn::Adam<double> adam(model->net().params(), adam_config);

  TrainReport local;
  TrainReport& rep = report ? *report : local;
  rep = TrainReport{};
  rep.initial_validation_loss = MeanLoss(*model, val, loss);
  double best = rep.initial_validation_loss;
  Params best_params = model->net().params();

  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(DeriveSeed(config.seed, 1000 + epoch));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int epoch_samples = 0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      Params grads = model->net().params().ZerosLike();
      int batch_samples = 0;
      const size_t stop = std::min(order.size(), start + config.batch_size);
      for (size_t i = start; i < stop; ++i) {
        int n = 0;
        epoch_loss += loss(*model, train[order[i]], &grads, &n);
        batch_samples += n;
      }
      if (batch_samples == 0) continue;
      epoch_samples += batch_samples;
      grads.Scale(1.0 / batch_samples);
      adam.Step(&model->net().params(), grads);
    }
    rep.train_loss.push_back(epoch_samples ? epoch_loss / epoch_samples : 0.0);
    const double v = MeanLoss(*model, val, loss);
    rep.validation_loss.push_back(v);
    if (v < best) {
      best = v;
      rep.best_epoch = epoch;
      best_params = model->net().params();
    }
  }
  model->net().params() = best_params;
}

}  // namespace tomneg::internal

#endif  // TOMNEG_SRC_FIT_H_
