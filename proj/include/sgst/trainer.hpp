#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "sgst/adam.hpp"
#include "sgst/batching.hpp"
#include "sgst/errors.hpp"
#include "sgst/model.hpp"
#include "sgst/scene_graph.hpp"
#include "sgst/vocabulary.hpp"

namespace sgst {

struct TrainConfig {
  ModelConfig model = ModelConfig::desk();
  std::size_t batch_tokens = 128;
  std::size_t epochs = 1000;
  // Optimizer step cap; 0 means no cap.
  std::uint64_t max_steps = 2000;
  LearningRateSchedule schedule{3e-3, 200};
  AdamOptions adam;
  std::uint64_t seed = 1;
  // Stop after the first epoch whose mean token NLL falls to this value; 0 disables.
  double target_loss = 0.0;
  // Examples of a batch processed concurrently; gradients are reduced in example order.
  std::size_t threads = 1;

  static TrainConfig desk();
  static TrainConfig paper();
  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double loss = 0.0;  // token-weighted mean NLL over the epoch's batches
  double lr = 0.0;    // rate used by the epoch's last step
};

struct TrainResult {
  ModelParams params;
  Vocabulary vocab;
  std::vector<EpochLog> log;
  std::uint64_t steps = 0;
  std::vector<std::string> warnings;
};

class NanLossError : public Error {
 public:
  NanLossError(std::uint64_t step, std::size_t batch, double max_grad);
  std::uint64_t step;
  std::size_t batch;
  double max_grad;
};

struct BatchGradient {
  double loss = 0.0;               // token-weighted mean NLL of the batch
  std::vector<Tensor> grads;       // aligned with ModelParams::named()
};

// Gradient of the batch's mean token NLL with respect to every parameter.
BatchGradient batch_gradient(const ModelParams& params, const Batch& batch, std::size_t threads = 1);

// Token-weighted mean NLL over whole examples, no gradients.
double mean_token_nll(const ModelParams& params, const std::vector<EncodedExample>& examples);

using EpochCallback = std::function<void(const EpochLog&)>;

// Builds the vocabulary from `dataset`, initializes from the seed and runs Adam.
TrainResult train(const TrainConfig& config, const std::vector<Example>& dataset, const EpochCallback& on_epoch = {});
// Same loop on an already-encoded dataset and a given starting point.
TrainResult train_from(const TrainConfig& config, ModelParams params, Vocabulary vocab,
                       const std::vector<EncodedExample>& examples, const EpochCallback& on_epoch = {});

// One JSON object per line: {"epoch":..,"step":..,"loss":..,"lr":..}.
std::string epoch_log_json(const EpochLog& entry);

// Reads SGST_THREADS; falls back to 1 when unset or invalid.
std::size_t threads_from_env();

}  // namespace sgst
