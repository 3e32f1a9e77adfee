#include "sgst/trainer.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "sgst/decoder.hpp"

namespace sgst {

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.model = ModelConfig::paper();
  c.batch_tokens = 2048;
  c.epochs = 10;
  c.max_steps = 0;
  c.schedule = LearningRateSchedule{1e-3, 4000};
  return c;
}

void TrainConfig::validate() const {
  if (batch_tokens == 0) throw ContractError("batch_tokens must be positive");
  if (threads == 0) throw ContractError("threads must be positive");
  if (!(schedule.peak >= 0.0) || !std::isfinite(schedule.peak)) throw DomainError("learning rate must be finite and >= 0");
}

NanLossError::NanLossError(std::uint64_t step_, std::size_t batch_, double max_grad_)
    : Error("non-finite loss at step " + std::to_string(step_) + " (batch " + std::to_string(batch_) +
            ", max |grad| " + std::to_string(max_grad_) + ")"),
      step(step_),
      batch(batch_),
      max_grad(max_grad_) {}

namespace {

struct ExampleGradient {
  double nll_sum = 0.0;
  std::vector<Tensor> grads;
};

std::size_t count_targets(const std::vector<int>& targets) {
  std::size_t n = 0;
  for (int t : targets) n += t != Vocabulary::kPad ? 1 : 0;
  return n;
}

// Padding sits at the end of every graph and sequence and never reaches a real position, so
// dropping it leaves the loss and gradients unchanged while skipping the wasted work.
GraphInput strip_padding(const GraphInput& g) {
  std::size_t n = 0;
  while (n < g.size() && g.valid[n] != 0) ++n;
  if (n == g.size()) return g;
  GraphInput out;
  out.labels.assign(g.labels.begin(), g.labels.begin() + static_cast<std::ptrdiff_t>(n));
  out.ranks.assign(g.ranks.begin(), g.ranks.begin() + static_cast<std::ptrdiff_t>(n));
  out.valid.assign(g.valid.begin(), g.valid.begin() + static_cast<std::ptrdiff_t>(n));
  out.mask = BoolMatrix(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) out.mask.set(r, c, g.mask.get(r, c));
  }
  return out;
}

ExampleGradient example_gradient(const ModelParams& params, const Batch& batch, std::size_t i, double weight) {
  const std::size_t len = count_targets(batch.targets[i]);
  const std::span<const int> inputs(batch.inputs[i].data(), len);
  const std::span<const int> targets(batch.targets[i].data(), len);
  Tape tape;
  ParamBinding bind(tape);
  const NodeId loss = example_loss(bind, params, strip_padding(batch.graphs[i]), inputs, targets);
  const double n = static_cast<double>(len);
  ExampleGradient out;
  out.nll_sum = tape.value(loss)[0] * n;
  Gradients grads = tape.backward(loss, weight * n);
  for (const auto& [name, t] : params.named()) {
    const auto id = bind.find(*t);
    if (id && grads.has(*id)) {
      out.grads.push_back(*grads.take(*id));
    } else {
      out.grads.emplace_back(t->shape());
    }
  }
  return out;
}

}  // namespace

BatchGradient batch_gradient(const ModelParams& params, const Batch& batch, std::size_t threads) {
  if (batch.size() == 0) throw ContractError("batch_gradient: empty batch");
  if (batch.target_tokens == 0) throw ContractError("batch_gradient: batch has no target tokens");
  const double weight = 1.0 / static_cast<double>(batch.target_tokens);
  std::vector<ExampleGradient> per(batch.size());
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), batch.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) per[i] = example_gradient(params, batch, i, weight);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < batch.size(); i += workers) per[i] = example_gradient(params, batch, i, weight);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  BatchGradient out;
  out.grads = std::move(per[0].grads);
  double nll = per[0].nll_sum;
  for (std::size_t i = 1; i < per.size(); ++i) {
    nll += per[i].nll_sum;
    for (std::size_t k = 0; k < out.grads.size(); ++k) out.grads[k] += per[i].grads[k];
  }
  out.loss = nll * weight;
  return out;
}

double mean_token_nll(const ModelParams& params, const std::vector<EncodedExample>& examples) {
  if (examples.empty()) throw ContractError("mean_token_nll: no examples");
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : examples) {
    Tape tape(false);
    ParamBinding bind(tape);
    const NodeId loss = example_loss(bind, params, ex.graph, ex.inputs, ex.targets);
    const std::size_t n = count_targets(ex.targets);
    total += tape.value(loss)[0] * static_cast<double>(n);
    tokens += n;
  }
  return total / static_cast<double>(tokens);
}

TrainResult train(const TrainConfig& config, const std::vector<Example>& dataset, const EpochCallback& on_epoch) {
  if (dataset.empty()) throw ContractError("train: dataset is empty");
  Vocabulary vocab = build_vocabulary(dataset);
  ModelConfig model = config.model;
  model.vocab_size = vocab.size();
  ModelParams params = ModelParams::init(model, config.seed);
  const auto examples = encode_examples(dataset, vocab, model.neighborhood);
  return train_from(config, std::move(params), std::move(vocab), examples, on_epoch);
}

TrainResult train_from(const TrainConfig& config, ModelParams params, Vocabulary vocab,
                       const std::vector<EncodedExample>& examples, const EpochCallback& on_epoch) {
  config.validate();
  params.config.validate();
  if (examples.empty()) throw ContractError("train: dataset is empty");
  TrainResult result{std::move(params), std::move(vocab), {}, 0, {}};
  ModelParams& p = result.params;
  std::vector<Tensor*> slots;
  for (const auto& [name, t] : p.named()) slots.push_back(t);
  AdamState adam;

  std::seed_seq base{config.seed, std::uint64_t{0x5b47}};
  std::vector<std::uint32_t> words(2);
  base.generate(words.begin(), words.end());
  const std::uint64_t shuffle_seed = (std::uint64_t{words[0]} << 32) | words[1];

  bool done = false;
  for (std::size_t epoch = 0; epoch < config.epochs && !done; ++epoch) {
    const auto batches = make_batches(examples, config.batch_tokens, shuffle_seed + epoch,
                                      epoch == 0 ? &result.warnings : nullptr);
    double loss_sum = 0.0;
    std::size_t token_sum = 0;
    double lr = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      if (config.max_steps != 0 && result.steps >= config.max_steps) {
        done = true;
        break;
      }
      BatchGradient g = batch_gradient(p, batches[b], config.threads);
      if (!std::isfinite(g.loss)) {
        double max_grad = 0.0;
        for (const auto& t : g.grads) max_grad = std::max(max_grad, t.max_abs());
        throw NanLossError(result.steps + 1, b, max_grad);
      }
      ++result.steps;
      lr = config.schedule.at(result.steps);
      adam_step(slots, g.grads, adam, lr, config.adam);
      loss_sum += g.loss * static_cast<double>(batches[b].target_tokens);
      token_sum += batches[b].target_tokens;
    }
    if (token_sum == 0) break;
    EpochLog entry{epoch, result.steps, loss_sum / static_cast<double>(token_sum), lr};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (config.target_loss > 0.0 && entry.loss <= config.target_loss) done = true;
  }
  return result;
}

std::string epoch_log_json(const EpochLog& entry) {
  nlohmann::json j = {{"epoch", entry.epoch}, {"step", entry.step}, {"loss", entry.loss}, {"lr", entry.lr}};
  return j.dump();
}

std::size_t threads_from_env() {
  const char* raw = std::getenv("SGST_THREADS");
  if (raw == nullptr) return 1;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (end == raw || *end != '\0' || v < 1) return 1;
  return static_cast<std::size_t>(v);
}

}  // namespace sgst
