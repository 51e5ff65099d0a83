#pragma once

// Adam with global-norm clipping, holdout early stopping and evaluation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "clue/corpus.hpp"
#include "clue/model.hpp"
#include "clue/tensor.hpp"

namespace clue::training {

using NamedTensors = std::vector<std::pair<std::string, ad::Tensor>>;

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_steps = 10000;
  std::size_t patience = 30;  // evaluations without improvement
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  std::size_t eval_every = 50;

  /// Throws ConfigError. A zero learning rate is accepted (frozen run).
  void validate() const;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState for_params(const NamedTensors& params);
};

/// Global L2 norm of all gradients. Throws NumericError naming the first
/// block holding a non-finite gradient.
double global_grad_norm(const NamedTensors& params);

/// Rescales every gradient by clip_norm / g when the global norm g exceeds
/// clip_norm. Returns g (before clipping).
double clip_gradients(const NamedTensors& params, double clip_norm);

/// One bias-corrected Adam update from the current gradients.
void adam_step(const NamedTensors& params, AdamState& state, double learning_rate);

/// Documents with their tf-idf vectors (empty when no idf model is used).
struct Dataset {
  std::vector<corpus::Document> docs;
  std::vector<corpus::TfIdfVector> tfidf;

  std::size_t size() const { return docs.size(); }
  bool empty() const { return docs.empty(); }
};

/// Attaches tf-idf vectors when `idf` is non-null.
Dataset make_dataset(std::vector<corpus::Document> docs, const corpus::IdfModel* idf);

/// Builds the batch for docs[indices], including tf-idf rows when the
/// model variant needs them.
model::Batch batch_for(const model::CluEModel& model, const Dataset& data,
                       std::span<const std::size_t> indices,
                       model::BatchOptions options = {});

struct Metrics {
  std::size_t step = 0;
  std::string split;
  double accuracy = 0.0;
  double loss_cls = 0.0;
  double loss_cluster = 0.0;
  double loss_recon = 0.0;
  double loss_kld = 0.0;
};

/// Eval-mode pass (no dropout, z = mu). Loss components are averaged over
/// batches. Throws DataError on an empty dataset.
Metrics evaluate(const model::CluEModel& model, const Dataset& data, std::size_t batch_size,
                 const std::string& split = "holdout");

/// argmax of the logits per document.
std::vector<int> predict(const model::CluEModel& model, const Dataset& data,
                         std::size_t batch_size);

struct TrainResult {
  std::vector<Metrics> log;  // train and holdout rows per evaluation
  std::vector<double> step_losses;
  Metrics best;
  std::size_t steps = 0;
  bool early_stopped = false;
};

/// Seeded shuffled mini-batches; forward, backward, clip, Adam per step;
/// holdout evaluation every eval_every steps and at the last step. The best
/// holdout state (accuracy, then lower cls loss) is restored at the end.
TrainResult train(model::CluEModel& model, const Dataset& train_set, const Dataset& holdout,
                  const TrainConfig& config,
                  const std::function<void(const Metrics&)>& on_eval = {});

void write_metric_log(std::ostream& out, std::span<const Metrics> log);

}  // namespace clue::training
