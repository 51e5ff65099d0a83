#include "clue/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "clue/errors.hpp"
#include "clue/ops.hpp"
#include "clue/tape.hpp"
#include "clue/text_io.hpp"

namespace clue::training {

namespace {

std::size_t argmax_row(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

double value_or_zero(const ad::Tensor& t) { return t.defined() ? t.item() : 0.0; }

void check_vocabulary(const model::CluEModel& model, const Dataset& data, const char* name) {
  const std::size_t v = model.config().vocab_size;
  for (const corpus::Document& d : data.docs) {
    for (int id : d.ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= v) {
        throw DataError(std::string(name) + " set uses token id " + std::to_string(id) +
                        " but the model vocabulary has " + std::to_string(v) + " entries");
      }
    }
  }
}

bool improves(const Metrics& candidate, const Metrics& best, bool have_best) {
  if (!have_best) return true;
  if (candidate.accuracy != best.accuracy) return candidate.accuracy > best.accuracy;
  return candidate.loss_cls < best.loss_cls;
}

std::vector<std::vector<double>> snapshot(const NamedTensors& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

void restore(const NamedTensors& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor t = params[i].second;
    std::copy(values[i].begin(), values[i].end(), t.values().begin());
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and >= 0");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
}

AdamState AdamState::for_params(const NamedTensors& params) {
  AdamState s;
  for (const auto& [name, t] : params) {
    s.m.emplace_back(t.size(), 0.0);
    s.v.emplace_back(t.size(), 0.0);
  }
  return s;
}

double global_grad_norm(const NamedTensors& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter block " + name);
      sq += g * g;
    }
  }
  return std::sqrt(sq);
}

double clip_gradients(const NamedTensors& params, double clip_norm) {
  const double norm = global_grad_norm(params);
  if (norm > clip_norm) {
    const double factor = clip_norm / norm;
    for (const auto& [name, t] : params) {
      ad::Tensor handle = t;
      for (double& g : handle.grad()) g *= factor;
    }
  }
  return norm;
}

void adam_step(const NamedTensors& params, AdamState& state, double learning_rate) {
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state does not match params");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor p = params[i].second;
    auto w = p.values();
    auto g = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != w.size()) throw ShapeError("adam_step: moment size mismatch for " + params[i].first);
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      w[j] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

Dataset make_dataset(std::vector<corpus::Document> docs, const corpus::IdfModel* idf) {
  Dataset data;
  data.docs = std::move(docs);
  if (idf != nullptr) {
    data.tfidf.reserve(data.docs.size());
    for (const corpus::Document& d : data.docs) data.tfidf.push_back(idf->transform(d));
  }
  return data;
}

model::Batch batch_for(const model::CluEModel& model, const Dataset& data,
                       std::span<const std::size_t> indices, model::BatchOptions options) {
  const model::CluEConfig& cfg = model.config();
  const bool needs_tfidf = cfg.variant != model::Variant::kBaseline;
  if (needs_tfidf && data.tfidf.size() != data.docs.size()) {
    throw DataError("variant " + std::string(model::to_string(cfg.variant)) +
                    " needs tf-idf features for every document");
  }
  std::vector<const corpus::Document*> docs;
  std::vector<const corpus::TfIdfVector*> tfidf;
  docs.reserve(indices.size());
  for (std::size_t i : indices) {
    docs.push_back(&data.docs.at(i));
    if (needs_tfidf) tfidf.push_back(&data.tfidf[i]);
  }
  return model::make_batch(docs, tfidf, cfg.vocab_size, cfg.num_classes, options);
}

Metrics evaluate(const model::CluEModel& model, const Dataset& data, std::size_t batch_size,
                 const std::string& split) {
  if (data.empty()) throw DataError("cannot evaluate on an empty " + split + " set");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  Metrics m;
  m.split = split;
  std::size_t correct = 0, batches = 0;
  std::mt19937_64 rng(0);  // unused in eval mode
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    model::Batch batch = batch_for(model, data, idx);
    ad::Tape tape(ad::Tape::Mode::kInference);
    model::ForwardResult res = model.forward(tape, batch, false, rng);
    const std::size_t c = res.logits.dim(1);
    auto logits = res.logits.values();
    for (std::size_t b = 0; b < batch.size; ++b) {
      if (static_cast<int>(argmax_row(logits.subspan(b * c, c))) == batch.labels[b]) ++correct;
    }
    m.loss_cls += value_or_zero(res.terms.cls);
    m.loss_cluster += value_or_zero(res.terms.cluster);
    m.loss_recon += value_or_zero(res.terms.recon);
    m.loss_kld += value_or_zero(res.terms.kld);
    ++batches;
  }
  const double nb = static_cast<double>(batches);
  m.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  m.loss_cls /= nb;
  m.loss_cluster /= nb;
  m.loss_recon /= nb;
  m.loss_kld /= nb;
  return m;
}

std::vector<int> predict(const model::CluEModel& model, const Dataset& data,
                         std::size_t batch_size) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<int> out;
  out.reserve(data.size());
  std::mt19937_64 rng(0);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    model::Batch batch = batch_for(model, data, idx);
    ad::Tape tape(ad::Tape::Mode::kInference);
    model::ForwardResult res = model.forward(tape, batch, false, rng);
    const std::size_t c = res.logits.dim(1);
    auto logits = res.logits.values();
    for (std::size_t b = 0; b < batch.size; ++b) {
      out.push_back(static_cast<int>(argmax_row(logits.subspan(b * c, c))));
    }
  }
  return out;
}

TrainResult train(model::CluEModel& model, const Dataset& train_set, const Dataset& holdout,
                  const TrainConfig& config,
                  const std::function<void(const Metrics&)>& on_eval) {
  config.validate();
  if (train_set.empty()) throw DataError("empty training set");
  if (holdout.empty()) throw DataError("empty holdout set");
  check_vocabulary(model, train_set, "training");
  check_vocabulary(model, holdout, "holdout");

  const NamedTensors params = model.named_parameters();
  AdamState adam = AdamState::for_params(params);
  std::mt19937_64 order_rng(config.seed);
  std::mt19937_64 noise_rng(config.seed ^ 0x9E3779B97F4A7C15ULL);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  TrainResult result;
  std::vector<std::vector<double>> best_values;
  bool have_best = false;
  std::size_t stale = 0;

  Metrics running;
  running.split = "train";
  std::size_t running_batches = 0, running_correct = 0, running_docs = 0;

  auto run_eval = [&](std::size_t step) {
    Metrics tr = running;
    tr.step = step;
    if (running_batches > 0) {
      const double nb = static_cast<double>(running_batches);
      tr.accuracy = static_cast<double>(running_correct) / static_cast<double>(running_docs);
      tr.loss_cls /= nb;
      tr.loss_cluster /= nb;
      tr.loss_recon /= nb;
      tr.loss_kld /= nb;
    }
    result.log.push_back(tr);
    running = Metrics{};
    running.split = "train";
    running_batches = running_correct = running_docs = 0;

    Metrics hm = evaluate(model, holdout, config.batch_size, "holdout");
    hm.step = step;
    result.log.push_back(hm);
    if (on_eval) on_eval(hm);
    if (improves(hm, result.best, have_best)) {
      result.best = hm;
      best_values = snapshot(params);
      have_best = true;
      stale = 0;
    } else {
      ++stale;
    }
  };

  std::vector<std::size_t> idx;
  for (std::size_t step = 1; step <= config.max_steps; ++step) {
    if (cursor >= order.size()) {
      std::shuffle(order.begin(), order.end(), order_rng);
      cursor = 0;
    }
    const std::size_t end = std::min(order.size(), cursor + config.batch_size);
    idx.assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
               order.begin() + static_cast<std::ptrdiff_t>(end));
    cursor = end;

    model::Batch batch = batch_for(model, train_set, idx);
    for (const auto& [name, t] : params) {
      ad::Tensor handle = t;
      handle.zero_grad();
    }
    ad::Tape tape(ad::Tape::Mode::kRecord);
    model::ForwardResult res = model.forward(tape, batch, true, noise_rng);
    result.step_losses.push_back(res.loss.item());

    const std::size_t c = res.logits.dim(1);
    auto logits = res.logits.values();
    for (std::size_t b = 0; b < batch.size; ++b) {
      if (static_cast<int>(argmax_row(logits.subspan(b * c, c))) == batch.labels[b]) {
        ++running_correct;
      }
    }
    running_docs += batch.size;
    running.loss_cls += value_or_zero(res.terms.cls);
    running.loss_cluster += value_or_zero(res.terms.cluster);
    running.loss_recon += value_or_zero(res.terms.recon);
    running.loss_kld += value_or_zero(res.terms.kld);
    ++running_batches;

    tape.backward(res.loss);
    model.mask_frozen_grads();
    clip_gradients(params, config.clip_norm);
    adam_step(params, adam, config.learning_rate);
    result.steps = step;

    if (step % config.eval_every == 0 || step == config.max_steps) {
      run_eval(step);
      if (stale >= config.patience) {
        result.early_stopped = true;
        break;
      }
    }
  }
  if (have_best) restore(params, best_values);
  for (const auto& [name, t] : params) {
    ad::Tensor handle = t;
    handle.zero_grad();
  }
  return result;
}

void write_metric_log(std::ostream& out, std::span<const Metrics> log) {
  out << "step\tsplit\taccuracy\tloss_cls\tloss_cluster\tloss_recon\tloss_kld\n";
  for (const Metrics& m : log) {
    out << m.step << '\t' << m.split << '\t' << text::format_double(m.accuracy) << '\t'
        << text::format_double(m.loss_cls) << '\t' << text::format_double(m.loss_cluster) << '\t'
        << text::format_double(m.loss_recon) << '\t' << text::format_double(m.loss_kld) << '\n';
  }
}

}  // namespace clue::training
