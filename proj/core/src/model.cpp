#include "clue/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "clue/clustering.hpp"
#include "clue/errors.hpp"
#include "clue/init.hpp"
#include "clue/ops.hpp"

namespace clue::model {

namespace {

LstmParams init_lstm(std::size_t in, std::size_t hidden, std::mt19937_64& rng) {
  LstmParams p;
  p.w_input = glorot_param(in, 4 * hidden, rng);
  p.w_hidden = glorot_param(hidden, 4 * hidden, rng);
  p.bias = constant_param({4 * hidden}, 0.0);
  return p;
}

void check_weight(double w, const char* name) {
  if (!std::isfinite(w) || w < 0.0) {
    throw ConfigError(std::string(name) + " must be finite and >= 0");
  }
}

bool has_recon(Variant v) { return v != Variant::kBaseline; }
bool has_kld(Variant v) { return v == Variant::kCvae; }

void check_finite_scalar(const ad::Tensor& t, const char* what) {
  if (!std::isfinite(t.item())) throw NumericError(std::string(what) + " is not finite");
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kCae: return "cae";
    case Variant::kCvae: return "cvae";
  }
  return "?";
}

std::string_view to_string(ScoreKind s) {
  switch (s) {
    case ScoreKind::kDot: return "dot";
    case ScoreKind::kGeneral: return "general";
    case ScoreKind::kConcat: return "concat";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "baseline") return Variant::kBaseline;
  if (name == "cae") return Variant::kCae;
  if (name == "cvae") return Variant::kCvae;
  throw ConfigError("unknown variant '" + std::string(name) + "' (baseline, cae, cvae)");
}

ScoreKind parse_score_kind(std::string_view name) {
  if (name == "dot") return ScoreKind::kDot;
  if (name == "general") return ScoreKind::kGeneral;
  if (name == "concat") return ScoreKind::kConcat;
  throw ConfigError("unknown score kind '" + std::string(name) + "' (dot, general, concat)");
}

void CluEConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (clusters < 1) throw ConfigError("clusters must be >= 1");
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (embed_dim < 2 || embed_dim % 2 != 0) throw ConfigError("embed_dim must be even and >= 2");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
  if (variant != Variant::kBaseline && latent_hidden < 1) {
    throw ConfigError("latent_hidden must be >= 1");
  }
  check_weight(lambda.cluster, "lambda_cluster");
  check_weight(lambda.recon, "lambda_recon");
  check_weight(lambda.kld, "lambda_kld");
  if (lambda.recon != 0.0 && !has_recon(variant)) {
    throw ConfigError("lambda_recon is set but variant " + std::string(to_string(variant)) +
                      " has no reconstruction term");
  }
  if (lambda.kld != 0.0 && !has_kld(variant)) {
    throw ConfigError("lambda_kld is set but variant " + std::string(to_string(variant)) +
                      " has no KL prior term");
  }
}

// ---------------------------------------------------------------------------

Batch make_batch(std::span<const corpus::Document* const> docs,
                 std::span<const corpus::TfIdfVector* const> tfidf,
                 std::size_t vocab_size, std::size_t num_classes, BatchOptions options) {
  if (docs.empty()) throw DataError("empty batch");
  if (!tfidf.empty() && tfidf.size() != docs.size()) {
    throw ShapeError("make_batch: tf-idf count does not match document count");
  }
  const std::size_t b_size = docs.size();
  std::size_t t_len = 0;
  for (const corpus::Document* d : docs) {
    if (d->true_len == 0) throw DataError("document with no tokens");
    if (d->true_len > d->ids.size()) throw DataError("document true_len exceeds its id count");
    t_len = std::max(t_len, options.trim_to_longest ? d->true_len : d->ids.size());
  }

  Batch batch;
  batch.size = b_size;
  batch.seq_len = t_len;
  batch.ids.assign(t_len * b_size, corpus::kPadId);
  batch.reverse_rows.resize(t_len * b_size);
  batch.mask.assign(t_len * b_size, 0);
  batch.lengths.resize(b_size);
  batch.labels.resize(b_size);
  std::vector<double> targets(b_size * num_classes, 0.0);

  for (std::size_t b = 0; b < b_size; ++b) {
    const corpus::Document& d = *docs[b];
    const std::size_t len = d.true_len;
    batch.lengths[b] = len;
    if (d.label < 0 || static_cast<std::size_t>(d.label) >= num_classes) {
      throw DataError("label " + std::to_string(d.label) + " outside " +
                      std::to_string(num_classes) + " classes");
    }
    batch.labels[b] = d.label;
    targets[b * num_classes + static_cast<std::size_t>(d.label)] = 1.0;
    for (std::size_t t = 0; t < t_len; ++t) {
      const std::size_t row = t * b_size + b;
      if (t < len) {
        const int id = d.ids[t];
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
          throw DataError("token id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(vocab_size));
        }
        batch.ids[row] = id;
        batch.mask[row] = 1;
        batch.reverse_rows[row] = static_cast<int>((len - 1 - t) * b_size + b);
      } else {
        batch.reverse_rows[row] = static_cast<int>(row);
      }
    }
  }
  batch.targets = ad::Tensor({b_size, num_classes}, std::move(targets));

  if (!tfidf.empty()) {
    std::vector<double> dense(b_size * vocab_size, 0.0);
    for (std::size_t b = 0; b < b_size; ++b) {
      for (const corpus::TfIdfEntry& e : *tfidf[b]) {
        if (e.id < 0 || static_cast<std::size_t>(e.id) >= vocab_size) {
          throw DataError("tf-idf id " + std::to_string(e.id) + " outside vocabulary");
        }
        dense[b * vocab_size + static_cast<std::size_t>(e.id)] = e.weight;
      }
    }
    batch.tfidf = ad::Tensor({b_size, vocab_size}, std::move(dense));
  }
  return batch;
}

// ---------------------------------------------------------------------------

double score(std::span<const double> c, std::span<const double> h, ScoreKind kind,
             const ScoreParams& params) {
  if (c.size() != h.size()) throw ShapeError("score: centroid and token widths differ");
  const std::size_t d = c.size();
  switch (kind) {
    case ScoreKind::kDot: {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += c[i] * h[i];
      return s;
    }
    case ScoreKind::kGeneral: {
      if (!params.w_align.defined()) throw ConfigError("general score needs W_a");
      if (params.w_align.shape() != ad::Shape{d, d}) throw ShapeError("score: W_a shape");
      auto w = params.w_align.values();
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) s += c[i] * w[i * d + j] * h[j];
      return s;
    }
    case ScoreKind::kConcat: {
      if (!params.w_concat_c.defined()) throw ConfigError("concat score needs W_c and v");
      const std::size_t dc = params.w_concat_c.dim(1);
      auto wc = params.w_concat_c.values();
      auto wh = params.w_concat_h.values();
      auto v = params.v_concat.values();
      double s = 0.0;
      for (std::size_t j = 0; j < dc; ++j) {
        double pre = 0.0;
        for (std::size_t i = 0; i < d; ++i) pre += c[i] * wc[i * dc + j] + h[i] * wh[i * dc + j];
        s += v[j] * std::tanh(pre);
      }
      return s;
    }
  }
  return 0.0;
}

ad::Tensor align(ad::Tape& tape, const ad::Tensor& centroids, const ad::Tensor& h,
                 ScoreKind kind, const ScoreParams& params) {
  if (centroids.rank() != 2 || h.rank() != 2 || centroids.dim(1) != h.dim(1)) {
    throw ShapeError("align: centroids " + ad::shape_string(centroids.shape()) +
                     " vs tokens " + ad::shape_string(h.shape()));
  }
  const std::size_t rows = h.dim(0), k = centroids.dim(0);
  ad::Tensor scores;
  switch (kind) {
    case ScoreKind::kDot:
      scores = ad::matmul(tape, h, ad::transpose(tape, centroids));
      break;
    case ScoreKind::kGeneral: {
      if (!params.w_align.defined()) throw ConfigError("general score needs W_a");
      ad::Tensor cw = ad::matmul(tape, centroids, params.w_align);
      scores = ad::matmul(tape, h, ad::transpose(tape, cw));
      break;
    }
    case ScoreKind::kConcat: {
      if (!params.w_concat_c.defined()) throw ConfigError("concat score needs W_c and v");
      ad::Tensor pc = ad::matmul(tape, centroids, params.w_concat_c);  // [K, Dc]
      ad::Tensor ph = ad::matmul(tape, h, params.w_concat_h);          // [R, Dc]
      std::vector<int> row_idx(rows * k), cluster_idx(rows * k);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < k; ++j) {
          row_idx[r * k + j] = static_cast<int>(r);
          cluster_idx[r * k + j] = static_cast<int>(j);
        }
      ad::Tensor pre = ad::add(tape, ad::embedding_gather(tape, ph, row_idx),
                               ad::embedding_gather(tape, pc, cluster_idx));
      ad::Tensor flat = ad::matmul(tape, ad::tanh(tape, pre), params.v_concat);
      scores = ad::reshape(tape, flat, {rows, k});
      break;
    }
  }
  return ad::softmax(tape, scores, 1);
}

ad::Tensor kronecker_update(ad::Tape& tape, const ad::Tensor& alignment,
                            const ad::Tensor& h, const ad::Tensor& w_reduce) {
  if (alignment.rank() != 2 || h.rank() != 2 || alignment.dim(0) != h.dim(0)) {
    throw ShapeError("aggregate: alignment " + ad::shape_string(alignment.shape()) +
                     " vs tokens " + ad::shape_string(h.shape()));
  }
  const std::size_t k = alignment.dim(1), d = h.dim(1);
  if (w_reduce.shape() != ad::Shape{k * d, d}) {
    throw ShapeError("aggregate: W_d is " + ad::shape_string(w_reduce.shape()) +
                     ", expected [" + std::to_string(k * d) + ", " + std::to_string(d) + "]");
  }
  return ad::matmul(tape, ad::kron_vec(tape, alignment, h), w_reduce);
}

ad::Tensor aggregate(ad::Tape& tape, const ad::Tensor& alignment, const ad::Tensor& h,
                     const InteractionLayer& layer) {
  ad::Tensor u = kronecker_update(tape, alignment, h, layer.w_reduce);
  return ad::layer_norm(tape, ad::add(tape, u, h), layer.ln_gain, layer.ln_bias);
}

ad::Tensor lstm(ad::Tape& tape, const ad::Tensor& x, const LstmParams& params,
                std::size_t seq_len, std::size_t batch) {
  if (x.rank() != 2 || x.dim(0) != seq_len * batch) {
    throw ShapeError("lstm: input " + ad::shape_string(x.shape()) + " is not time-major [" +
                     std::to_string(seq_len * batch) + ", D]");
  }
  const std::size_t hidden = params.w_hidden.dim(0);
  ad::Tensor xw = ad::add(tape, ad::matmul(tape, x, params.w_input), params.bias);
  ad::Tensor h(ad::Shape{batch, hidden}, 0.0);
  ad::Tensor c(ad::Shape{batch, hidden}, 0.0);
  std::vector<ad::Tensor> outputs;
  outputs.reserve(seq_len);
  for (std::size_t t = 0; t < seq_len; ++t) {
    ad::Tensor gates = ad::slice(tape, xw, 0, t * batch, (t + 1) * batch);
    if (t > 0) gates = ad::add(tape, gates, ad::matmul(tape, h, params.w_hidden));
    ad::Tensor i = ad::sigmoid(tape, ad::slice(tape, gates, 1, 0, hidden));
    ad::Tensor f = ad::sigmoid(tape, ad::slice(tape, gates, 1, hidden, 2 * hidden));
    ad::Tensor g = ad::tanh(tape, ad::slice(tape, gates, 1, 2 * hidden, 3 * hidden));
    ad::Tensor o = ad::sigmoid(tape, ad::slice(tape, gates, 1, 3 * hidden, 4 * hidden));
    c = t > 0 ? ad::add(tape, ad::mul(tape, f, c), ad::mul(tape, i, g)) : ad::mul(tape, i, g);
    h = ad::mul(tape, o, ad::tanh(tape, c));
    outputs.push_back(h);
  }
  return outputs.size() == 1 ? outputs.front() : ad::concat(tape, outputs, 0);
}

// ---------------------------------------------------------------------------

ad::Tensor joint_loss(ad::Tape& tape, const LossTerms& terms, Variant variant,
                      const LossWeights& weights) {
  if (!terms.cls.defined()) throw ShapeError("joint_loss: classification term missing");
  check_weight(weights.cluster, "lambda_cluster");
  check_weight(weights.recon, "lambda_recon");
  check_weight(weights.kld, "lambda_kld");
  ad::Tensor total = terms.cls;
  auto add_term = [&](const ad::Tensor& term, double w, bool available, const char* name) {
    if (w == 0.0) return;
    if (!available) {
      throw ConfigError(std::string(name) + " weight is set but variant " +
                        std::string(to_string(variant)) + " has no such term");
    }
    if (!term.defined()) throw ShapeError(std::string("joint_loss: ") + name + " term missing");
    total = ad::add(tape, total, ad::scale(tape, term, w));
  };
  add_term(terms.cluster, weights.cluster, true, "lambda_cluster");
  add_term(terms.recon, weights.recon, has_recon(variant), "lambda_recon");
  add_term(terms.kld, weights.kld, has_kld(variant), "lambda_kld");
  return total;
}

// ---------------------------------------------------------------------------

CluEModel::CluEModel(CluEConfig config, const corpus::EmbeddingTable& embeddings,
                     const ad::Tensor& centroids, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  const std::size_t d = config_.embed_dim, k = config_.clusters;
  const std::size_t dp = config_.resolved_head_dim();
  if (embeddings.rows != config_.vocab_size || embeddings.dim != d) {
    throw DataError("embedding table is " + std::to_string(embeddings.rows) + " x " +
                    std::to_string(embeddings.dim) + ", model expects " +
                    std::to_string(config_.vocab_size) + " x " + std::to_string(d));
  }
  if (centroids.shape() != ad::Shape{k, d}) {
    throw ConfigError("centroids are " + ad::shape_string(centroids.shape()) + ", expected [" +
                      std::to_string(k) + ", " + std::to_string(d) + "]");
  }
  embedding_ = ad::Tensor::parameter({embeddings.rows, d}, embeddings.values);
  centroids_ = ad::Tensor::parameter({k, d}, std::vector<double>(centroids.values().begin(),
                                                                  centroids.values().end()));

  std::mt19937_64 rng(seed);
  lstm_fwd_ = init_lstm(d, d / 2, rng);
  lstm_bwd_ = init_lstm(d, d / 2, rng);
  layers_.resize(config_.layers);
  for (InteractionLayer& layer : layers_) {
    layer.w_reduce = glorot_param(k * d, d, rng);
    layer.ln_gain = constant_param({d}, 1.0);
    layer.ln_bias = constant_param({d}, 0.0);
  }
  if (config_.score == ScoreKind::kGeneral) {
    score_.w_align = glorot_param(d, d, rng);
  } else if (config_.score == ScoreKind::kConcat) {
    score_.w_concat_c = glorot_param(d, d, rng);
    score_.w_concat_h = glorot_param(d, d, rng);
    score_.v_concat = glorot_param(d, 1, rng);
  }
  head_.ln_gain = constant_param({d}, 1.0);
  head_.ln_bias = constant_param({d}, 0.0);
  head_.w_out = glorot_param(d, dp, rng);
  head_.w_pred = glorot_param(dp, config_.num_classes, rng);
  if (config_.variant == Variant::kBaseline) {
    head_.w_cluster = glorot_param(dp, d, rng);
  } else {
    encoder_ = latent::EncoderParams::init(config_.vocab_size, config_.latent_hidden, d,
                                           config_.variant == Variant::kCvae, rng);
    decoder_ = latent::DecoderParams::init(d, config_.latent_hidden, config_.vocab_size, rng);
  }
}

std::vector<std::pair<std::string, ad::Tensor>> CluEModel::named_parameters() const {
  std::vector<std::pair<std::string, ad::Tensor>> out;
  out.emplace_back("embedding", embedding_);
  out.emplace_back("centroids", centroids_);
  auto add_lstm = [&](const std::string& prefix, const LstmParams& p) {
    out.emplace_back(prefix + ".w_input", p.w_input);
    out.emplace_back(prefix + ".w_hidden", p.w_hidden);
    out.emplace_back(prefix + ".bias", p.bias);
  };
  add_lstm("lstm_fwd", lstm_fwd_);
  add_lstm("lstm_bwd", lstm_bwd_);
  for (std::size_t n = 0; n < layers_.size(); ++n) {
    const std::string prefix = "layer" + std::to_string(n);
    out.emplace_back(prefix + ".w_reduce", layers_[n].w_reduce);
    out.emplace_back(prefix + ".ln_gain", layers_[n].ln_gain);
    out.emplace_back(prefix + ".ln_bias", layers_[n].ln_bias);
  }
  if (score_.w_align.defined()) out.emplace_back("score.w_align", score_.w_align);
  if (score_.w_concat_c.defined()) {
    out.emplace_back("score.w_concat_c", score_.w_concat_c);
    out.emplace_back("score.w_concat_h", score_.w_concat_h);
    out.emplace_back("score.v_concat", score_.v_concat);
  }
  out.emplace_back("head.ln_gain", head_.ln_gain);
  out.emplace_back("head.ln_bias", head_.ln_bias);
  out.emplace_back("head.w_out", head_.w_out);
  out.emplace_back("head.w_pred", head_.w_pred);
  if (head_.w_cluster.defined()) out.emplace_back("head.w_cluster", head_.w_cluster);
  if (encoder_.w_hidden.defined()) {
    for (auto& p : encoder_.named()) out.push_back(std::move(p));
    for (auto& p : decoder_.named()) out.push_back(std::move(p));
  }
  return out;
}

void CluEModel::mask_frozen_grads() {
  auto g = embedding_.grad();
  std::fill_n(g.begin(), embedding_.dim(1), 0.0);
}

ad::Tensor CluEModel::encode(ad::Tape& tape, const Batch& batch, bool training,
                             std::mt19937_64& rng) const {
  ad::Tensor he = ad::embedding_gather(tape, embedding_, batch.ids);
  he = ad::dropout(tape, he, config_.dropout, rng, training);
  ad::Tensor he_rev = ad::embedding_gather(tape, he, batch.reverse_rows);
  ad::Tensor fwd = lstm(tape, he, lstm_fwd_, batch.seq_len, batch.size);
  ad::Tensor bwd_rev = lstm(tape, he_rev, lstm_bwd_, batch.seq_len, batch.size);
  ad::Tensor bwd = ad::embedding_gather(tape, bwd_rev, batch.reverse_rows);
  const ad::Tensor halves[] = {fwd, bwd};
  return ad::concat(tape, halves, 1);
}

ad::Tensor CluEModel::interaction_stack(ad::Tape& tape, const ad::Tensor& h,
                                        std::vector<ad::Tensor>* alignments) const {
  ad::Tensor x = h;
  for (const InteractionLayer& layer : layers_) {
    ad::Tensor a = align(tape, centroids_, x, config_.score, score_);
    if (alignments != nullptr) alignments->push_back(a);
    x = aggregate(tape, a, x, layer);
  }
  return x;
}

ad::Tensor CluEModel::pool(ad::Tape& tape, const ad::Tensor& s, const ad::Tensor& h,
                           const Batch& batch) const {
  ad::Tensor r = ad::layer_norm(tape, ad::add(tape, s, h), head_.ln_gain, head_.ln_bias);
  ad::Tensor y = ad::relu(tape, ad::matmul(tape, r, head_.w_out));
  ad::Tensor y3 = ad::reshape(tape, y, {batch.seq_len, batch.size, y.dim(1)});
  return ad::max_over_axis(tape, y3, 0, batch.mask);
}

ForwardResult CluEModel::forward(ad::Tape& tape, const Batch& batch, bool training,
                                 std::mt19937_64& rng, const ad::Tensor* target) const {
  if (batch.targets.dim(1) != config_.num_classes) {
    throw ShapeError("forward: batch has " + std::to_string(batch.targets.dim(1)) +
                     " classes, model has " + std::to_string(config_.num_classes));
  }
  const bool latent_branch = config_.variant != Variant::kBaseline;
  if (latent_branch && (!batch.tfidf.defined() || batch.tfidf.dim(1) != config_.vocab_size)) {
    throw ShapeError("forward: variant " + std::string(to_string(config_.variant)) +
                     " needs a tf-idf batch of width " + std::to_string(config_.vocab_size));
  }

  ForwardResult res;
  ad::Tensor h = encode(tape, batch, training, rng);
  ad::Tensor s = interaction_stack(tape, h, &res.alignments);
  res.pooled = pool(tape, s, h, batch);
  ad::Tensor od = ad::dropout(tape, res.pooled, config_.dropout, rng, training);
  res.logits = ad::matmul(tape, od, head_.w_pred);
  res.terms.cls = ad::cross_entropy_with_softmax(tape, res.logits, batch.targets);

  switch (config_.variant) {
    case Variant::kBaseline:
      res.z = ad::matmul(tape, res.pooled, head_.w_cluster);
      break;
    case Variant::kCae:
      res.z = latent::encode_ae(tape, batch.tfidf, encoder_);
      break;
    case Variant::kCvae: {
      latent::LatentSample sample = latent::encode_vae(tape, batch.tfidf, encoder_, training, rng);
      res.z = sample.z;
      res.mu = sample.mu;
      res.logvar = sample.logvar;
      res.terms.kld = latent::prior_kl(tape, sample.mu, sample.logvar);
      break;
    }
  }
  if (latent_branch) {
    res.terms.recon = latent::recon_loss(tape, batch.tfidf, latent::decode(tape, res.z, decoder_));
  }
  res.q = clustering::soft_assign(tape, res.z, centroids_, config_.alpha);
  if (target != nullptr && target->shape() != res.q.shape()) {
    throw ShapeError("forward: target is " + ad::shape_string(target->shape()) + ", Q is " +
                     ad::shape_string(res.q.shape()));
  }
  ad::Tensor p = target != nullptr ? *target : clustering::target_distribution(res.q);
  res.terms.cluster = clustering::cluster_kl_loss(tape, p, res.q, clustering::Reduction::kMean);

  res.loss = joint_loss(tape, res.terms, config_.variant, config_.lambda);
  check_finite_scalar(res.terms.cls, "classification loss");
  check_finite_scalar(res.loss, "joint loss");
  return res;
}

}  // namespace clue::model
