#pragma once

// Finite-difference checks over every primitive and every composite loss,
// on random shapes with extents <= 7.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "clue/clustering.hpp"
#include "clue/grad_check.hpp"
#include "clue/latent.hpp"
#include "clue/model.hpp"
#include "clue/ops.hpp"
#include "toy_corpus.hpp"

namespace gradsuite {

using clue::ad::Shape;
using clue::ad::Tape;
using clue::ad::Tensor;

struct Case {
  std::string name;
  bool composite = false;
  std::function<double(std::mt19937_64&)> run;
};

inline std::size_t extent(std::mt19937_64& rng, std::size_t lo = 1, std::size_t hi = 7) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

/// Random values bounded away from zero (for relu kinks and logs).
inline Tensor away_from_zero(Shape shape, std::mt19937_64& rng) {
  Tensor t = toy::random_tensor(std::move(shape), rng, 0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (double& v : t.values()) v = sign(rng) ? v : -v;
  return t;
}

/// grad_check of sum(f(x) * w) with a fixed random w, so every output
/// element contributes an O(1) gradient.
inline double weighted(const std::function<Tensor(Tape&)>& f, std::vector<Tensor> inputs,
                       std::mt19937_64& rng) {
  Tape probe(Tape::Mode::kInference);
  Tensor out = f(probe);
  Tensor w = toy::random_tensor(out.shape(), rng, -1.0, 1.0, false);
  clue::ad::LossFn loss = [&](Tape& t) {
    return clue::ad::sum(t, clue::ad::mul(t, f(t), w));
  };
  return clue::ad::grad_check(loss, inputs);
}

inline double scalar_loss(const clue::ad::LossFn& f, std::vector<Tensor> inputs) {
  return clue::ad::grad_check(f, inputs);
}

inline std::vector<Case> primitive_cases() {
  namespace ad = clue::ad;
  std::vector<Case> cases;
  auto add = [&](std::string name, std::function<double(std::mt19937_64&)> fn) {
    cases.push_back({std::move(name), false, std::move(fn)});
  };

  add("matmul", [](std::mt19937_64& rng) {
    const auto m = extent(rng), k = extent(rng), n = extent(rng);
    Tensor a = toy::random_tensor({m, k}, rng), b = toy::random_tensor({k, n}, rng);
    return weighted([&](Tape& t) { return ad::matmul(t, a, b); }, {a, b}, rng);
  });
  add("transpose", [](std::mt19937_64& rng) {
    Tensor a = toy::random_tensor({extent(rng), extent(rng)}, rng);
    return weighted([&](Tape& t) { return ad::transpose(t, a); }, {a}, rng);
  });
  add("add", [](std::mt19937_64& rng) {
    const Shape s = {extent(rng), extent(rng)};
    Tensor a = toy::random_tensor(s, rng), b = toy::random_tensor(s, rng);
    return weighted([&](Tape& t) { return ad::add(t, a, b); }, {a, b}, rng);
  });
  add("add_broadcast", [](std::mt19937_64& rng) {
    const auto r = extent(rng), c = extent(rng), d = extent(rng);
    Tensor a = toy::random_tensor({r, c, d}, rng), b = toy::random_tensor({c, d}, rng);
    return weighted([&](Tape& t) { return ad::add(t, a, b); }, {a, b}, rng);
  });
  add("sub", [](std::mt19937_64& rng) {
    const auto r = extent(rng), c = extent(rng);
    Tensor a = toy::random_tensor({r, c}, rng), b = toy::random_tensor({c}, rng);
    return weighted([&](Tape& t) { return ad::sub(t, a, b); }, {a, b}, rng);
  });
  add("mul", [](std::mt19937_64& rng) {
    const Shape s = {extent(rng), extent(rng)};
    Tensor a = toy::random_tensor(s, rng), b = toy::random_tensor(s, rng);
    return weighted([&](Tape& t) { return ad::mul(t, a, b); }, {a, b}, rng);
  });
  add("mul_broadcast", [](std::mt19937_64& rng) {
    const auto r = extent(rng), c = extent(rng);
    Tensor a = toy::random_tensor({r, c}, rng), b = toy::random_tensor({c}, rng);
    return weighted([&](Tape& t) { return ad::mul(t, a, b); }, {a, b}, rng);
  });
  add("scale", [](std::mt19937_64& rng) {
    Tensor a = toy::random_tensor({extent(rng), extent(rng)}, rng);
    return weighted([&](Tape& t) { return ad::scale(t, a, -1.7); }, {a}, rng);
  });
  add("add_scalar", [](std::mt19937_64& rng) {
    Tensor a = toy::random_tensor({extent(rng)}, rng);
    return weighted([&](Tape& t) { return ad::add_scalar(t, a, 0.3); }, {a}, rng);
  });
  add("relu", [](std::mt19937_64& rng) {
    Tensor a = away_from_zero({extent(rng), extent(rng)}, rng);
    return weighted([&](Tape& t) { return ad::relu(t, a); }, {a}, rng);
  });
  add("tanh", [](std::mt19937_64& rng) {
    Tensor a = toy::random_tensor({extent(rng), extent(rng)}, rng, -2.0, 2.0);
    return weighted([&](Tape& t) { return ad::tanh(t, a); }, {a}, rng);
  });
  add("sigmoid", [](std::mt19937_64& rng) {
    Tensor a = toy::random_tensor({extent(rng), extent(rng)}, rng, -3.0, 3.0);
    return weighted([&](Tape& t) { return ad::sigmoid(t, a); }, {a}, rng);
  });
  add("exp", [](std::mt19937_64& rng) {
    Tensor a = toy::random_tensor({extent(rng), extent(rng)}, rng);
    return weighted([&](Tape& t) { return ad::exp(t, a); }, {a}, rng);
  });
  add("log", [](std::mt19937_64& rng) {
    Tensor a = toy::random_tensor({extent(rng), extent(rng)}, rng, 0.2, 2.0);
    return weighted([&](Tape& t) { return ad::log(t, a); }, {a}, rng);
  });
  add("reshape", [](std::mt19937_64& rng) {
    const auto r = extent(rng), c = extent(rng);
    Tensor a = toy::random_tensor({r, c}, rng);
    return weighted([&](Tape& t) { return ad::reshape(t, a, {c, r}); }, {a}, rng);
  });
  add("concat_axis0", [](std::mt19937_64& rng) {
    const auto c = extent(rng);
    Tensor a = toy::random_tensor({extent(rng), c}, rng), b = toy::random_tensor({extent(rng), c}, rng);
    return weighted([&](Tape& t) {
      const Tensor parts[] = {a, b};
      return ad::concat(t, parts, 0);
    }, {a, b}, rng);
  });
  add("concat_axis1", [](std::mt19937_64& rng) {
    const auto r = extent(rng);
    Tensor a = toy::random_tensor({r, extent(rng)}, rng), b = toy::random_tensor({r, extent(rng)}, rng);
    return weighted([&](Tape& t) {
      const Tensor parts[] = {a, b};
      return ad::concat(t, parts, 1);
    }, {a, b}, rng);
  });
  add("slice", [](std::mt19937_64& rng) {
    const auto r = extent(rng), c = extent(rng, 2);
    Tensor a = toy::random_tensor({r, c}, rng);
    const std::size_t begin = rng() % (c - 1);
    return weighted([&](Tape& t) { return ad::slice(t, a, 1, begin, c); }, {a}, rng);
  });
  add("embedding_gather", [](std::mt19937_64& rng) {
    const auto v = extent(rng, 2), d = extent(rng);
    Tensor table = toy::random_tensor({v, d}, rng);
    std::vector<int> ids(extent(rng));
    for (int& id : ids) id = static_cast<int>(rng() % v);
    return weighted([&](Tape& t) { return ad::embedding_gather(t, table, ids); }, {table}, rng);
  });
  add("sum", [](std::mt19937_64& rng) {
    Tensor a = toy::random_tensor({extent(rng), extent(rng)}, rng);
    return weighted([&](Tape& t) { return ad::sum(t, a); }, {a}, rng);
  });
  add("l2_norm", [](std::mt19937_64& rng) {
    Tensor a = toy::random_tensor({extent(rng), extent(rng)}, rng);
    return weighted([&](Tape& t) { return ad::l2_norm(t, a); }, {a}, rng);
  });
  add("softmax_axis0", [](std::mt19937_64& rng) {
    Tensor a = toy::random_tensor({extent(rng, 2), extent(rng)}, rng, -2.0, 2.0);
    return weighted([&](Tape& t) { return ad::softmax(t, a, 0); }, {a}, rng);
  });
  add("softmax_axis1", [](std::mt19937_64& rng) {
    Tensor a = toy::random_tensor({extent(rng), extent(rng, 2)}, rng, -2.0, 2.0);
    return weighted([&](Tape& t) { return ad::softmax(t, a, 1); }, {a}, rng);
  });
  add("layer_norm", [](std::mt19937_64& rng) {
    const auto r = extent(rng), d = extent(rng, 2);
    Tensor x = toy::random_tensor({r, d}, rng, -2.0, 2.0);
    Tensor g = toy::random_tensor({d}, rng, 0.5, 1.5), b = toy::random_tensor({d}, rng);
    return weighted([&](Tape& t) { return ad::layer_norm(t, x, g, b); }, {x, g, b}, rng);
  });
  add("max_over_axis", [](std::mt19937_64& rng) {
    const auto tl = extent(rng), bsz = extent(rng), d = extent(rng);
    Tensor x = toy::random_tensor({tl, bsz, d}, rng);
    std::vector<char> mask(tl * bsz, 0);
    for (std::size_t b = 0; b < bsz; ++b) {
      const std::size_t len = 1 + rng() % tl;
      for (std::size_t t = 0; t < len; ++t) mask[t * bsz + b] = 1;
    }
    return weighted([&](Tape& t) { return ad::max_over_axis(t, x, 0, mask); }, {x}, rng);
  });
  add("dropout", [](std::mt19937_64& rng) {
    Tensor x = toy::random_tensor({extent(rng), extent(rng)}, rng);
    const std::uint64_t seed = rng();
    return weighted([&](Tape& t) {
      std::mt19937_64 local(seed);
      return ad::dropout(t, x, 0.3, local, true);
    }, {x}, rng);
  });
  add("mse", [](std::mt19937_64& rng) {
    const Shape s = {extent(rng), extent(rng)};
    Tensor p = toy::random_tensor(s, rng), q = toy::random_tensor(s, rng);
    return weighted([&](Tape& t) { return ad::mse(t, p, q); }, {p, q}, rng);
  });
  add("cross_entropy_with_softmax", [](std::mt19937_64& rng) {
    const auto b = extent(rng), c = extent(rng, 2);
    Tensor logits = toy::random_tensor({b, c}, rng, -2.0, 2.0);
    std::vector<double> y(b * c, 0.0);
    for (std::size_t i = 0; i < b; ++i) y[i * c + rng() % c] = 1.0;
    Tensor target({b, c}, y);
    return weighted([&](Tape& t) { return ad::cross_entropy_with_softmax(t, logits, target); },
                    {logits}, rng);
  });
  add("kron_vec", [](std::mt19937_64& rng) {
    Tensor a = toy::random_tensor({extent(rng)}, rng), b = toy::random_tensor({extent(rng)}, rng);
    return weighted([&](Tape& t) { return ad::kron_vec(t, a, b); }, {a, b}, rng);
  });
  add("kron_vec_rows", [](std::mt19937_64& rng) {
    const auto r = extent(rng);
    Tensor a = toy::random_tensor({r, extent(rng)}, rng), b = toy::random_tensor({r, extent(rng)}, rng);
    return weighted([&](Tape& t) { return ad::kron_vec(t, a, b); }, {a, b}, rng);
  });
  add("pairwise_sq_dist", [](std::mt19937_64& rng) {
    const auto d = extent(rng);
    Tensor a = toy::random_tensor({extent(rng), d}, rng), b = toy::random_tensor({extent(rng), d}, rng);
    return weighted([&](Tape& t) { return ad::pairwise_sq_dist(t, a, b); }, {a, b}, rng);
  });
  return cases;
}

/// Small model configuration used by the composite checks.
inline clue::model::CluEConfig tiny_config(clue::model::Variant variant, std::size_t vocab) {
  clue::model::CluEConfig cfg;
  cfg.variant = variant;
  cfg.vocab_size = vocab;
  cfg.num_classes = 2;
  cfg.clusters = 2;
  cfg.layers = 2;
  cfg.embed_dim = 4;
  cfg.latent_hidden = 3;
  cfg.max_len = 4;
  cfg.lambda.recon = variant == clue::model::Variant::kBaseline ? 0.0 : 1.0;
  cfg.lambda.kld = variant == clue::model::Variant::kCvae ? 1.0 : 0.0;
  return cfg;
}

inline std::vector<Tensor> model_params(const clue::model::CluEModel& m) {
  std::vector<Tensor> out;
  for (auto& [name, t] : m.named_parameters()) out.push_back(t);
  return out;
}

/// grad_check of the full joint loss on a random two-document batch.
inline double full_model_check(clue::model::Variant variant, clue::model::ScoreKind score,
                               bool training, std::mt19937_64& rng) {
  namespace corpus = clue::corpus;
  const std::size_t vocab = 8;
  clue::model::CluEConfig cfg = tiny_config(variant, vocab);
  cfg.score = score;
  corpus::Vocabulary v = corpus::Vocabulary::build(
      std::vector<std::vector<std::string>>{{"a", "a", "a", "a", "b", "b", "b", "b", "c", "c",
                                             "c", "c", "d", "d", "d", "d", "e", "e", "e", "e",
                                             "f", "f", "f", "f"}});
  corpus::EmbeddingTable emb = corpus::random_embeddings(v, cfg.embed_dim, rng());
  for (std::size_t i = corpus::kPadId + 1; i < emb.values.size() / cfg.embed_dim; ++i) {
    for (double& x : emb.row(i)) x *= 10.0;
  }
  Tensor centers = toy::random_tensor({cfg.clusters, cfg.embed_dim}, rng, -0.5, 0.5, false);
  clue::model::CluEModel model(cfg, emb, centers, rng());

  std::vector<corpus::Document> docs(2);
  for (std::size_t b = 0; b < docs.size(); ++b) {
    docs[b].true_len = 1 + b;  // lengths 1 and 2
    docs[b].ids.assign(cfg.max_len, corpus::kPadId);
    for (std::size_t t = 0; t < docs[b].true_len; ++t) {
      docs[b].ids[t] = 2 + static_cast<int>(rng() % (vocab - 2));
    }
    docs[b].label = static_cast<int>(b);
    docs[b].num_classes = 2;
  }
  corpus::IdfModel idf = corpus::IdfModel::fit(docs, vocab);
  std::vector<corpus::TfIdfVector> tf = {idf.transform(docs[0]), idf.transform(docs[1])};
  std::vector<const corpus::Document*> dp = {&docs[0], &docs[1]};
  std::vector<const corpus::TfIdfVector*> tp;
  if (variant != clue::model::Variant::kBaseline) tp = {&tf[0], &tf[1]};
  clue::model::Batch batch = clue::model::make_batch(dp, tp, vocab, 2);
  // Relu units sitting exactly at zero (zero biases, dead hidden layer)
  // have no central difference; move every bias off zero.
  for (auto& [name, t] : model.named_parameters()) {
    if (name.ends_with("bias") || name.find(".b_") != std::string::npos) {
      Tensor shifted = away_from_zero(t.shape(), rng);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.1 * shifted[i];
    }
  }
  const std::uint64_t seed = rng();
  // P is a constant of the loss; freeze it at the unperturbed parameters.
  Tape probe(Tape::Mode::kInference);
  std::mt19937_64 probe_rng(seed);
  const Tensor p =
      clue::clustering::target_distribution(model.forward(probe, batch, training, probe_rng).q);
  clue::ad::LossFn loss = [&](Tape& t) {
    std::mt19937_64 local(seed);
    return model.forward(t, batch, training, local, &p).loss;
  };
  std::vector<Tensor> params = model_params(model);
  return clue::ad::grad_check(loss, params);
}

inline std::vector<Case> composite_cases() {
  namespace ad = clue::ad;
  namespace cl = clue::clustering;
  namespace lt = clue::latent;
  using clue::model::ScoreKind;
  using clue::model::Variant;
  std::vector<Case> cases;
  auto add = [&](std::string name, std::function<double(std::mt19937_64&)> fn) {
    cases.push_back({std::move(name), true, std::move(fn)});
  };

  add("soft_assign", [](std::mt19937_64& rng) {
    const auto d = extent(rng);
    Tensor z = toy::random_tensor({extent(rng), d}, rng), c = toy::random_tensor({extent(rng, 2), d}, rng);
    return weighted([&](Tape& t) { return cl::soft_assign(t, z, c); }, {z, c}, rng);
  });
  add("cluster_kl_loss", [](std::mt19937_64& rng) {
    const auto d = extent(rng);
    Tensor z = toy::random_tensor({extent(rng, 2), d}, rng), c = toy::random_tensor({extent(rng, 2), d}, rng);
    Tape probe(Tape::Mode::kInference);
    Tensor p = cl::target_distribution(cl::soft_assign(probe, z, c));
    return scalar_loss([&](Tape& t) { return cl::cluster_kl_loss(t, p, cl::soft_assign(t, z, c)); },
                       {z, c});
  });
  add("recon_loss", [](std::mt19937_64& rng) {
    const auto n = extent(rng), v = extent(rng, 2), h = extent(rng), d = extent(rng);
    Tensor x = toy::random_tensor({n, v}, rng, 0.0, 1.0, false);
    lt::EncoderParams enc = lt::EncoderParams::init(v, h, d, false, rng);
    lt::DecoderParams dec = lt::DecoderParams::init(d, h, v, rng);
    enc.b_hidden = away_from_zero({h}, rng);
    dec.b_hidden = away_from_zero({h}, rng);
    return scalar_loss([&](Tape& t) {
      return lt::recon_loss(t, x, lt::decode(t, lt::encode_ae(t, x, enc), dec));
    }, {enc.w_hidden, enc.b_hidden, enc.w_mu, enc.b_mu, dec.w_hidden, dec.b_hidden, dec.w_out, dec.b_out});
  });
  add("reparameterized_sample", [](std::mt19937_64& rng) {
    const auto n = extent(rng), v = extent(rng, 2), h = extent(rng), d = extent(rng);
    Tensor x = toy::random_tensor({n, v}, rng, 0.0, 1.0, false);
    lt::EncoderParams enc = lt::EncoderParams::init(v, h, d, true, rng);
    enc.b_hidden = away_from_zero({h}, rng);
    Tensor eps = toy::random_tensor({n, d}, rng, -2.0, 2.0, false);
    return weighted([&](Tape& t) { return lt::encode_vae(t, x, enc, eps).z; },
                    {enc.w_hidden, enc.b_hidden, enc.w_mu, enc.b_mu, enc.w_logvar, enc.b_logvar}, rng);
  });
  add("prior_kl", [](std::mt19937_64& rng) {
    const Shape s = {extent(rng), extent(rng)};
    Tensor mu = toy::random_tensor(s, rng), lv = toy::random_tensor(s, rng);
    return scalar_loss([&](Tape& t) { return lt::prior_kl(t, mu, lv); }, {mu, lv});
  });
  add("classification_loss", [](std::mt19937_64& rng) {
    const auto b = extent(rng), din = extent(rng), c = extent(rng, 2);
    Tensor x = toy::random_tensor({b, din}, rng, -1.0, 1.0, false);
    Tensor w = toy::random_tensor({din, c}, rng);
    std::vector<double> y(b * c, 0.0);
    for (std::size_t i = 0; i < b; ++i) y[i * c + rng() % c] = 1.0;
    Tensor target({b, c}, y);
    return scalar_loss([&](Tape& t) {
      return ad::cross_entropy_with_softmax(t, ad::matmul(t, x, w), target);
    }, {w});
  });
  add("lstm", [](std::mt19937_64& rng) {
    const auto tl = extent(rng, 1, 4), b = extent(rng, 1, 3), din = extent(rng), h = extent(rng);
    Tensor x = toy::random_tensor({tl * b, din}, rng);
    clue::model::LstmParams p{toy::random_tensor({din, 4 * h}, rng), toy::random_tensor({h, 4 * h}, rng),
                              toy::random_tensor({4 * h}, rng)};
    return weighted([&](Tape& t) { return clue::model::lstm(t, x, p, tl, b); },
                    {x, p.w_input, p.w_hidden, p.bias}, rng);
  });
  add("interaction_layer", [](std::mt19937_64& rng) {
    const auto r = extent(rng), k = extent(rng, 1, 4), d = extent(rng, 2, 5);
    Tensor h = toy::random_tensor({r, d}, rng), c = toy::random_tensor({k, d}, rng);
    clue::model::InteractionLayer layer{toy::random_tensor({k * d, d}, rng),
                                        toy::random_tensor({d}, rng, 0.5, 1.5),
                                        toy::random_tensor({d}, rng)};
    clue::model::ScoreParams sp;
    return weighted([&](Tape& t) {
      return clue::model::aggregate(t, clue::model::align(t, c, h, ScoreKind::kDot, sp), h, layer);
    }, {h, c, layer.w_reduce, layer.ln_gain, layer.ln_bias}, rng);
  });
  add("align_general", [](std::mt19937_64& rng) {
    const auto r = extent(rng), k = extent(rng, 2), d = extent(rng);
    Tensor h = toy::random_tensor({r, d}, rng), c = toy::random_tensor({k, d}, rng);
    clue::model::ScoreParams sp;
    sp.w_align = toy::random_tensor({d, d}, rng);
    return weighted([&](Tape& t) { return clue::model::align(t, c, h, ScoreKind::kGeneral, sp); },
                    {h, c, sp.w_align}, rng);
  });
  add("align_concat", [](std::mt19937_64& rng) {
    const auto r = extent(rng), k = extent(rng, 2), d = extent(rng);
    Tensor h = toy::random_tensor({r, d}, rng), c = toy::random_tensor({k, d}, rng);
    clue::model::ScoreParams sp;
    sp.w_concat_c = toy::random_tensor({d, d}, rng);
    sp.w_concat_h = toy::random_tensor({d, d}, rng);
    sp.v_concat = toy::random_tensor({d, 1}, rng);
    return weighted([&](Tape& t) { return clue::model::align(t, c, h, ScoreKind::kConcat, sp); },
                    {h, c, sp.w_concat_c, sp.w_concat_h, sp.v_concat}, rng);
  });
  add("joint_loss_baseline", [](std::mt19937_64& rng) {
    return full_model_check(Variant::kBaseline, ScoreKind::kDot, false, rng);
  });
  add("joint_loss_cae", [](std::mt19937_64& rng) {
    return full_model_check(Variant::kCae, ScoreKind::kDot, false, rng);
  });
  add("joint_loss_cvae", [](std::mt19937_64& rng) {
    return full_model_check(Variant::kCvae, ScoreKind::kDot, false, rng);
  });
  add("joint_loss_cvae_training_noise", [](std::mt19937_64& rng) {
    return full_model_check(Variant::kCvae, ScoreKind::kDot, true, rng);
  });
  add("joint_loss_cvae_general", [](std::mt19937_64& rng) {
    return full_model_check(Variant::kCvae, ScoreKind::kGeneral, false, rng);
  });
  add("joint_loss_cvae_concat", [](std::mt19937_64& rng) {
    return full_model_check(Variant::kCvae, ScoreKind::kConcat, false, rng);
  });
  return cases;
}

}  // namespace gradsuite
