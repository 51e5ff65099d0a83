#include <doctest.h>

#include <cmath>
#include <random>

#include "clue/errors.hpp"
#include "clue/grad_check.hpp"
#include "clue/latent.hpp"
#include "clue/ops.hpp"
#include "clue/training.hpp"
#include "oracles.hpp"
#include "toy_corpus.hpp"

using namespace clue::latent;
using clue::ad::Tape;
using clue::ad::Tensor;

namespace {
std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }
}  // namespace

TEST_CASE("zero networks") {
  std::mt19937_64 rng(1);
  Tensor x = toy::random_tensor({3, 6}, rng, 0.0, 1.0, false);
  EncoderParams enc = EncoderParams::zeros(6, 4, 2, true);
  Tape tape(Tape::Mode::kInference);
  LatentSample s = encode_vae(tape, x, enc, true, rng);
  for (double v : s.mu.values()) CHECK(v == 0.0);
  for (double v : s.logvar.values()) CHECK(v == 0.0);
  CHECK(vec(s.z) == vec(s.eps));

  EncoderParams ae = EncoderParams::zeros(6, 4, 2, false);
  for (double v : vec(encode_ae(tape, x, ae))) CHECK(v == 0.0);
  DecoderParams dec = DecoderParams::zeros(2, 4, 6);
  Tensor xr = decode(tape, s.z, dec);
  CHECK(xr.shape() == clue::ad::Shape{3, 6});
  for (double v : xr.values()) CHECK(v == 0.0);
}

TEST_CASE("eval mode uses the posterior mean and noise is seeded") {
  std::mt19937_64 init(2);
  EncoderParams enc = EncoderParams::init(5, 4, 3, true, init);
  Tensor x = toy::random_tensor({2, 5}, init, 0.0, 1.0, false);
  Tape tape(Tape::Mode::kInference);
  std::mt19937_64 a(7);
  LatentSample eval = encode_vae(tape, x, enc, false, a);
  CHECK(vec(eval.z) == vec(eval.mu));
  LatentSample s1 = encode_vae(tape, x, enc, true, a);
  std::mt19937_64 a2(7);
  encode_vae(tape, x, enc, false, a2);
  LatentSample s2 = encode_vae(tape, x, enc, true, a2);
  CHECK(vec(s1.eps) == vec(s2.eps));
  CHECK(vec(s1.z) == vec(s2.z));
}

TEST_CASE("autoencoder is deterministic") {
  std::mt19937_64 init(3);
  EncoderParams enc = EncoderParams::init(5, 4, 3, false, init);
  Tensor x = toy::random_tensor({2, 5}, init, 0.0, 1.0, false);
  Tape tape(Tape::Mode::kInference);
  CHECK(vec(encode_ae(tape, x, enc)) == vec(encode_ae(tape, x, enc)));
  CHECK_THROWS_AS(encode_vae(tape, x, enc, false, init), clue::ShapeError);
}

TEST_CASE("reconstruction loss examples") {
  Tape tape(Tape::Mode::kInference);
  Tensor x = Tensor::matrix(1, 2, {1.0, 0.0});
  CHECK(recon_loss(tape, x, Tensor::matrix(1, 2, {0.0, 0.0})).item() == 1.0);
  CHECK(recon_loss(tape, x, x).item() == 0.0);
  Tensor x2 = Tensor::matrix(2, 2, {1.0, 0.0, 1.0, 1.0});
  Tensor r2 = Tensor::matrix(2, 2, {0.0, 0.0, 0.0, 1.0 + std::sqrt(2.0)});
  CHECK(recon_loss(tape, x2, r2).item() == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("prior KL examples and nonnegativity") {
  Tape tape(Tape::Mode::kInference);
  CHECK(prior_kl(tape, Tensor::matrix(1, 2, {0, 0}), Tensor::matrix(1, 2, {0, 0})).item() == 0.0);
  CHECK(prior_kl(tape, Tensor::matrix(1, 2, {1, 0}), Tensor::matrix(1, 2, {0, 0})).item() ==
        doctest::Approx(0.5).epsilon(1e-15));
  std::mt19937_64 rng(4);
  for (int i = 0; i < 10000; ++i) {
    Tensor mu = toy::random_tensor({2, 3}, rng, -3, 3, false);
    Tensor lv = toy::random_tensor({2, 3}, rng, -3, 3, false);
    const double v = prior_kl(tape, mu, lv).item();
    CHECK(v >= -1e-12);
    if (i < 100) CHECK(v == doctest::Approx(oracle::gaussian_kl(vec(mu), vec(lv), 2)).epsilon(1e-12));
  }
}

TEST_CASE("latent gradients") {
  std::mt19937_64 rng(6);
  const std::size_t v = 6, h = 4, d = 3, n = 3;
  Tensor x = toy::random_tensor({n, v}, rng, 0.0, 1.0, false);

  SUBCASE("encode_ae through mse") {
    EncoderParams enc = EncoderParams::init(v, h, d, false, rng);
    Tensor target = toy::random_tensor({n, d}, rng, -1, 1, false);
    std::vector<Tensor> params = {enc.w_hidden, enc.b_hidden, enc.w_mu, enc.b_mu};
    const double err = clue::ad::grad_check(
        [&](Tape& t) { return clue::ad::mse(t, encode_ae(t, x, enc), target); }, params);
    CHECK(err < 1e-5);
  }
  SUBCASE("decode") {
    DecoderParams dec = DecoderParams::init(d, h, v, rng);
    Tensor z = toy::random_tensor({n, d}, rng);
    std::vector<Tensor> params = {z, dec.w_hidden, dec.b_hidden, dec.w_out, dec.b_out};
    const double err = clue::ad::grad_check(
        [&](Tape& t) { return recon_loss(t, x, decode(t, z, dec)); }, params);
    CHECK(err < 1e-5);
  }
  SUBCASE("encode_vae with frozen noise") {
    EncoderParams enc = EncoderParams::init(v, h, d, true, rng);
    Tensor eps = toy::random_tensor({n, d}, rng, -1, 1, false);
    DecoderParams dec = DecoderParams::init(d, h, v, rng);
    std::vector<Tensor> params;
    for (auto& [name, t] : enc.named()) params.push_back(t);
    const double err = clue::ad::grad_check([&](Tape& t) {
      LatentSample s = encode_vae(t, x, enc, eps);
      return clue::ad::add(t, recon_loss(t, x, decode(t, s.z, dec)), prior_kl(t, s.mu, s.logvar));
    }, params);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("recon plus prior KL training lowers the moving-average loss") {
  toy::Corpus corpus = toy::make_corpus(50, 12);
  const std::size_t v = corpus.vocab.size(), h = 16, d = 4;
  std::mt19937_64 rng(13);
  EncoderParams enc = EncoderParams::init(v, h, d, true, rng);
  DecoderParams dec = DecoderParams::init(d, h, v, rng);
  clue::training::NamedTensors params = enc.named();
  for (auto& p : dec.named()) params.push_back(p);
  clue::training::AdamState adam = clue::training::AdamState::for_params(params);

  const auto& docs = corpus.train;
  std::vector<double> dense;
  for (const auto& tf : docs.tfidf) {
    auto row = clue::corpus::densify(tf, v);
    dense.insert(dense.end(), row.begin(), row.end());
  }
  Tensor x({docs.size(), v}, dense);
  std::vector<double> losses;
  for (int step = 0; step < 200; ++step) {
    for (auto& [name, t] : params) {
      Tensor handle = t;
      handle.zero_grad();
    }
    Tape tape;
    LatentSample s = encode_vae(tape, x, enc, true, rng);
    Tensor loss = clue::ad::add(tape, recon_loss(tape, x, decode(tape, s.z, dec)),
                                prior_kl(tape, s.mu, s.logvar));
    losses.push_back(loss.item());
    tape.backward(loss);
    clue::training::clip_gradients(params, 5.0);
    clue::training::adam_step(params, adam, 1e-3);
  }
  auto window = [&](std::size_t end) {
    double s = 0.0;
    for (std::size_t i = end - 20; i < end; ++i) s += losses[i];
    return s / 20.0;
  };
  CHECK(window(200) < window(20));
  // Non-overlapping windows decrease strictly.
  for (std::size_t end = 40; end <= 200; end += 20) {
    INFO("window ending at " << end);
    CHECK(window(end) < window(end - 20));
  }
}
