#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "clue/checkpoint.hpp"
#include "clue/errors.hpp"
#include "clue/training.hpp"
#include "oracles.hpp"
#include "toy_corpus.hpp"

using namespace clue::training;
using clue::ad::Tensor;
using clue::model::CluEConfig;
using clue::model::CluEModel;
using clue::model::Variant;
namespace corpus = clue::corpus;

namespace {

std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

void set_grad(Tensor t, std::vector<double> g) {
  auto dst = t.grad();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] = g[i];
}

CluEConfig toy_config(Variant variant, std::size_t vocab) {
  CluEConfig cfg;
  cfg.variant = variant;
  cfg.vocab_size = vocab;
  cfg.num_classes = 2;
  cfg.clusters = 2;
  cfg.layers = 1;
  cfg.embed_dim = 16;
  cfg.latent_hidden = 16;
  cfg.lambda.recon = variant == Variant::kBaseline ? 0.0 : 1.0;
  cfg.lambda.kld = variant == Variant::kCvae ? 1.0 : 0.0;
  return cfg;
}

CluEModel toy_model(const toy::Corpus& c, Variant variant, std::uint64_t seed) {
  CluEConfig cfg = toy_config(variant, c.vocab.size());
  corpus::EmbeddingTable emb = corpus::random_embeddings(c.vocab, cfg.embed_dim, seed);
  std::mt19937_64 rng(seed);
  Tensor centers = toy::random_tensor({cfg.clusters, cfg.embed_dim}, rng, -0.1, 0.1, false);
  return CluEModel(cfg, emb, centers, seed);
}

std::vector<std::vector<double>> snapshot(const CluEModel& m) {
  std::vector<std::vector<double>> out;
  for (auto& [name, t] : m.named_parameters()) out.push_back(vec(t));
  return out;
}

std::string log_text(const TrainResult& r) {
  std::ostringstream out;
  write_metric_log(out, r.log);
  return out.str();
}

}  // namespace

TEST_CASE("gradient clipping") {
  Tensor a = Tensor::parameter({2}, {0.0, 0.0});
  Tensor b = Tensor::parameter({2}, {0.0, 0.0});
  NamedTensors params = {{"a", a}, {"b", b}};

  SUBCASE("norm 10 is halved") {
    set_grad(a, {6.0, 0.0});
    set_grad(b, {0.0, 8.0});
    CHECK(clip_gradients(params, 5.0) == 10.0);
    CHECK(a.grad()[0] == 3.0);
    CHECK(b.grad()[1] == 4.0);
    CHECK(global_grad_norm(params) == doctest::Approx(5.0).epsilon(1e-15));
  }
  SUBCASE("norm 3 is unchanged") {
    set_grad(a, {1.8, 0.0});
    set_grad(b, {0.0, 2.4});
    CHECK(clip_gradients(params, 5.0) == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(a.grad()[0] == 1.8);
    CHECK(b.grad()[1] == 2.4);
  }
  SUBCASE("zero gradients") {
    CHECK(clip_gradients(params, 5.0) == 0.0);
    CHECK(a.grad()[0] == 0.0);
  }
  SUBCASE("non-finite gradients name the block") {
    set_grad(b, {std::nan(""), 0.0});
    try {
      clip_gradients(params, 5.0);
      FAIL("expected NumericError");
    } catch (const clue::NumericError& e) {
      CHECK(std::string(e.what()).find("b") != std::string::npos);
    }
  }
}

TEST_CASE("clipped norm never exceeds the threshold") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    NamedTensors params;
    const int blocks = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < blocks; ++i) {
      Tensor t = toy::random_tensor({1 + rng() % 7}, rng);
      Tensor g = toy::random_tensor(t.shape(), rng, -100, 100, false);
      set_grad(t, vec(g));
      params.emplace_back("p" + std::to_string(i), t);
    }
    const double clip = std::uniform_real_distribution<double>(0.1, 50.0)(rng);
    clip_gradients(params, clip);
    CHECK(global_grad_norm(params) <= clip + 1e-9);
  }
}

TEST_CASE("Adam") {
  SUBCASE("first step of a unit gradient moves by the learning rate") {
    Tensor w = Tensor::parameter({1}, {0.0});
    NamedTensors params = {{"w", w}};
    AdamState state = AdamState::for_params(params);
    set_grad(w, {1.0});
    adam_step(params, state, 1e-3);
    CHECK(w[0] == doctest::Approx(-1e-3).epsilon(1e-7));
    CHECK(state.step == 1);
  }
  SUBCASE("zero gradient leaves the parameter unchanged") {
    Tensor w = Tensor::parameter({3}, {0.5, -1.0, 2.0});
    NamedTensors params = {{"w", w}};
    AdamState state = AdamState::for_params(params);
    adam_step(params, state, 1e-3);
    CHECK(vec(w) == std::vector<double>{0.5, -1.0, 2.0});
  }
  SUBCASE("first step matches the oracle") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
      Tensor w = toy::random_tensor({1 + rng() % 7}, rng, -2, 2);
      Tensor g = toy::random_tensor(w.shape(), rng, -3, 3, false);
      std::vector<double> ref;
      for (std::size_t i = 0; i < w.size(); ++i) ref.push_back(oracle::adam_first_step(w[i], g[i], 1e-3));
      NamedTensors params = {{"w", w}};
      AdamState state = AdamState::for_params(params);
      set_grad(w, vec(g));
      adam_step(params, state, 1e-3);
      for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(w[i] - ref[i]) < 1e-10);
    }
  }
  SUBCASE("identical steps are reproducible") {
    auto run = [] {
      Tensor w = Tensor::parameter({2}, {0.1, 0.2});
      NamedTensors params = {{"w", w}};
      AdamState state = AdamState::for_params(params);
      for (int s = 0; s < 2; ++s) {
        set_grad(w, {0.3, -0.7});
        adam_step(params, state, 1e-3);
      }
      return vec(w);
    };
    CHECK(run() == run());
  }
}

TEST_CASE("training configuration") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.learning_rate == 1e-3);
  CHECK(cfg.patience == 30);
  CHECK(cfg.clip_norm == 5.0);
  CHECK(cfg.max_steps == 10000);
  CHECK(cfg.eval_every == 50);
  TrainConfig bad = cfg;
  bad.patience = 0;
  CHECK_THROWS_AS(bad.validate(), clue::ConfigError);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), clue::ConfigError);
  bad = cfg;
  bad.clip_norm = -1.0;
  CHECK_THROWS_AS(bad.validate(), clue::ConfigError);
}

TEST_CASE("evaluation") {
  toy::Corpus c = toy::make_corpus(120, 5);
  CluEModel model = toy_model(c, Variant::kCvae, 5);
  const auto before = snapshot(model);
  Metrics m1 = evaluate(model, c.test, 7, "test");
  Metrics m2 = evaluate(model, c.test, 7, "test");
  CHECK(snapshot(model) == before);
  CHECK(m1.split == "test");
  CHECK(m1.accuracy == m2.accuracy);
  CHECK(m1.loss_cls == m2.loss_cls);
  CHECK(m1.loss_kld == m2.loss_kld);
  CHECK(m1.accuracy >= 0.0);
  CHECK(m1.accuracy <= 1.0);
  const auto pred = predict(model, c.test, 7);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == c.test.docs[i].label;
  CHECK(m1.accuracy == doctest::Approx(static_cast<double>(correct) / pred.size()));
  CHECK_THROWS_AS(evaluate(model, Dataset{}, 8), clue::DataError);
}

TEST_CASE("accuracy on labels independent of the input is binomial") {
  toy::Corpus c = toy::make_corpus(500, 6);
  CluEModel model = toy_model(c, Variant::kBaseline, 6);
  Dataset all = c.train;
  std::mt19937_64 rng(7);
  for (auto& d : all.docs) d.label = static_cast<int>(rng() % 2);
  const double n = static_cast<double>(all.size());
  const Metrics m = evaluate(model, all, 64);
  CHECK(std::abs(m.accuracy - 0.5) <= 3.0 * std::sqrt(0.25 / n));
}

TEST_CASE("training input errors") {
  toy::Corpus c = toy::make_corpus(40, 8);
  CluEModel model = toy_model(c, Variant::kCae, 8);
  TrainConfig cfg;
  CHECK_THROWS_AS(train(model, Dataset{}, c.holdout, cfg), clue::DataError);
  CHECK_THROWS_AS(train(model, c.train, Dataset{}, cfg), clue::DataError);
  Dataset wrong = c.train;
  wrong.docs[0].ids[0] = static_cast<int>(c.vocab.size()) + 3;
  CHECK_THROWS_AS(train(model, wrong, c.holdout, cfg), clue::DataError);
}

TEST_CASE("frozen learning rate with patience 1 stops after two evaluations") {
  toy::Corpus c = toy::make_corpus(60, 9);
  CluEModel model = toy_model(c, Variant::kBaseline, 9);
  const auto before = snapshot(model);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.patience = 1;
  cfg.eval_every = 5;
  cfg.batch_size = 8;
  std::size_t evals = 0;
  TrainResult r = train(model, c.train, c.holdout, cfg, [&](const Metrics&) { ++evals; });
  CHECK(evals == 2);
  CHECK(r.early_stopped);
  CHECK(r.steps == 10);
  CHECK(r.log.size() == 4);
  CHECK(snapshot(model) == before);
}

TEST_CASE("identical seeds give identical logs") {
  toy::Corpus c = toy::make_corpus(80, 10);
  TrainConfig cfg;
  cfg.max_steps = 30;
  cfg.eval_every = 10;
  cfg.batch_size = 16;
  cfg.seed = 4;
  CluEModel a = toy_model(c, Variant::kCvae, 10);
  CluEModel b = toy_model(c, Variant::kCvae, 10);
  TrainResult ra = train(a, c.train, c.holdout, cfg);
  TrainResult rb = train(b, c.train, c.holdout, cfg);
  CHECK(ra.step_losses == rb.step_losses);
  CHECK(log_text(ra) == log_text(rb));
  CHECK(snapshot(a) == snapshot(b));
}

TEST_CASE("metric log format") {
  std::vector<Metrics> log = {{50, "train", 0.5, 0.25, 0.125, 0.0, 0.0},
                              {50, "holdout", 1.0, 0.5, 0.25, 0.0, 0.0}};
  std::ostringstream out;
  write_metric_log(out, log);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "step\tsplit\taccuracy\tloss_cls\tloss_cluster\tloss_recon\tloss_kld");
  std::getline(in, line);
  CHECK(line.rfind("50\ttrain\t0.5\t", 0) == 0);
}

TEST_CASE("toy corpus is learned by every variant") {
  toy::Corpus c = toy::make_corpus(200, 11);
  for (auto variant : {Variant::kBaseline, Variant::kCae, Variant::kCvae}) {
    CAPTURE(to_string(variant));
    CluEModel model = toy_model(c, variant, 11);
    TrainConfig cfg;
    cfg.max_steps = 300;
    cfg.eval_every = 25;
    cfg.batch_size = 16;
    cfg.learning_rate = 1e-2;
    cfg.seed = 1;
    TrainResult r = train(model, c.train, c.holdout, cfg);
    CHECK(r.best.accuracy == 1.0);
    CHECK(evaluate(model, c.test, 64, "test").accuracy == 1.0);

    // Moving average of the step loss over non-overlapping 20-step windows.
    const auto& l = r.step_losses;
    REQUIRE(l.size() >= 100);
    auto window = [&](std::size_t end) {
      double s = 0.0;
      for (std::size_t i = end - 20; i < end; ++i) s += l[i];
      return s / 20.0;
    };
    for (std::size_t end = 40; end <= 100; end += 20) {
      INFO("window ending at " << end);
      CHECK(window(end) < window(end - 20));
    }
  }
}

TEST_CASE("checkpoint round trip") {
  toy::Corpus c = toy::make_corpus(40, 12);
  CluEModel a = toy_model(c, Variant::kCvae, 12);
  CluEModel b = toy_model(c, Variant::kCvae, 99);
  const auto dir = std::filesystem::temp_directory_path() / "clue_test_checkpoint";
  std::filesystem::remove_all(dir);
  clue::checkpoint::save(dir, a.named_parameters(), {{"variant", "cvae"}, {"clusters", "2"}});
  const auto manifest = clue::checkpoint::read_manifest(dir);
  CHECK(manifest.blocks.size() == a.named_parameters().size());
  CHECK(manifest.config.front().first == "variant");
  clue::checkpoint::load_into(dir, b.named_parameters());
  CHECK(snapshot(a) == snapshot(b));

  CluEModel other = toy_model(c, Variant::kBaseline, 12);
  CHECK_THROWS_AS(clue::checkpoint::load_into(dir, other.named_parameters()), clue::DataError);
  CHECK_THROWS_AS(clue::checkpoint::read_manifest(dir / "missing"), clue::DataError);
  std::filesystem::remove_all(dir);
}
