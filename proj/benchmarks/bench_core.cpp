#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "clue/clustering.hpp"
#include "clue/corpus.hpp"
#include "clue/model.hpp"
#include "clue/ops.hpp"
#include "clue/training.hpp"

namespace {

namespace ad = clue::ad;
using ad::Tape;
using ad::Tensor;

Tensor random(ad::Shape shape, std::mt19937_64& rng, bool grad = false) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(ad::num_elements(shape));
  for (double& x : v) x = u(rng);
  return grad ? Tensor::parameter(std::move(shape), std::move(v))
              : Tensor(std::move(shape), std::move(v));
}

void BM_MatmulForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  Tensor a = random({n, n}, rng, true), b = random({n, n}, rng, true);
  for (auto _ : state) {
    Tape tape;
    Tensor loss = ad::sum(tape, ad::matmul(tape, a, b));
    tape.backward(loss);
    benchmark::DoNotOptimize(a.grad().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_MatmulForwardBackward)->Arg(64)->Arg(128);

void BM_ClusterObjective(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  Tensor z = random({64, 100}, rng, true), c = random({k, 100}, rng, true);
  for (auto _ : state) {
    Tape tape;
    Tensor q = clue::clustering::soft_assign(tape, z, c);
    Tensor p = clue::clustering::target_distribution(q);
    Tensor loss = clue::clustering::cluster_kl_loss(tape, p, q, clue::clustering::Reduction::kMean);
    tape.backward(loss);
  }
}
BENCHMARK(BM_ClusterObjective)->Arg(4)->Arg(8);

void BM_KroneckerUpdate(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  Tensor a = random({20 * 64, k}, rng), h = random({20 * 64, 100}, rng, true);
  Tensor w = random({k * 100, 100}, rng, true);
  for (auto _ : state) {
    Tape tape;
    Tensor loss = ad::sum(tape, clue::model::kronecker_update(tape, a, h, w));
    tape.backward(loss);
  }
}
BENCHMARK(BM_KroneckerUpdate)->Arg(4)->Arg(8);

/// One optimizer step of the default short-text configuration at D = 100.
void BM_TrainingStep(benchmark::State& state) {
  namespace corpus = clue::corpus;
  namespace model = clue::model;
  std::mt19937_64 rng(4);
  std::vector<std::vector<std::string>> streams;
  std::vector<int> labels;
  std::uniform_int_distribution<int> word(0, 499), len(5, 20);
  for (int i = 0; i < 256; ++i) {
    std::vector<std::string> tokens;
    for (int t = len(rng); t > 0; --t) tokens.push_back("w" + std::to_string(word(rng)));
    streams.push_back(tokens);
    labels.push_back(i % 4);
  }
  const corpus::Vocabulary vocab = corpus::Vocabulary::build(streams, 3);
  std::vector<corpus::Document> docs;
  for (std::size_t i = 0; i < streams.size(); ++i)
    docs.push_back(corpus::encode(streams[i], vocab, 20, labels[i], 4));
  const corpus::IdfModel idf = corpus::IdfModel::fit(docs, vocab.size());
  const clue::training::Dataset data = clue::training::make_dataset(docs, &idf);

  model::CluEConfig cfg;
  cfg.variant = static_cast<model::Variant>(state.range(0));
  cfg.vocab_size = vocab.size();
  cfg.num_classes = 4;
  cfg.embed_dim = 100;
  cfg.latent_hidden = 100;
  cfg.lambda.recon = cfg.variant == model::Variant::kBaseline ? 0.0 : 1.0;
  cfg.lambda.kld = cfg.variant == model::Variant::kCvae ? 1.0 : 0.0;
  const corpus::EmbeddingTable emb = corpus::random_embeddings(vocab, cfg.embed_dim, 4);
  model::CluEModel m(cfg, emb, random({cfg.clusters, cfg.embed_dim}, rng), 4);
  auto params = m.named_parameters();
  clue::training::AdamState adam = clue::training::AdamState::for_params(params);
  std::vector<std::size_t> idx(64);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const model::Batch batch = clue::training::batch_for(m, data, idx);
  std::mt19937_64 noise(5);
  for (auto _ : state) {
    for (auto& [name, t] : params) t.zero_grad();
    Tape tape;
    Tensor loss = m.forward(tape, batch, true, noise).loss;
    tape.backward(loss);
    m.mask_frozen_grads();
    clue::training::clip_gradients(params, 5.0);
    clue::training::adam_step(params, adam, 1e-3);
  }
  state.SetLabel(std::string(model::to_string(cfg.variant)));
}
BENCHMARK(BM_TrainingStep)->Arg(0)->Arg(2)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
