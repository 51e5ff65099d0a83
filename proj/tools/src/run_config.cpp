#include "clue/cli/run_config.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "clue/errors.hpp"
#include "clue/text_io.hpp"

namespace clue::cli {

namespace {

constexpr std::array kKeys = {
    // corpus preparation
    KeySpec{"input", "", "raw training dataset (<label><delim><text> per line)"},
    KeySpec{"test_input", "", "raw test dataset; empty splits test_fraction off input"},
    KeySpec{"delimiter", "tab", "field delimiter: tab, comma or a single character"},
    KeySpec{"num_classes", "2", "number of classes"},
    KeySpec{"label_base", "0", "value of the first label in the raw files"},
    KeySpec{"min_count", "3", "keep tokens seen more than this many times"},
    KeySpec{"max_len", "20", "padded document length"},
    KeySpec{"holdout_fraction", "0.1", "share of the training data held out"},
    KeySpec{"test_fraction", "0.2", "share of input used as test when test_input is empty"},
    KeySpec{"corpus_dir", "corpus", "prepared corpus directory"},
    // embeddings and centroids
    KeySpec{"embeddings", "", "pretrained vectors (token v1 ... vD); empty for random"},
    KeySpec{"embed_dim", "300", "embedding and hidden width D"},
    KeySpec{"clusters", "4", "number of clusters K"},
    KeySpec{"init_method", "kmeans", "centroid initialization: kmeans or gmm"},
    KeySpec{"init_source", "vocab", "clustered points: vocab rows or documents (mean vectors)"},
    KeySpec{"centroids", "", "centroid TSV; default <corpus_dir>/centroids.tsv"},
    // model
    KeySpec{"variant", "cvae", "baseline, cae or cvae"},
    KeySpec{"layers", "3", "number of interaction layers"},
    KeySpec{"head_dim", "0", "width D' of the pooled representation; 0 means D"},
    KeySpec{"latent_hidden", "500", "hidden width of the latent encoder and decoder"},
    KeySpec{"score", "dot", "alignment score: dot, general or concat"},
    KeySpec{"lambda_cluster", "1", "weight of the clustering loss"},
    KeySpec{"lambda_recon", "auto", "weight of the reconstruction loss (auto: 1 unless baseline)"},
    KeySpec{"lambda_kld", "auto", "weight of the prior KL (auto: 1 for cvae)"},
    KeySpec{"dropout", "0.2", "dropout rate"},
    // training
    KeySpec{"learning_rate", "0.001", "Adam learning rate"},
    KeySpec{"batch_size", "64", "documents per batch"},
    KeySpec{"max_steps", "10000", "step limit"},
    KeySpec{"patience", "30", "evaluations without improvement before stopping"},
    KeySpec{"clip_norm", "5", "global gradient norm limit"},
    KeySpec{"eval_every", "50", "steps between holdout evaluations"},
    KeySpec{"seed", "0", "seed for splits, initialization, shuffling and noise"},
    // outputs
    KeySpec{"output_dir", "run", "training output directory"},
    KeySpec{"checkpoint", "", "checkpoint directory; default <output_dir>/checkpoint"},
    KeySpec{"split", "test", "split for eval and export: train, holdout or test"},
    KeySpec{"what", "embeddings", "export: embeddings, centroids, alignments or latents"},
    KeySpec{"document", "0", "document index for alignment export"},
    KeySpec{"export_dir", "", "export directory; default <output_dir>/export"},
    KeySpec{"sweep_axis", "clusters", "sweep axis: clusters or layers"},
    KeySpec{"sweep_values", "1,2,3,4,5,6,7,8", "comma-separated sweep values"},
};

ConfigError bad_value(std::string_view key, const std::string& value, std::string_view what) {
  return ConfigError("config key '" + std::string(key) + "': '" + value + "' is not " +
                     std::string(what));
}

}  // namespace

std::span<const KeySpec> known_keys() { return kKeys; }

RunConfig::RunConfig() {
  for (const KeySpec& k : kKeys) values_.emplace_back(k.default_value);
}

std::size_t RunConfig::index_of(std::string_view key) const {
  for (std::size_t i = 0; i < kKeys.size(); ++i) {
    if (kKeys[i].key == key) return i;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

RunConfig RunConfig::parse(std::istream& in, const std::string& source) {
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv(line);
    if (auto hash = sv.find('#'); hash != std::string_view::npos) sv = sv.substr(0, hash);
    sv = text::trim(sv);
    if (sv.empty()) continue;
    const auto eq = sv.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key(text::trim(sv.substr(0, eq)));
    try {
      cfg.set(key, std::string(text::trim(sv.substr(eq + 1))));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse(in, path.string());
}

void RunConfig::set(std::string_view key, std::string value) {
  const std::size_t i = index_of(key);
  values_[i] = std::move(value);
  explicit_.insert(i);
}

const std::string& RunConfig::get(std::string_view key) const { return values_[index_of(key)]; }

bool RunConfig::is_explicit(std::string_view key) const {
  return explicit_.count(index_of(key)) > 0;
}

double RunConfig::get_double(std::string_view key) const {
  const std::string& v = get(key);
  try {
    const double d = text::parse_double(v);
    if (!std::isfinite(d)) throw bad_value(key, v, "a finite number");
    return d;
  } catch (const DataError&) {
    throw bad_value(key, v, "a number");
  }
}

std::uint64_t RunConfig::get_u64(std::string_view key) const {
  const std::string& v = get(key);
  try {
    return text::parse_int<std::uint64_t>(v);
  } catch (const DataError&) {
    throw bad_value(key, v, "a non-negative integer");
  }
}

std::size_t RunConfig::get_size(std::string_view key) const {
  return static_cast<std::size_t>(get_u64(key));
}

int RunConfig::get_int(std::string_view key) const {
  const std::string& v = get(key);
  try {
    return text::parse_int<int>(v);
  } catch (const DataError&) {
    throw bad_value(key, v, "an integer");
  }
}

std::filesystem::path RunConfig::get_path(std::string_view key) const {
  return std::filesystem::path(get(key));
}

char RunConfig::delimiter() const {
  const std::string& v = get("delimiter");
  if (v == "tab" || v == "\\t") return '\t';
  if (v == "comma") return ',';
  if (v.size() == 1) return v[0];
  throw bad_value("delimiter", v, "tab, comma or a single character");
}

RunConfig RunConfig::resolved() const {
  RunConfig out = *this;
  const model::Variant variant = model::parse_variant(get("variant"));
  auto fill = [&](std::string_view key, const std::string& value) {
    const std::size_t i = index_of(key);
    out.values_[i] = value;
  };
  if (get("lambda_recon") == "auto") fill("lambda_recon", variant == model::Variant::kBaseline ? "0" : "1");
  if (get("lambda_kld") == "auto") fill("lambda_kld", variant == model::Variant::kCvae ? "1" : "0");
  if (get("centroids").empty()) fill("centroids", (get_path("corpus_dir") / "centroids.tsv").string());
  if (get("checkpoint").empty()) fill("checkpoint", (get_path("output_dir") / "checkpoint").string());
  if (get("export_dir").empty()) fill("export_dir", (get_path("output_dir") / "export").string());
  return out;
}

model::CluEConfig RunConfig::model_config(std::size_t vocab_size, std::size_t num_classes) const {
  const RunConfig r = resolved();
  model::CluEConfig c;
  c.variant = model::parse_variant(r.get("variant"));
  c.vocab_size = vocab_size;
  c.num_classes = num_classes;
  c.clusters = r.get_size("clusters");
  c.layers = r.get_size("layers");
  c.embed_dim = r.get_size("embed_dim");
  c.head_dim = r.get_size("head_dim");
  c.latent_hidden = r.get_size("latent_hidden");
  c.score = model::parse_score_kind(r.get("score"));
  c.lambda.cluster = r.get_double("lambda_cluster");
  c.lambda.recon = r.get_double("lambda_recon");
  c.lambda.kld = r.get_double("lambda_kld");
  c.dropout = r.get_double("dropout");
  c.max_len = r.get_size("max_len");
  c.validate();
  return c;
}

training::TrainConfig RunConfig::train_config() const {
  training::TrainConfig t;
  t.learning_rate = get_double("learning_rate");
  t.batch_size = get_size("batch_size");
  t.max_steps = get_size("max_steps");
  t.patience = get_size("patience");
  t.clip_norm = get_double("clip_norm");
  t.eval_every = get_size("eval_every");
  t.seed = get_u64("seed");
  t.validate();
  return t;
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < kKeys.size(); ++i) out.emplace_back(kKeys[i].key, values_[i]);
  return out;
}

void RunConfig::write(std::ostream& out) const {
  for (const auto& [k, v] : entries()) out << k << " = " << v << '\n';
}

void RunConfig::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write(out);
}

}  // namespace clue::cli
