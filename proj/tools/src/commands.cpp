#include "clue/cli/commands.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "clue/checkpoint.hpp"
#include "clue/clustering.hpp"
#include "clue/errors.hpp"
#include "clue/tape.hpp"
#include "clue/text_io.hpp"

namespace clue::cli {

namespace fs = std::filesystem;

namespace {

// Offsets the seed of each independent random stream derived from `seed`.
constexpr std::uint64_t kTestSplitSalt = 0x7465737453706c74ULL;

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw DataError("missing " + what + ": " + path.string());
  return in;
}

void write_snapshot(const RunConfig& cfg, const fs::path& dir, const std::string& command) {
  fs::create_directories(dir);
  cfg.resolved().write(dir / (command + ".config"));
}

std::string metric_row(const training::Metrics& m) {
  std::ostringstream out;
  std::vector<training::Metrics> one = {m};
  training::write_metric_log(out, one);
  std::string s = out.str();
  return s.substr(s.find('\n') + 1);
}

void write_documents(const fs::path& path, std::span<const corpus::Document> docs) {
  std::ofstream out = open_out(path);
  corpus::write_documents_tsv(out, docs);
}

std::vector<corpus::Document> read_documents(const fs::path& path, int num_classes) {
  std::ifstream in = open_in(path, "documents");
  return corpus::read_documents_tsv(in, num_classes);
}

std::map<std::string, std::string> read_key_values(const fs::path& path, const std::string& what) {
  std::ifstream in = open_in(path, what);
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = text::split(line, '\t');
    if (f.size() != 2) throw DataError(path.string() + ": expected key<TAB>value lines");
    out[std::string(f[0])] = std::string(f[1]);
  }
  return out;
}

// Tokenized records of one raw file.
struct RawSet {
  std::vector<std::vector<std::string>> tokens;
  std::vector<int> labels;
  std::vector<std::size_t> lines;
};

RawSet read_raw(const RunConfig& cfg, const fs::path& path, std::ostream& log) {
  const corpus::ParseReport report =
      corpus::read_dataset(path, cfg.delimiter(), cfg.get_int("num_classes"), 0.01,
                           cfg.get_int("label_base"));
  for (const auto& m : report.malformed) {
    log << path.string() << ":" << m.line << ": skipped (" << m.reason << ")\n";
  }
  RawSet out;
  for (std::size_t i = 0; i < report.records.size(); ++i) {
    auto tokens = corpus::tokenize(report.records[i].text);
    if (tokens.empty()) {
      log << path.string() << ":" << report.source_lines[i] << ": skipped (no tokens)\n";
      continue;
    }
    out.tokens.push_back(std::move(tokens));
    out.labels.push_back(report.records[i].label);
    out.lines.push_back(report.source_lines[i]);
  }
  if (out.tokens.empty()) throw DataError(path.string() + ": no usable records");
  return out;
}

RawSet subset(const RawSet& all, std::span<const std::size_t> idx) {
  RawSet out;
  for (std::size_t i : idx) {
    out.tokens.push_back(all.tokens[i]);
    out.labels.push_back(all.labels[i]);
    out.lines.push_back(all.lines[i]);
  }
  return out;
}

model::CluEModel build_model(const RunConfig& cfg, const PreparedCorpus& data,
                             const ad::Tensor& centroids) {
  model::CluEConfig mc = cfg.model_config(data.vocab.size(), data.num_classes);
  if (mc.max_len != data.max_len) {
    throw ConfigError("max_len " + std::to_string(mc.max_len) + " differs from the prepared corpus (" +
                      std::to_string(data.max_len) + ")");
  }
  return model::CluEModel(mc, make_embeddings(cfg, data.vocab), centroids, cfg.get_u64("seed"));
}

// Corpus directory for eval/export: an explicit setting wins over the one
// recorded in the checkpoint.
fs::path corpus_for(const RunConfig& cfg, const checkpoint::Manifest& manifest) {
  if (cfg.is_explicit("corpus_dir")) return cfg.get_path("corpus_dir");
  for (const auto& [k, v] : manifest.config)
    if (k == "corpus_dir") return v;
  return cfg.get_path("corpus_dir");
}

template <typename Fn>
void for_each_batch(const model::CluEModel& model, const training::Dataset& data,
                    std::size_t batch_size, Fn&& fn) {
  std::mt19937_64 rng(0);
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    model::Batch batch = training::batch_for(model, data, idx);
    ad::Tape tape(ad::Tape::Mode::kInference);
    fn(idx, model.forward(tape, batch, false, rng));
  }
}

void write_rows(std::ostream& out, std::span<const std::size_t> idx,
                const training::Dataset& data, const ad::Tensor& rows) {
  const std::size_t width = rows.dim(1);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out << idx[r] << '\t' << data.docs[idx[r]].label;
    for (std::size_t j = 0; j < width; ++j) out << '\t' << text::format_double(rows.at(r, j));
    out << '\n';
  }
}

std::vector<std::size_t> parse_sweep_values(const std::string& spec) {
  std::vector<std::size_t> out;
  for (auto field : text::split(spec, ',')) {
    const auto f = text::trim(field);
    long long v = 0;
    try {
      v = text::parse_int<long long>(f);
    } catch (const DataError&) {
      throw ConfigError("sweep value '" + std::string(f) + "' is not an integer");
    }
    if (v <= 0) throw ConfigError("sweep values must be positive, got " + std::to_string(v));
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

}  // namespace

const training::Dataset& PreparedCorpus::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "holdout") return holdout;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + name + "' (train, holdout or test)");
}

PreparedCorpus load_prepared(const fs::path& dir) {
  const auto manifest = read_key_values(dir / "manifest.tsv", "prepared corpus manifest");
  auto field = [&](const std::string& key) {
    auto it = manifest.find(key);
    if (it == manifest.end()) throw DataError(dir.string() + "/manifest.tsv lacks " + key);
    return text::parse_int<std::size_t>(it->second);
  };
  PreparedCorpus p;
  p.num_classes = field("num_classes");
  p.max_len = field("max_len");
  {
    std::ifstream in = open_in(dir / "vocab.tsv", "vocabulary");
    p.vocab = corpus::read_vocab_tsv(in);
  }
  {
    std::ifstream in = open_in(dir / "idf.tsv", "idf model");
    p.idf = corpus::IdfModel::read_tsv(in);
  }
  const int c = static_cast<int>(p.num_classes);
  p.train = training::make_dataset(read_documents(dir / "train.tsv", c), &p.idf);
  p.holdout = training::make_dataset(read_documents(dir / "holdout.tsv", c), &p.idf);
  p.test = training::make_dataset(read_documents(dir / "test.tsv", c), &p.idf);
  return p;
}

corpus::EmbeddingTable make_embeddings(const RunConfig& cfg, const corpus::Vocabulary& vocab) {
  const std::size_t dim = cfg.get_size("embed_dim");
  const std::uint64_t seed = cfg.get_u64("seed");
  if (cfg.get("embeddings").empty()) return corpus::random_embeddings(vocab, dim, seed);
  const fs::path path = cfg.get_path("embeddings");
  if (!fs::exists(path)) throw DataError("missing embeddings: " + path.string());
  return corpus::load_embeddings(path, vocab, dim, seed);
}

ad::Tensor clustering_points(const RunConfig& cfg, const PreparedCorpus& data,
                             const corpus::EmbeddingTable& table) {
  const std::string& source = cfg.get("init_source");
  const std::size_t d = table.dim;
  std::vector<double> values;
  std::size_t rows = 0;
  if (source == "vocab") {
    for (std::size_t i = corpus::kUnkId + 1; i < table.rows; ++i, ++rows) {
      auto r = table.row(i);
      values.insert(values.end(), r.begin(), r.end());
    }
  } else if (source == "documents") {
    for (const auto& doc : data.train.docs) {
      std::vector<double> mean(d, 0.0);
      for (std::size_t t = 0; t < doc.true_len; ++t) {
        auto r = table.row(static_cast<std::size_t>(doc.ids[t]));
        for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
      }
      for (double& v : mean) v /= static_cast<double>(doc.true_len);
      values.insert(values.end(), mean.begin(), mean.end());
      ++rows;
    }
  } else {
    throw ConfigError("init_source must be vocab or documents, got '" + source + "'");
  }
  if (rows == 0) throw DataError("no points to cluster");
  return ad::Tensor({rows, d}, std::move(values));
}

void cmd_prepare(const RunConfig& cfg, std::ostream& log) {
  if (cfg.get("input").empty()) throw ConfigError("prepare needs input");
  const fs::path dir = cfg.get_path("corpus_dir");
  const int num_classes = cfg.get_int("num_classes");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  const std::size_t max_len = cfg.get_size("max_len");
  if (max_len == 0) throw ConfigError("max_len must be positive");
  const double holdout_fraction = cfg.get_double("holdout_fraction");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("holdout_fraction must lie in (0, 1)");
  }
  const std::uint64_t seed = cfg.get_u64("seed");

  RawSet all = read_raw(cfg, cfg.get_path("input"), log);
  RawSet train_raw, test_raw;
  std::string test_source = cfg.get("test_input");
  if (!test_source.empty()) {
    train_raw = std::move(all);
    test_raw = read_raw(cfg, test_source, log);
  } else {
    const double frac = cfg.get_double("test_fraction");
    if (!(frac > 0.0 && frac < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
    const corpus::Split s = corpus::split_holdout(all.labels, frac, seed ^ kTestSplitSalt);
    train_raw = subset(all, s.train);
    test_raw = subset(all, s.holdout);
    test_source = cfg.get("input");
  }

  const corpus::Vocabulary vocab =
      corpus::Vocabulary::build(train_raw.tokens, cfg.get_int("min_count"));
  auto encode_all = [&](const RawSet& raw) {
    std::vector<corpus::Document> docs;
    for (std::size_t i = 0; i < raw.tokens.size(); ++i) {
      docs.push_back(corpus::encode(raw.tokens[i], vocab, max_len, raw.labels[i], num_classes));
    }
    return docs;
  };
  std::vector<corpus::Document> pool = encode_all(train_raw);
  const std::vector<corpus::Document> test = encode_all(test_raw);
  const corpus::Split split = corpus::split_holdout(train_raw.labels, holdout_fraction, seed);
  std::vector<corpus::Document> train, holdout;
  for (std::size_t i : split.train) train.push_back(pool[i]);
  for (std::size_t i : split.holdout) holdout.push_back(pool[i]);
  const corpus::IdfModel idf = corpus::IdfModel::fit(train, vocab.size());

  fs::create_directories(dir);
  {
    std::ofstream out = open_out(dir / "vocab.tsv");
    corpus::write_vocab_tsv(out, vocab);
  }
  {
    std::ofstream out = open_out(dir / "idf.tsv");
    idf.write_tsv(out);
  }
  write_documents(dir / "train.tsv", train);
  write_documents(dir / "holdout.tsv", holdout);
  write_documents(dir / "test.tsv", test);
  {
    std::ofstream out = open_out(dir / "split.tsv");
    std::vector<std::pair<std::size_t, const char*>> rows;
    for (std::size_t i : split.train) rows.emplace_back(train_raw.lines[i], "train");
    for (std::size_t i : split.holdout) rows.emplace_back(train_raw.lines[i], "holdout");
    std::sort(rows.begin(), rows.end());
    for (const auto& [line, name] : rows) out << cfg.get("input") << '\t' << line << '\t' << name << '\n';
    std::vector<std::size_t> test_lines = test_raw.lines;
    std::sort(test_lines.begin(), test_lines.end());
    for (std::size_t line : test_lines) out << test_source << '\t' << line << "\ttest\n";
  }
  {
    std::ofstream out = open_out(dir / "manifest.tsv");
    out << "num_classes\t" << num_classes << '\n'
        << "max_len\t" << max_len << '\n'
        << "vocab_size\t" << vocab.size() << '\n'
        << "train_docs\t" << train.size() << '\n'
        << "holdout_docs\t" << holdout.size() << '\n'
        << "test_docs\t" << test.size() << '\n'
        << "seed\t" << seed << '\n';
  }
  write_snapshot(cfg, dir, "prepare");
  log << "prepared " << dir.string() << ": vocabulary " << vocab.size() << ", train "
      << train.size() << ", holdout " << holdout.size() << ", test " << test.size() << '\n';
}

void cmd_init_centroids(const RunConfig& cfg, std::ostream& log) {
  const RunConfig r = cfg.resolved();
  const PreparedCorpus data = load_prepared(r.get_path("corpus_dir"));
  const corpus::EmbeddingTable table = make_embeddings(r, data.vocab);
  const ad::Tensor points = clustering_points(r, data, table);
  const std::size_t k = r.get_size("clusters");
  if (k == 0) throw ConfigError("clusters must be positive");
  if (k > points.dim(0)) {
    throw DataError("clusters = " + std::to_string(k) + " exceeds the " +
                    std::to_string(points.dim(0)) + " usable " + r.get("init_source") + " points");
  }
  const auto method = clustering::parse_init_method(r.get("init_method"));
  const clustering::Centroids c = clustering::init_centroids(method, points, k, r.get_u64("seed"));
  const fs::path path = r.get_path("centroids");
  {
    std::ofstream out = open_out(path);
    clustering::write_centroids_tsv(out, c.centers);
  }
  write_snapshot(cfg, path.parent_path().empty() ? fs::path(".") : path.parent_path(),
                 "init-centroids");
  log << "init_method=" << clustering::to_string(c.init_method) << " k=" << k << " points="
      << points.dim(0) << " -> " << path.string() << '\n';
}

training::Metrics cmd_train(const RunConfig& cfg, std::ostream& log) {
  const RunConfig r = cfg.resolved();
  const PreparedCorpus data = load_prepared(r.get_path("corpus_dir"));
  const fs::path centroid_path = r.get_path("centroids");
  ad::Tensor centers;
  {
    std::ifstream in = open_in(centroid_path, "centroids (run init-centroids first)");
    centers = clustering::read_centroids_tsv(in);
  }
  model::CluEModel model = build_model(r, data, centers);
  const training::TrainConfig tc = r.train_config();
  const fs::path out_dir = r.get_path("output_dir");
  fs::create_directories(out_dir);
  write_snapshot(cfg, out_dir, "train");

  log << "training " << r.get("variant") << " on " << data.train.size() << " documents\n";
  const training::TrainResult result =
      training::train(model, data.train, data.holdout, tc,
                      [&](const training::Metrics& m) { log << metric_row(m); });
  {
    std::ofstream out = open_out(out_dir / "metrics.tsv");
    training::write_metric_log(out, result.log);
  }
  checkpoint::ConfigPairs pairs = r.entries();
  pairs.emplace_back("vocab_size", std::to_string(data.vocab.size()));
  pairs.emplace_back("num_classes", std::to_string(data.num_classes));
  checkpoint::save(r.get_path("checkpoint"), model.named_parameters(), pairs);

  training::Metrics test = training::evaluate(model, data.test, tc.batch_size, "test");
  test.step = result.best.step;
  {
    std::ofstream out = open_out(out_dir / "test_metrics.tsv");
    std::vector<training::Metrics> one = {test};
    training::write_metric_log(out, one);
  }
  log << "best holdout accuracy " << text::format_double(result.best.accuracy) << " at step "
      << result.best.step << (result.early_stopped ? " (early stop)" : "") << "; test accuracy "
      << text::format_double(test.accuracy) << '\n';
  return test;
}

model::CluEModel load_model(const fs::path& ckpt) {
  const checkpoint::Manifest manifest = checkpoint::read_manifest(ckpt);
  RunConfig cfg;
  std::size_t vocab = 0, classes = 0;
  for (const auto& [k, v] : manifest.config) {
    if (k == "vocab_size") vocab = text::parse_int<std::size_t>(v);
    else if (k == "num_classes") classes = text::parse_int<std::size_t>(v);
    else cfg.set(k, v);
  }
  if (vocab == 0 || classes == 0) throw DataError(ckpt.string() + ": manifest lacks model sizes");
  const model::CluEConfig mc = cfg.model_config(vocab, classes);
  corpus::EmbeddingTable table;
  table.rows = vocab;
  table.dim = mc.embed_dim;
  table.values.assign(vocab * mc.embed_dim, 0.0);
  model::CluEModel m(mc, table, ad::Tensor({mc.clusters, mc.embed_dim}, 0.0), 0);
  checkpoint::load_into(ckpt, m.named_parameters());
  return m;
}

training::Metrics cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  const RunConfig r = cfg.resolved();
  const fs::path ckpt = r.get_path("checkpoint");
  const model::CluEModel model = load_model(ckpt);
  const PreparedCorpus data = load_prepared(corpus_for(r, checkpoint::read_manifest(ckpt)));
  const std::string split = r.get("split");
  const training::Dataset& set = data.split(split);
  if (set.empty()) throw DataError("split '" + split + "' is empty");
  const training::Metrics m = training::evaluate(model, set, r.get_size("batch_size"), split);
  std::vector<training::Metrics> one = {m};
  training::write_metric_log(out, one);
  log << split << " accuracy " << text::format_double(m.accuracy) << '\n';
  return m;
}

void cmd_export(const RunConfig& cfg, std::ostream& log) {
  const RunConfig r = cfg.resolved();
  const fs::path ckpt = r.get_path("checkpoint");
  const model::CluEModel model = load_model(ckpt);
  const fs::path dir = r.get_path("export_dir");
  const std::string what = r.get("what");
  fs::create_directories(dir);
  write_snapshot(cfg, dir, "export");
  if (what == "centroids") {
    std::ofstream out = open_out(dir / "centroids.tsv");
    clustering::write_centroids_tsv(out, model.centroids());
    log << "wrote " << (dir / "centroids.tsv").string() << '\n';
    return;
  }
  const PreparedCorpus data = load_prepared(corpus_for(r, checkpoint::read_manifest(ckpt)));
  const std::string split = r.get("split");
  const training::Dataset& set = data.split(split);
  if (set.empty()) throw DataError("split '" + split + "' is empty");
  const std::size_t batch_size = r.get_size("batch_size");

  if (what == "embeddings" || what == "latents") {
    const fs::path path = dir / ((what == "embeddings" ? "sentence_embeddings_" : "latents_") + split + ".tsv");
    std::ofstream out = open_out(path);
    for_each_batch(model, set, batch_size, [&](std::span<const std::size_t> idx, const model::ForwardResult& res) {
      write_rows(out, idx, set, what == "embeddings" ? res.pooled : res.z);
    });
    log << "wrote " << path.string() << '\n';
  } else if (what == "alignments") {
    const std::size_t doc = r.get_size("document");
    if (doc >= set.size()) {
      throw DataError("document " + std::to_string(doc) + " is outside split '" + split + "' (" +
                      std::to_string(set.size()) + " documents)");
    }
    const std::vector<std::string> tokens = corpus::decode(set.docs[doc], data.vocab);
    const std::vector<std::size_t> idx = {doc};
    model::Batch batch = training::batch_for(model, set, idx);
    ad::Tape tape(ad::Tape::Mode::kInference);
    std::mt19937_64 rng(0);
    const model::ForwardResult res = model.forward(tape, batch, false, rng);
    const std::size_t t_len = batch.seq_len, k = model.config().clusters;
    for (std::size_t n = 0; n < res.alignments.size(); ++n) {
      const fs::path path = dir / ("alignment_" + split + "_doc" + std::to_string(doc) + "_layer" +
                                   std::to_string(n + 1) + ".tsv");
      std::ofstream out = open_out(path);
      for (std::size_t t = 0; t < t_len; ++t) out << (t ? "\t" : "") << tokens[t];
      out << '\n';
      const ad::Tensor& a = res.alignments[n];  // [T, K] for a single document
      for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t t = 0; t < t_len; ++t) out << (t ? "\t" : "") << text::format_double(a.at(t, c));
        out << '\n';
      }
      log << "wrote " << path.string() << '\n';
    }
  } else {
    throw ConfigError("export what must be embeddings, centroids, alignments or latents, got '" +
                      what + "'");
  }
}

void cmd_sweep(const RunConfig& cfg, std::ostream& log) {
  const std::string axis = cfg.get("sweep_axis");
  if (axis != "clusters" && axis != "layers") {
    throw ConfigError("sweep_axis must be clusters or layers, got '" + axis + "'");
  }
  const std::vector<std::size_t> values = parse_sweep_values(cfg.get("sweep_values"));
  const fs::path out_dir = cfg.get_path("output_dir");
  fs::create_directories(out_dir);
  write_snapshot(cfg, out_dir, "sweep");
  std::vector<std::pair<std::size_t, double>> results;
  for (std::size_t v : values) {
    RunConfig run = cfg;
    const fs::path run_dir = out_dir / (axis + "_" + std::to_string(v));
    run.set(axis, std::to_string(v));
    run.set("output_dir", run_dir.string());
    run.set("checkpoint", "");
    run.set("export_dir", "");
    run.set("centroids", (run_dir / "centroids.tsv").string());
    log << "sweep " << axis << " = " << v << '\n';
    cmd_init_centroids(run, log);
    results.emplace_back(v, cmd_train(run, log).accuracy);
  }
  std::ofstream out = open_out(out_dir / ("sweep_" + axis + ".tsv"));
  for (const auto& [v, acc] : results) out << v << '\t' << text::format_double(acc) << '\n';
}

int run_guarded(const std::function<void()>& fn, std::ostream& err) {
  try {
    fn();
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ShapeError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace clue::cli
