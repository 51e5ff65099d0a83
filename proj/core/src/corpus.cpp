#include "clue/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "clue/errors.hpp"
#include "clue/text_io.hpp"

namespace clue::corpus {

namespace {

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
// Bytes >= 0x80 belong to multi-byte UTF-8 characters and stay in words.
bool is_word_char(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}
char lower(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a')
                                : static_cast<char>(c);
}

std::size_t find_url_start(std::string_view chunk) {
  std::string low(chunk.size(), '\0');
  std::transform(chunk.begin(), chunk.end(), low.begin(),
                 [](char c) { return lower(static_cast<unsigned char>(c)); });
  std::size_t best = std::string::npos;
  for (std::string_view marker : {"http://", "https://", "www."}) {
    std::size_t pos = low.find(marker);
    if (marker == "www." && pos != std::string::npos && pos > 0 &&
        is_word_char(static_cast<unsigned char>(low[pos - 1]))) {
      continue;
    }
    best = std::min(best, pos);
  }
  return best;
}

void split_plain(std::string_view chunk, std::vector<std::string>& out) {
  std::string word;
  std::size_t i = 0;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  while (i < chunk.size()) {
    auto c = static_cast<unsigned char>(chunk[i]);
    if (is_digit(c)) {
      flush();
      while (i < chunk.size() && is_digit(static_cast<unsigned char>(chunk[i])))
        ++i;
      out.emplace_back(kNumToken);
      continue;
    }
    if (is_word_char(c)) {
      word.push_back(lower(c));
    } else {
      flush();
    }
    ++i;
  }
  flush();
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i])))
      ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(static_cast<unsigned char>(text[j])))
      ++j;
    if (j > i) {
      std::string_view chunk = text.substr(i, j - i);
      std::size_t url = find_url_start(chunk);
      if (url == std::string::npos) {
        split_plain(chunk, tokens);
      } else {
        split_plain(chunk.substr(0, url), tokens);
        tokens.emplace_back(kUrlToken);
      }
    }
    i = j;
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  add(std::string(kPadToken), 0);
  add(std::string(kUnkToken), 0);
}

void Vocabulary::add(std::string token, std::int64_t freq) {
  int id = static_cast<int>(id_to_token_.size());
  if (!token_to_id_.emplace(token, id).second) {
    throw DataError("duplicate vocabulary token '" + token + "'");
  }
  id_to_token_.push_back(std::move(token));
  freq_.push_back(freq);
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> streams,
                             int min_count) {
  std::unordered_map<std::string, std::int64_t> counts;
  for (const auto& stream : streams) {
    for (const auto& tok : stream) ++counts[tok];
  }
  Vocabulary vocab;
  std::int64_t unk_freq = 0;
  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n > min_count && tok != kPadToken && tok != kUnkToken) {
      kept.emplace_back(tok, n);
    } else {
      unk_freq += n;
    }
  }
  if (kept.empty()) throw DataError("empty vocabulary");
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  vocab.freq_[kUnkId] = unk_freq;
  for (auto& [tok, n] : kept) vocab.add(std::move(tok), n);
  return vocab;
}

Vocabulary Vocabulary::from_entries(
    std::span<const std::pair<std::string, std::int64_t>> entries,
    std::int64_t unk_frequency) {
  Vocabulary vocab;
  vocab.freq_[kUnkId] = unk_frequency;
  for (const auto& [tok, n] : entries) vocab.add(tok, n);
  return vocab;
}

int Vocabulary::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int id) const {
  return id_to_token_.at(static_cast<std::size_t>(id));
}

std::int64_t Vocabulary::frequency(int id) const {
  return freq_.at(static_cast<std::size_t>(id));
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) != 0;
}

void write_vocab_tsv(std::ostream& out, const Vocabulary& vocab) {
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    int id = static_cast<int>(i);
    out << vocab.token(id) << '\t' << id << '\t' << vocab.frequency(id)
        << '\n';
  }
}

Vocabulary read_vocab_tsv(std::istream& in) {
  std::vector<std::pair<std::string, std::int64_t>> entries;
  std::int64_t unk_freq = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = text::split(line, '\t');
    if (f.size() != 3) {
      throw DataError("vocabulary line " + std::to_string(lineno) +
                      ": expected 3 fields");
    }
    auto id = text::parse_int<int>(f[1]);
    auto freq = text::parse_int(f[2]);
    if (id == kUnkId) unk_freq = freq;
    if (id < 2) continue;
    if (static_cast<std::size_t>(id) != entries.size() + 2) {
      throw DataError("vocabulary line " + std::to_string(lineno) +
                      ": ids must be consecutive");
    }
    entries.emplace_back(std::string(f[0]), freq);
  }
  return Vocabulary::from_entries(entries, unk_freq);
}

// ---------------------------------------------------------------------------
// Documents

std::vector<double> Document::one_hot() const {
  std::vector<double> y(static_cast<std::size_t>(num_classes), 0.0);
  y.at(static_cast<std::size_t>(label)) = 1.0;
  return y;
}

Document encode(std::span<const std::string> tokens, const Vocabulary& vocab,
                std::size_t max_len, int label, int num_classes) {
  if (max_len == 0) throw std::invalid_argument("max_len must be >= 1");
  Document doc;
  doc.label = label;
  doc.num_classes = num_classes;
  doc.true_len = std::min(tokens.size(), max_len);
  doc.ids.assign(max_len, kPadId);
  for (std::size_t t = 0; t < doc.true_len; ++t) doc.ids[t] = vocab.id(tokens[t]);
  return doc;
}

std::vector<std::string> decode(const Document& doc, const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(doc.true_len);
  for (std::size_t t = 0; t < doc.true_len; ++t) out.push_back(vocab.token(doc.ids[t]));
  return out;
}

void write_documents_tsv(std::ostream& out, std::span<const Document> docs) {
  for (const auto& d : docs) {
    for (std::size_t t = 0; t < d.ids.size(); ++t) {
      if (t) out << ' ';
      out << d.ids[t];
    }
    out << '\t' << d.true_len << '\t' << d.label << '\n';
  }
}

std::vector<Document> read_documents_tsv(std::istream& in, int num_classes) {
  std::vector<Document> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = text::split(line, '\t');
    if (f.size() != 3) {
      throw DataError("document line " + std::to_string(lineno) +
                      ": expected 3 fields");
    }
    Document d;
    for (auto tok : text::split_ws(f[0])) d.ids.push_back(text::parse_int<int>(tok));
    d.true_len = text::parse_int<std::size_t>(f[1]);
    d.label = text::parse_int<int>(f[2]);
    d.num_classes = num_classes;
    if (d.true_len > d.ids.size() || d.label < 0 || d.label >= num_classes) {
      throw DataError("document line " + std::to_string(lineno) +
                      ": inconsistent length or label");
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

// ---------------------------------------------------------------------------
// tf-idf

IdfModel IdfModel::fit(std::span<const Document> docs, std::size_t vocab_size) {
  IdfModel m;
  m.fitted_ = true;
  m.num_docs_ = docs.size();
  std::vector<std::size_t> df(vocab_size, 0);
  std::vector<char> seen(vocab_size, 0);
  for (const auto& d : docs) {
    std::fill(seen.begin(), seen.end(), 0);
    for (std::size_t t = 0; t < d.true_len; ++t) {
      auto id = static_cast<std::size_t>(d.ids[t]);
      if (id >= vocab_size) throw DataError("token id outside vocabulary");
      if (!seen[id]) {
        seen[id] = 1;
        ++df[id];
      }
    }
  }
  m.idf_.resize(vocab_size);
  const double n = static_cast<double>(docs.size());
  for (std::size_t i = 0; i < vocab_size; ++i) {
    m.idf_[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[i]))) + 1.0;
  }
  return m;
}

double IdfModel::idf(int id) const {
  if (!fitted_) throw std::logic_error("IdfModel used before fit");
  return idf_.at(static_cast<std::size_t>(id));
}

TfIdfVector IdfModel::transform(const Document& doc) const {
  if (!fitted_) throw std::logic_error("tfidf_transform called before fit");
  std::map<int, std::size_t> counts;
  for (std::size_t t = 0; t < doc.true_len; ++t) ++counts[doc.ids[t]];
  TfIdfVector x;
  x.reserve(counts.size());
  double norm2 = 0.0;
  const double len = static_cast<double>(doc.true_len);
  for (auto [id, c] : counts) {
    double w = (static_cast<double>(c) / len) * idf(id);
    x.push_back({id, w});
    norm2 += w * w;
  }
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& e : x) e.weight *= inv;
  }
  return x;
}

void IdfModel::write_tsv(std::ostream& out) const {
  out << "num_docs\t" << num_docs_ << '\n';
  for (std::size_t i = 0; i < idf_.size(); ++i) {
    out << i << '\t' << text::format_double(idf_[i]) << '\n';
  }
}

IdfModel IdfModel::read_tsv(std::istream& in) {
  IdfModel m;
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty idf file");
  auto head = text::split(line, '\t');
  if (head.size() != 2 || head[0] != "num_docs") {
    throw DataError("idf file: missing num_docs header");
  }
  m.num_docs_ = text::parse_int<std::size_t>(head[1]);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = text::split(line, '\t');
    if (f.size() != 2 || text::parse_int<std::size_t>(f[0]) != m.idf_.size()) {
      throw DataError("idf file: malformed row");
    }
    m.idf_.push_back(text::parse_double(f[1]));
  }
  m.fitted_ = true;
  return m;
}

std::vector<double> densify(const TfIdfVector& x, std::size_t vocab_size) {
  std::vector<double> dense(vocab_size, 0.0);
  for (const auto& e : x) dense.at(static_cast<std::size_t>(e.id)) = e.weight;
  return dense;
}

// ---------------------------------------------------------------------------
// Embeddings

EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t dim,
                                 std::uint64_t seed) {
  EmbeddingTable table;
  table.rows = vocab.size();
  table.dim = dim;
  table.values.resize(table.rows * dim);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.05, 0.05);
  for (auto& v : table.values) v = dist(rng);
  std::fill_n(table.values.begin(), dim, 0.0);
  return table;
}

EmbeddingTable load_embeddings(std::istream& in, const Vocabulary& vocab,
                               std::size_t dim, std::uint64_t seed) {
  EmbeddingTable table = random_embeddings(vocab, dim, seed);
  std::vector<char> filled(vocab.size(), 0);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto f = text::split_ws(line);
    if (f.empty()) continue;
    // word2vec-style "count dim" header
    if (lineno == 1 && f.size() == 2) continue;
    if (f.size() != dim + 1) {
      throw DataError("embedding line " + std::to_string(lineno) + ": expected " +
                      std::to_string(dim) + " values, found " +
                      std::to_string(f.size() - 1));
    }
    int id = vocab.id(f[0]);
    if (id == kUnkId && f[0] != kUnkToken) continue;
    if (id == kPadId || filled[static_cast<std::size_t>(id)]) continue;
    auto row = table.row(static_cast<std::size_t>(id));
    for (std::size_t j = 0; j < dim; ++j) row[j] = text::parse_double(f[j + 1]);
    filled[static_cast<std::size_t>(id)] = 1;
    ++table.pretrained_rows;
  }
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               const Vocabulary& vocab, std::size_t dim,
                               std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read embeddings file " + path.string());
  return load_embeddings(in, vocab, dim, seed);
}

// ---------------------------------------------------------------------------
// Dataset input

namespace {

// Reads one field starting at `pos`. Returns false on an unterminated quote.
bool read_field(std::string_view line, std::size_t& pos, char delim,
                bool to_end, std::string& out) {
  out.clear();
  if (pos < line.size() && line[pos] == '"') {
    ++pos;
    while (pos < line.size()) {
      char c = line[pos];
      if (c == '"') {
        if (pos + 1 < line.size() && line[pos + 1] == '"') {
          out.push_back('"');
          pos += 2;
          continue;
        }
        ++pos;
        // Skip to the delimiter; anything between is ignored.
        std::size_t next = line.find(delim, pos);
        pos = next == std::string_view::npos ? line.size() : next + 1;
        return true;
      }
      out.push_back(c);
      ++pos;
    }
    return false;
  }
  if (to_end) {
    out.assign(line.substr(pos));
    pos = line.size();
    return true;
  }
  std::size_t next = line.find(delim, pos);
  if (next == std::string_view::npos) {
    out.assign(line.substr(pos));
    pos = line.size() + 1;
  } else {
    out.assign(line.substr(pos, next - pos));
    pos = next + 1;
  }
  return true;
}

}  // namespace

ParseReport parse_records(std::istream& in, char delimiter, int num_classes, int label_base) {
  ParseReport report;
  std::string line;
  std::size_t lineno = 0;
  std::string label_field, text_field;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    ++report.total_rows;
    std::string_view sv(line);
    std::size_t pos = 0;
    if (!read_field(sv, pos, delimiter, false, label_field) || pos > sv.size()) {
      report.malformed.push_back({lineno, "missing delimiter"});
      continue;
    }
    if (!read_field(sv, pos, delimiter, true, text_field)) {
      report.malformed.push_back({lineno, "unterminated quote"});
      continue;
    }
    int label = 0;
    try {
      label = text::parse_int<int>(text::trim(label_field)) - label_base;
    } catch (const DataError&) {
      report.malformed.push_back({lineno, "label is not an integer"});
      continue;
    }
    if (label < 0 || label >= num_classes) {
      report.malformed.push_back({lineno, "label out of range"});
      continue;
    }
    auto trimmed = text::trim(text_field);
    if (trimmed.empty()) {
      report.malformed.push_back({lineno, "empty text"});
      continue;
    }
    report.records.push_back({label, std::string(trimmed)});
    report.source_lines.push_back(lineno);
  }
  return report;
}

ParseReport read_dataset(const std::filesystem::path& path, char delimiter,
                         int num_classes, double max_malformed_fraction, int label_base) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read dataset " + path.string());
  ParseReport report = parse_records(in, delimiter, num_classes, label_base);
  if (report.total_rows == 0) throw DataError("dataset " + path.string() + " is empty");
  const double frac = static_cast<double>(report.malformed.size()) /
                      static_cast<double>(report.total_rows);
  if (frac > max_malformed_fraction) {
    std::string msg = path.string() + ": " +
                      std::to_string(report.malformed.size()) + " of " +
                      std::to_string(report.total_rows) +
                      " rows malformed; first at";
    for (std::size_t i = 0; i < std::min<std::size_t>(5, report.malformed.size()); ++i) {
      msg += " line " + std::to_string(report.malformed[i].line) + " (" +
             report.malformed[i].reason + ")";
    }
    throw DataError(msg);
  }
  return report;
}

Split split_holdout(std::span<const int> labels, double fraction,
                    std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("holdout fraction must be in (0, 1)");
  }
  std::map<int, std::size_t> per_class;
  for (int y : labels) ++per_class[y];
  std::map<int, std::size_t> quota;
  for (auto [y, n] : per_class) {
    if (n < 2) {
      throw DataError("class " + std::to_string(y) + " has " + std::to_string(n) +
                      " sample; stratified holdout needs at least 2");
    }
    auto q = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
    quota[y] = std::clamp<std::size_t>(q, 1, n - 1);
  }
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  Split split;
  for (std::size_t idx : order) {
    auto& q = quota[labels[idx]];
    if (q > 0) {
      split.holdout.push_back(idx);
      --q;
    } else {
      split.train.push_back(idx);
    }
  }
  return split;
}

}  // namespace clue::corpus
