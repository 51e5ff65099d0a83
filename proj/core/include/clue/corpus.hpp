#pragma once

// Text ingestion: normalization, vocabulary, padded id sequences, tf-idf
// features, pretrained embedding tables and holdout splitting.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace clue::corpus {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kUrlToken = "<url>";
inline constexpr std::string_view kNumToken = "<num>";

struct RawRecord {
  int label = 0;
  std::string text;
};

/// Lowercases, replaces web links with `<url>` and each maximal digit run
/// with `<num>`, and splits on whitespace and punctuation.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  Vocabulary();

  /// Keeps tokens whose frequency is strictly greater than `min_count`.
  /// Ids 0 and 1 are PAD and UNK; the rest follow descending frequency with
  /// lexicographic tie-break. Throws DataError when nothing survives.
  static Vocabulary build(std::span<const std::vector<std::string>> streams,
                          int min_count = 3);

  /// Rebuilds from (token, frequency) pairs already in id order, starting at
  /// id 2.
  static Vocabulary from_entries(
      std::span<const std::pair<std::string, std::int64_t>> entries,
      std::int64_t unk_frequency = 0);

  /// UNK id for out-of-vocabulary tokens.
  int id(std::string_view token) const;
  const std::string& token(int id) const;
  std::int64_t frequency(int id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return id_to_token_.size(); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.id_to_token_ == b.id_to_token_ && a.freq_ == b.freq_;
  }

 private:
  void add(std::string token, std::int64_t freq);

  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
  std::vector<std::int64_t> freq_;
};

/// `token<TAB>id<TAB>freq`, one line per id including PAD and UNK.
void write_vocab_tsv(std::ostream& out, const Vocabulary& vocab);
Vocabulary read_vocab_tsv(std::istream& in);

struct Document {
  std::vector<int> ids;  // length max_len, PAD-right
  std::size_t true_len = 0;
  int label = 0;
  int num_classes = 1;

  std::vector<double> one_hot() const;
};

/// Maps tokens to ids (UNK for unknown), truncates to `max_len` and
/// right-pads with PAD.
Document encode(std::span<const std::string> tokens, const Vocabulary& vocab,
                std::size_t max_len, int label = 0, int num_classes = 1);

/// Tokens at the valid positions, UNK rendered as `<unk>`.
std::vector<std::string> decode(const Document& doc, const Vocabulary& vocab);

/// `ids<TAB>true_len<TAB>label`, ids space-separated.
void write_documents_tsv(std::ostream& out, std::span<const Document> docs);
std::vector<Document> read_documents_tsv(std::istream& in, int num_classes);

struct TfIdfEntry {
  int id = 0;
  double weight = 0.0;

  friend bool operator==(const TfIdfEntry&, const TfIdfEntry&) = default;
};

/// Sparse, ids strictly increasing, unit L2 norm when nonempty.
using TfIdfVector = std::vector<TfIdfEntry>;

class IdfModel {
 public:
  IdfModel() = default;

  /// Smoothed idf: ln((1 + N) / (1 + df)) + 1.
  static IdfModel fit(std::span<const Document> docs, std::size_t vocab_size);

  bool fitted() const { return fitted_; }
  std::size_t num_docs() const { return num_docs_; }
  std::size_t vocab_size() const { return idf_.size(); }
  double idf(int id) const;

  /// tf = count / true_len, weight = tf * idf, then L2-normalized.
  /// Throws std::logic_error when called before fit.
  TfIdfVector transform(const Document& doc) const;

  void write_tsv(std::ostream& out) const;
  static IdfModel read_tsv(std::istream& in);

 private:
  bool fitted_ = false;
  std::size_t num_docs_ = 0;
  std::vector<double> idf_;
};

std::vector<double> densify(const TfIdfVector& x, std::size_t vocab_size);

struct EmbeddingTable {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> values;  // row-major rows x dim
  std::size_t pretrained_rows = 0;

  std::span<double> row(std::size_t i) {
    return {values.data() + i * dim, dim};
  }
  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * dim, dim};
  }
};

/// Uniform [-0.05, 0.05] rows from `seed`, PAD row zero.
EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t dim,
                                 std::uint64_t seed);

/// Reads `token v1 ... vD` rows; vocabulary tokens found in the stream get
/// the file vector, the rest keep their seeded random initialization.
/// Throws DataError on a row whose width differs from `dim`.
EmbeddingTable load_embeddings(std::istream& in, const Vocabulary& vocab,
                               std::size_t dim, std::uint64_t seed);
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               const Vocabulary& vocab, std::size_t dim,
                               std::uint64_t seed);

struct MalformedRow {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

struct ParseReport {
  std::vector<RawRecord> records;
  std::vector<std::size_t> source_lines;  // 1-based line of each record
  std::vector<MalformedRow> malformed;
  std::size_t total_rows = 0;  // non-blank lines seen
};

/// Parses `<label><delim><text>` lines. Fields may be double-quoted; an
/// unquoted text field runs to the end of the line, a quoted one ends at its
/// closing quote (later fields are ignored). Labels are read as
/// `label_base`-based and stored 0-based.
ParseReport parse_records(std::istream& in, char delimiter, int num_classes,
                          int label_base = 0);

/// parse_records plus the abort rule: throws DataError when the file is
/// empty or more than `max_malformed_fraction` of its rows are malformed.
ParseReport read_dataset(const std::filesystem::path& path, char delimiter,
                         int num_classes,
                         double max_malformed_fraction = 0.01,
                         int label_base = 0);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> holdout;
};

/// Label-stratified split of sample indices. Each class contributes
/// round(n_c * fraction) samples (at least 1, at most n_c - 1) to holdout.
/// Throws DataError for classes with fewer than 2 samples.
Split split_holdout(std::span<const int> labels, double fraction,
                    std::uint64_t seed);

}  // namespace clue::corpus
