#pragma once

// Subcommands of the clue tool. Each reads a RunConfig, writes its
// artifacts plus a resolved-config snapshot, and reports progress on `log`.
//
// Errors surface as ConfigError (exit 1), DataError (exit 2) and
// NumericError (exit 3).

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

#include "clue/cli/run_config.hpp"
#include "clue/corpus.hpp"
#include "clue/model.hpp"
#include "clue/training.hpp"

namespace clue::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

/// Contents of a prepared corpus directory.
struct PreparedCorpus {
  corpus::Vocabulary vocab;
  corpus::IdfModel idf;
  training::Dataset train, holdout, test;
  std::size_t num_classes = 0;
  std::size_t max_len = 0;

  /// "train", "holdout" or "test"; ConfigError otherwise.
  const training::Dataset& split(const std::string& name) const;
};

PreparedCorpus load_prepared(const std::filesystem::path& dir);

/// Embedding table named by the config (pretrained file or seeded random).
corpus::EmbeddingTable make_embeddings(const RunConfig& cfg, const corpus::Vocabulary& vocab);

/// Points clustered for initialization: vocabulary rows without PAD/UNK,
/// or per-document mean vectors of the training split.
ad::Tensor clustering_points(const RunConfig& cfg, const PreparedCorpus& data,
                             const corpus::EmbeddingTable& table);

void cmd_prepare(const RunConfig& cfg, std::ostream& log);
void cmd_init_centroids(const RunConfig& cfg, std::ostream& log);
/// Returns the test-split metrics of the restored best checkpoint.
training::Metrics cmd_train(const RunConfig& cfg, std::ostream& log);
/// Writes a metric-log header and one row to `out`.
training::Metrics cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& log);
void cmd_export(const RunConfig& cfg, std::ostream& log);
void cmd_sweep(const RunConfig& cfg, std::ostream& log);

/// Rebuilds a model from a checkpoint directory (config from its manifest).
model::CluEModel load_model(const std::filesystem::path& checkpoint);

/// Runs `fn`, mapping exceptions to exit codes and printing them to `err`.
int run_guarded(const std::function<void()>& fn, std::ostream& err);

}  // namespace clue::cli
