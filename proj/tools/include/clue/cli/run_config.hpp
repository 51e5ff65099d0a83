#pragma once

// Flat `key = value` run configuration shared by every subcommand.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clue/model.hpp"
#include "clue/training.hpp"

namespace clue::cli {

struct KeySpec {
  std::string_view key;
  std::string_view default_value;
  std::string_view help;
};

/// Every accepted key with its default, in snapshot order.
std::span<const KeySpec> known_keys();

class RunConfig {
 public:
  RunConfig();

  /// Reads `key = value` lines; `#` starts a comment. Throws ConfigError on
  /// unknown keys or lines without `=`, naming `source` and the line.
  static RunConfig parse(std::istream& in, const std::string& source);
  static RunConfig load(const std::filesystem::path& path);

  /// Throws ConfigError for an unknown key.
  void set(std::string_view key, std::string value);
  const std::string& get(std::string_view key) const;
  /// True when the key came from a file or an override, not the default.
  bool is_explicit(std::string_view key) const;

  double get_double(std::string_view key) const;
  std::size_t get_size(std::string_view key) const;
  std::uint64_t get_u64(std::string_view key) const;
  int get_int(std::string_view key) const;
  std::filesystem::path get_path(std::string_view key) const;
  char delimiter() const;

  /// Copy with derived defaults filled in: variant-gated lambdas and the
  /// centroid, checkpoint and export paths.
  RunConfig resolved() const;

  model::CluEConfig model_config(std::size_t vocab_size, std::size_t num_classes) const;
  training::TrainConfig train_config() const;

  std::vector<std::pair<std::string, std::string>> entries() const;
  void write(std::ostream& out) const;
  void write(const std::filesystem::path& path) const;

 private:
  std::size_t index_of(std::string_view key) const;

  std::vector<std::string> values_;
  std::set<std::size_t> explicit_;
};

}  // namespace clue::cli
