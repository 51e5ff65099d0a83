#pragma once

// Checkpoint directory: manifest.tsv plus one tensor TSV per parameter block.
//
// manifest.tsv lines:
//   param<TAB>name<TAB>d0xd1x...
//   config<TAB>key<TAB>value

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "clue/tensor.hpp"

namespace clue::checkpoint {

using NamedTensors = std::vector<std::pair<std::string, ad::Tensor>>;
using ConfigPairs = std::vector<std::pair<std::string, std::string>>;

struct Manifest {
  std::vector<std::pair<std::string, ad::Shape>> blocks;
  ConfigPairs config;
};

void save(const std::filesystem::path& dir, const NamedTensors& params,
          const ConfigPairs& config);

/// Throws DataError when the manifest is missing or malformed.
Manifest read_manifest(const std::filesystem::path& dir);

/// Copies stored values into `params` (matched by name). Every block of
/// `params` must be present with the same shape.
void load_into(const std::filesystem::path& dir, const NamedTensors& params);

}  // namespace clue::checkpoint
