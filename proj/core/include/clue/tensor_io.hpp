#pragma once

#include <filesystem>
#include <iosfwd>

#include "clue/tensor.hpp"

namespace clue::ad {

// Tensor TSV: first line holds the extents (tab-separated), then one line
// per row of the last axis in row-major order. Values use the shortest
// representation that round-trips exactly.
void write_tensor_tsv(std::ostream& out, const Tensor& t);
Tensor read_tensor_tsv(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace clue::ad
