#include "clue/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "clue/errors.hpp"
#include "clue/tensor_io.hpp"
#include "clue/text_io.hpp"

namespace clue::checkpoint {

namespace fs = std::filesystem;

namespace {

std::string shape_token(const ad::Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

ad::Shape parse_shape_token(std::string_view tok) {
  ad::Shape shape;
  for (std::string_view part : text::split(tok, 'x')) {
    shape.push_back(text::parse_int<std::size_t>(part));
  }
  return shape;
}

fs::path block_path(const fs::path& dir, const std::string& name) {
  return dir / (name + ".tsv");
}

}  // namespace

void save(const fs::path& dir, const NamedTensors& params, const ConfigPairs& config) {
  fs::create_directories(dir);
  std::ofstream manifest(dir / "manifest.tsv");
  if (!manifest) throw DataError("cannot write " + (dir / "manifest.tsv").string());
  for (const auto& [name, tensor] : params) {
    manifest << "param\t" << name << '\t' << shape_token(tensor.shape()) << '\n';
    ad::save_tensor(block_path(dir, name), tensor);
  }
  for (const auto& [key, value] : config) manifest << "config\t" << key << '\t' << value << '\n';
  if (!manifest) throw DataError("failed writing " + (dir / "manifest.tsv").string());
}

Manifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.tsv";
  std::ifstream in(path);
  if (!in) throw DataError("checkpoint manifest not found: " + path.string());
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = text::split(line, '\t');
    if (fields.size() != 3) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
    }
    if (fields[0] == "param") {
      m.blocks.emplace_back(std::string(fields[1]), parse_shape_token(fields[2]));
    } else if (fields[0] == "config") {
      m.config.emplace_back(std::string(fields[1]), std::string(fields[2]));
    } else {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": unknown record '" +
                      std::string(fields[0]) + "'");
    }
  }
  return m;
}

void load_into(const fs::path& dir, const NamedTensors& params) {
  const Manifest m = read_manifest(dir);
  std::map<std::string, ad::Shape> shapes(m.blocks.begin(), m.blocks.end());
  for (const auto& [name, tensor] : params) {
    auto it = shapes.find(name);
    if (it == shapes.end()) throw DataError("checkpoint has no block '" + name + "'");
    if (it->second != tensor.shape()) {
      throw DataError("checkpoint block '" + name + "' is " + ad::shape_string(it->second) +
                      ", model expects " + ad::shape_string(tensor.shape()));
    }
    ad::Tensor stored = ad::load_tensor(block_path(dir, name));
    if (stored.shape() != tensor.shape()) {
      throw DataError("checkpoint file for '" + name + "' disagrees with the manifest");
    }
    ad::Tensor target = tensor;
    std::copy(stored.values().begin(), stored.values().end(), target.values().begin());
  }
}

}  // namespace clue::checkpoint
