#include "clue/tensor_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "clue/errors.hpp"
#include "clue/text_io.hpp"

namespace clue::ad {

void write_tensor_tsv(std::ostream& out, const Tensor& t) {
  const Shape& shape = t.shape();
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << '\t';
    out << shape[i];
  }
  out << '\n';
  const std::size_t cols = shape.back();
  auto v = t.values();
  for (std::size_t r = 0; r < v.size() / cols; ++r) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (j) out << '\t';
      out << text::format_double(v[r * cols + j]);
    }
    out << '\n';
  }
}

Tensor read_tensor_tsv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("tensor TSV: missing shape header");
  Shape shape;
  for (auto f : text::split(line, '\t')) shape.push_back(text::parse_int<std::size_t>(f));
  const std::size_t n = num_elements(shape);
  std::vector<double> values;
  values.reserve(n);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = text::split(line, '\t');
    if (fields.size() != shape.back()) {
      throw DataError("tensor TSV: row of width " + std::to_string(fields.size()) +
                      ", expected " + std::to_string(shape.back()));
    }
    for (auto f : fields) values.push_back(text::parse_double(f));
  }
  if (values.size() != n) {
    throw DataError("tensor TSV: " + std::to_string(values.size()) +
                    " values for shape " + shape_string(shape));
  }
  return Tensor(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_tensor_tsv(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  return read_tensor_tsv(in);
}

}  // namespace clue::ad
