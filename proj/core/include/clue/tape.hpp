#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "clue/tensor.hpp"

namespace clue::ad {

/// Define-by-run record of executed primitives.
///
/// Primitives append a node holding their output and a closure that pushes
/// the output's adjoint into the inputs. Execution order is a topological
/// order, so backward() simply walks the record in reverse. A tape and the
/// tensors it references belong to one thread.
class Tape {
 public:
  enum class Mode { kRecord, kInference };

  explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == Mode::kRecord; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  /// Called by primitives. No-op in inference mode.
  void record(Tensor output, std::function<void()> backward);

  /// Seeds d(loss)/d(loss) = 1, runs every adjoint once in reverse order and
  /// clears the record. `loss` must hold exactly one element and a forward
  /// pass must have been recorded since the last call.
  void backward(Tensor& loss);

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor output;
    std::function<void()> backward;
  };

  Mode mode_;
  std::vector<Node> nodes_;
};

}  // namespace clue::ad
