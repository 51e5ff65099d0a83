#include "clue/tape.hpp"

#include "clue/errors.hpp"

namespace clue::ad {

void Tape::record(Tensor output, std::function<void()> backward) {
  if (!recording()) return;
  nodes_.push_back({std::move(output), std::move(backward)});
}

void Tape::backward(Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward() needs a single-element loss");
  }
  if (nodes_.empty()) {
    throw ShapeError("backward() called without a recorded forward pass");
  }
  if (!loss.requires_grad()) {
    throw ShapeError("backward() on a loss that does not depend on parameters");
  }
  loss.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
  nodes_.clear();
}

}  // namespace clue::ad
