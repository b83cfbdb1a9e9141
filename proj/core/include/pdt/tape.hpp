#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "pdt/tensor.hpp"

namespace pdt {

// Records the operations of a forward pass in execution order. Each node is
// a closure that propagates gradients from its output to its inputs; the
// tensors it needs are captured by handle, which keeps their storage alive.
//
// Operations append a node only when gradients can flow: a tape pointer was
// supplied and at least one input requires a gradient. Running the same
// forward code with a null tape is therefore a pure (inference) evaluation.
//
// backward() replays the nodes in reverse once. Gradients accumulate
// additively into each tensor's grad buffer, so shared inputs receive the
// sum of the contributions of every use, and a second backward over the same
// tape is rejected rather than silently double-counting.
template <class T>
class Tape {
 public:
  using Node = std::function<void()>;

  void record(Node node) { nodes_.push_back(std::move(node)); }

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  bool consumed() const { return consumed_; }

  // Clears all nodes and re-arms the tape for a fresh forward pass.
  void reset() {
    nodes_.clear();
    consumed_ = false;
  }

  // Seeds d(loss)/d(loss) = 1 and replays the recorded nodes in reverse.
  // Preconditions: loss is a single-element tensor produced by ops recorded
  // on this tape, and the tape has not been consumed since its last reset.
  void backward(TensorT<T>& loss);

 private:
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace pdt
