#include "pdt/tape.hpp"

#include <stdexcept>

namespace pdt {

template <class T>
void Tape<T>::backward(TensorT<T>& loss) {
  if (loss.numel() != 1) {
    throw std::logic_error("Tape::backward: loss must be a scalar, got " +
                           shape_str(loss.shape()));
  }
  if (consumed_) {
    throw std::logic_error(
        "Tape::backward: tape already consumed; reset() and re-run the "
        "forward pass before differentiating again");
  }
  if (nodes_.empty()) {
    throw std::logic_error(
        "Tape::backward: tape is empty; the loss was not produced by "
        "operations recorded on this tape");
  }
  consumed_ = true;
  loss.ensure_grad()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    (*it)();
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace pdt
