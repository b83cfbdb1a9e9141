#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace pdt {

// Dense shape, outermost dimension first. Network activations use NCHW.
using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);

// Dense tensor handle with value semantics over shared storage: copying a
// TensorT copies the (shape, storage pointer) pair, so copies alias the same
// values and the same gradient buffer. Use clone() for a deep copy.
//
// Gradients live beside the values. ensure_grad() allocates a zeroed buffer
// on first use; backward passes accumulate into it additively and zero_grad()
// clears it between steps. requires_grad marks leaves that should receive
// gradients; recorded operations propagate the flag to their outputs.
template <class T>
class TensorT {
 public:
  using value_type = T;

  TensorT() = default;
  explicit TensorT(Shape shape, bool requires_grad = false);

  static TensorT zeros(Shape shape);
  static TensorT full(Shape shape, T value);
  // Builds a tensor from explicit values; throws if the count mismatches.
  static TensorT from(Shape shape, std::vector<T> values);
  static TensorT scalar(T value);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int dim(int i) const;
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t numel() const;

  T* data();
  const T* data() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  T* grad();
  const T* grad() const;
  // Allocates a zero-filled gradient buffer if none exists; returns it.
  T* ensure_grad();
  // Drops the gradient buffer (next ensure_grad starts from zeros again).
  void zero_grad();

  // Value of a single-element tensor; throws std::logic_error otherwise.
  T item() const;
  T grad_item() const;

  // NCHW element access for rank-4 tensors (bounds unchecked in release;
  // shape checks are the caller's responsibility on hot paths).
  T& at(int n, int c, int h, int w);
  const T& at(int n, int c, int h, int w) const;

  // Returns a tensor aliasing this storage under a new shape with equal
  // element count. Gradients flow through automatically because the grad
  // buffer is aliased too; reshapes therefore never appear on tapes.
  TensorT reshaped(Shape new_shape) const;

  // Deep copy of the values only (no gradient, requires_grad = false).
  TensorT clone() const;

  bool same_storage(const TensorT& other) const {
    return storage_ == other.storage_ && storage_ != nullptr;
  }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> out{Shape(shape_)};
    const T* src = data();
    U* dst = out.data();
    const std::int64_t n = numel();
    for (std::int64_t i = 0; i < n; ++i) dst[i] = static_cast<U>(src[i]);
    return out;
  }

 private:
  struct Storage {
    std::vector<T> values;
    std::vector<T> grad;  // empty until ensure_grad()
    bool requires_grad = false;
  };

  Shape shape_;
  std::shared_ptr<Storage> storage_;

  Storage& st();
  const Storage& st() const;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

extern template class TensorT<float>;
extern template class TensorT<double>;

}  // namespace pdt
