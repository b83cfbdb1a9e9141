#include "pdt/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace pdt {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) {
      throw std::invalid_argument("shape has non-positive dimension " +
                                  shape_str(shape));
    }
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

template <class T>
TensorT<T>::TensorT(Shape shape, bool requires_grad) : shape_(std::move(shape)) {
  const std::int64_t n = shape_numel(shape_);
  storage_ = std::make_shared<Storage>();
  storage_->values.assign(static_cast<std::size_t>(n), T(0));
  storage_->requires_grad = requires_grad;
}

template <class T>
TensorT<T> TensorT<T>::zeros(Shape shape) {
  return TensorT(std::move(shape));
}

template <class T>
TensorT<T> TensorT<T>::full(Shape shape, T value) {
  TensorT t(std::move(shape));
  for (auto& v : t.storage_->values) v = value;
  return t;
}

template <class T>
TensorT<T> TensorT<T>::from(Shape shape, std::vector<T> values) {
  const std::int64_t n = shape_numel(shape);
  if (n != static_cast<std::int64_t>(values.size())) {
    throw std::invalid_argument("TensorT::from: " + shape_str(shape) +
                                " needs " + std::to_string(n) +
                                " values, got " +
                                std::to_string(values.size()));
  }
  TensorT t;
  t.shape_ = std::move(shape);
  t.storage_ = std::make_shared<Storage>();
  t.storage_->values = std::move(values);
  return t;
}

template <class T>
TensorT<T> TensorT<T>::scalar(T value) {
  return from({1}, {value});
}

template <class T>
int TensorT<T>::dim(int i) const {
  if (i < 0 || i >= rank()) {
    throw std::out_of_range("TensorT::dim: axis " + std::to_string(i) +
                            " out of range for " + shape_str(shape_));
  }
  return shape_[static_cast<std::size_t>(i)];
}

template <class T>
std::int64_t TensorT<T>::numel() const {
  return defined() ? static_cast<std::int64_t>(storage_->values.size()) : 0;
}

template <class T>
typename TensorT<T>::Storage& TensorT<T>::st() {
  if (!storage_) throw std::logic_error("TensorT: use of undefined tensor");
  return *storage_;
}

template <class T>
const typename TensorT<T>::Storage& TensorT<T>::st() const {
  if (!storage_) throw std::logic_error("TensorT: use of undefined tensor");
  return *storage_;
}

template <class T>
T* TensorT<T>::data() {
  return st().values.data();
}

template <class T>
const T* TensorT<T>::data() const {
  return st().values.data();
}

template <class T>
bool TensorT<T>::requires_grad() const {
  return defined() && storage_->requires_grad;
}

template <class T>
void TensorT<T>::set_requires_grad(bool value) {
  st().requires_grad = value;
}

template <class T>
bool TensorT<T>::has_grad() const {
  return defined() && !storage_->grad.empty();
}

template <class T>
T* TensorT<T>::grad() {
  return has_grad() ? st().grad.data() : nullptr;
}

template <class T>
const T* TensorT<T>::grad() const {
  return has_grad() ? st().grad.data() : nullptr;
}

template <class T>
T* TensorT<T>::ensure_grad() {
  Storage& s = st();
  if (s.grad.empty()) s.grad.assign(s.values.size(), T(0));
  return s.grad.data();
}

template <class T>
void TensorT<T>::zero_grad() {
  st().grad.clear();
}

template <class T>
T TensorT<T>::item() const {
  if (numel() != 1) {
    throw std::logic_error("TensorT::item: tensor " + shape_str(shape_) +
                           " is not a scalar");
  }
  return st().values[0];
}

template <class T>
T TensorT<T>::grad_item() const {
  if (numel() != 1) {
    throw std::logic_error("TensorT::grad_item: tensor " + shape_str(shape_) +
                           " is not a scalar");
  }
  if (!has_grad()) {
    throw std::logic_error("TensorT::grad_item: no gradient present");
  }
  return st().grad[0];
}

template <class T>
T& TensorT<T>::at(int n, int c, int h, int w) {
  const auto& s = shape_;
  return data()[((static_cast<std::int64_t>(n) * s[1] + c) * s[2] + h) * s[3] +
                w];
}

template <class T>
const T& TensorT<T>::at(int n, int c, int h, int w) const {
  const auto& s = shape_;
  return data()[((static_cast<std::int64_t>(n) * s[1] + c) * s[2] + h) * s[3] +
                w];
}

template <class T>
TensorT<T> TensorT<T>::reshaped(Shape new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw std::invalid_argument("TensorT::reshaped: cannot view " +
                                shape_str(shape_) + " as " +
                                shape_str(new_shape));
  }
  TensorT out;
  out.shape_ = std::move(new_shape);
  out.storage_ = storage_;
  return out;
}

template <class T>
TensorT<T> TensorT<T>::clone() const {
  TensorT out;
  out.shape_ = shape_;
  out.storage_ = std::make_shared<Storage>();
  out.storage_->values = st().values;
  return out;
}

template class TensorT<float>;
template class TensorT<double>;

}  // namespace pdt
