#include "pdt/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace pdt {

template <class T>
void Optimizer<T>::add_parameter(std::string name, TensorT<T> param) {
  if (!param.defined()) {
    throw std::invalid_argument("Optimizer: parameter '" + name +
                                "' is undefined");
  }
  names_.push_back(std::move(name));
  params_.push_back(param);
  on_parameter_added(params_.back());
}

template <class T>
void Optimizer<T>::add_parameters(
    const std::vector<std::pair<std::string, TensorT<T>>>& params) {
  for (const auto& [name, p] : params) add_parameter(name, p);
}

template <class T>
void Optimizer<T>::step(T lr) {
  // Validate up front so a throw cannot leave a half-applied step.
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw std::logic_error("Optimizer::step: parameter '" + names_[i] +
                             "' has no gradient; call ensure_grads() if a "
                             "zero gradient is intended");
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    apply(i, params_[i], lr);
  }
}

template <class T>
void Optimizer<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <class T>
void Optimizer<T>::ensure_grads() {
  for (auto& p : params_) p.ensure_grad();
}

template <class T>
void Optimizer<T>::set_scalar_state(const std::string& key, double) {
  throw std::invalid_argument("Optimizer: unknown scalar state '" + key + "'");
}

// --- SgdMomentum -------------------------------------------------------------

template <class T>
void SgdMomentum<T>::on_parameter_added(const TensorT<T>& param) {
  velocity_.emplace_back(static_cast<std::size_t>(param.numel()), T(0));
}

template <class T>
void SgdMomentum<T>::apply(std::size_t i, TensorT<T>& param, T lr) {
  const T* g = param.grad();
  T* p = param.data();
  std::vector<T>& v = velocity_[i];
  for (std::size_t j = 0; j < v.size(); ++j) {
    v[j] = momentum_ * v[j] + g[j];
    p[j] -= lr * v[j];
  }
}

template <class T>
std::vector<std::pair<std::string, std::vector<T>*>>
SgdMomentum<T>::state_buffers() {
  std::vector<std::pair<std::string, std::vector<T>*>> out;
  for (std::size_t i = 0; i < velocity_.size(); ++i) {
    out.emplace_back(this->names_[i] + ".velocity", &velocity_[i]);
  }
  return out;
}

// --- Adam --------------------------------------------------------------------

template <class T>
void Adam<T>::on_parameter_added(const TensorT<T>& param) {
  m_.emplace_back(static_cast<std::size_t>(param.numel()), T(0));
  v_.emplace_back(static_cast<std::size_t>(param.numel()), T(0));
}

template <class T>
void Adam<T>::apply(std::size_t i, TensorT<T>& param, T lr) {
  if (i == 0) ++steps_;  // one step count per optimizer step
  const T* g = param.grad();
  T* p = param.data();
  std::vector<T>& m = m_[i];
  std::vector<T>& v = v_[i];
  const double c1 = 1.0 - std::pow(double(beta1_), double(steps_));
  const double c2 = 1.0 - std::pow(double(beta2_), double(steps_));
  for (std::size_t j = 0; j < m.size(); ++j) {
    m[j] = beta1_ * m[j] + (T(1) - beta1_) * g[j];
    v[j] = beta2_ * v[j] + (T(1) - beta2_) * g[j] * g[j];
    const T mhat = T(double(m[j]) / c1);
    const T vhat = T(double(v[j]) / c2);
    p[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
  }
}

template <class T>
std::vector<std::pair<std::string, std::vector<T>*>> Adam<T>::state_buffers() {
  std::vector<std::pair<std::string, std::vector<T>*>> out;
  for (std::size_t i = 0; i < m_.size(); ++i) {
    out.emplace_back(this->names_[i] + ".adam_m", &m_[i]);
    out.emplace_back(this->names_[i] + ".adam_v", &v_[i]);
  }
  return out;
}

template <class T>
std::vector<std::pair<std::string, double>> Adam<T>::scalar_state() const {
  return {{"adam_steps", double(steps_)}};
}

template <class T>
void Adam<T>::set_scalar_state(const std::string& key, double value) {
  if (key == "adam_steps") {
    steps_ = static_cast<std::int64_t>(value);
    return;
  }
  Optimizer<T>::set_scalar_state(key, value);
}

template class Optimizer<float>;
template class Optimizer<double>;
template class SgdMomentum<float>;
template class SgdMomentum<double>;
template class Adam<float>;
template class Adam<double>;

}  // namespace pdt
