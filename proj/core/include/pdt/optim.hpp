#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pdt/tensor.hpp"

namespace pdt {

// First-order optimizer over a fixed set of registered parameters. The
// optimizer holds shared-storage handles, so step() updates the network's
// tensors in place. step() requires every registered parameter to carry a
// gradient buffer and throws std::logic_error otherwise — a parameter that
// legitimately received no gradient this step must be given an explicit
// zero buffer (ensure_grads()) rather than being skipped silently.
template <class T>
class Optimizer {
 public:
  virtual ~Optimizer() = default;

  void add_parameter(std::string name, TensorT<T> param);
  void add_parameters(const std::vector<std::pair<std::string, TensorT<T>>>&);

  std::size_t size() const { return params_.size(); }

  // Applies one update with learning rate `lr` to every parameter.
  void step(T lr);

  // Drops all parameter gradients (start of a fresh accumulation).
  void zero_grad();

  // Allocates zeroed gradient buffers for parameters that lack one.
  void ensure_grads();

  // Per-parameter state vectors for checkpointing, e.g. "<name>.velocity".
  // Buffers are owned by the optimizer and sized like their parameter.
  virtual std::vector<std::pair<std::string, std::vector<T>*>> state_buffers()
      = 0;
  // Scalar state for checkpoint metadata (e.g. Adam's step count).
  virtual std::vector<std::pair<std::string, double>> scalar_state() const {
    return {};
  }
  virtual void set_scalar_state(const std::string& key, double value);

 protected:
  virtual void apply(std::size_t i, TensorT<T>& param, T lr) = 0;
  virtual void on_parameter_added(const TensorT<T>& param) = 0;

  std::vector<std::string> names_;
  std::vector<TensorT<T>> params_;
};

// Classical momentum: v <- mu * v + g; theta <- theta - lr * v.
// With mu = 0 this is plain gradient descent.
template <class T>
class SgdMomentum final : public Optimizer<T> {
 public:
  explicit SgdMomentum(T momentum) : momentum_(momentum) {}

  T momentum() const { return momentum_; }
  std::vector<std::pair<std::string, std::vector<T>*>> state_buffers()
      override;

 protected:
  void apply(std::size_t i, TensorT<T>& param, T lr) override;
  void on_parameter_added(const TensorT<T>& param) override;

 private:
  T momentum_;
  std::vector<std::vector<T>> velocity_;
};

// Adam (adaptive moment estimation) with bias correction. beta1 is taken
// from the configured momentum so the CLI's --momentum flag has one meaning
// across optimizers.
template <class T>
class Adam final : public Optimizer<T> {
 public:
  explicit Adam(T beta1, T beta2 = T(0.999), T eps = T(1e-8))
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  std::vector<std::pair<std::string, std::vector<T>*>> state_buffers()
      override;
  std::vector<std::pair<std::string, double>> scalar_state() const override;
  void set_scalar_state(const std::string& key, double value) override;

 protected:
  void apply(std::size_t i, TensorT<T>& param, T lr) override;
  void on_parameter_added(const TensorT<T>& param) override;

 private:
  T beta1_, beta2_, eps_;
  std::int64_t steps_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;
extern template class SgdMomentum<float>;
extern template class SgdMomentum<double>;
extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace pdt
