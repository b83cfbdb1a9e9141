#pragma once

#include "pdt/common.hpp"
#include "pdt/tape.hpp"
#include "pdt/tensor.hpp"

namespace pdt {

// Per-channel batch normalization state for NCHW activations.
//
// gamma/beta are the learnable scale and shift (registered with the
// optimizer by the owning network). running_mean/running_var are inference
// statistics updated only in Train mode via
//   running <- momentum * running + (1 - momentum) * batch_stat
// with the biased (1/m) batch variance, matching what normalization uses.
template <class T>
struct BatchNormState {
  TensorT<T> gamma;         // [C], initialized to 1
  TensorT<T> beta;          // [C], initialized to 0
  TensorT<T> running_mean;  // [C], initialized to 0
  TensorT<T> running_var;   // [C], initialized to 1
  T momentum = T(0.9);
  T eps = T(1e-5);
  // Number of Train-mode batches folded into the running statistics. Eval
  // before any Train-mode batch still works (it normalizes with the initial
  // mean 0 / var 1) but raises a warning, since those statistics carry no
  // information about the data.
  long long batches_seen = 0;

  static BatchNormState make(int channels);
};

// Normalizes x [N,C,H,W] per channel.
//
// Train mode: uses the batch mean and biased variance over the N*H*W
// elements of each channel (requires N*H*W >= 2), then updates the running
// statistics. Eval mode: uses the running statistics and leaves all state
// untouched. Both modes apply y = gamma * x_hat + beta and are
// differentiable w.r.t. x, gamma, and beta.
template <class T>
TensorT<T> batch_norm2d(const TensorT<T>& x, BatchNormState<T>& state,
                        Mode mode, Tape<T>* tape = nullptr);

extern template struct BatchNormState<float>;
extern template struct BatchNormState<double>;
extern template TensorT<float> batch_norm2d(const TensorT<float>&,
                                            BatchNormState<float>&, Mode,
                                            Tape<float>*);
extern template TensorT<double> batch_norm2d(const TensorT<double>&,
                                             BatchNormState<double>&, Mode,
                                             Tape<double>*);

}  // namespace pdt
