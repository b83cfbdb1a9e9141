#include "pdt/batch_norm.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace pdt {
namespace {

template <class T>
void check_input(const TensorT<T>& x, const BatchNormState<T>& state) {
  if (x.rank() != 4) {
    throw std::invalid_argument("batch_norm2d: input must be rank 4, got " +
                                shape_str(x.shape()));
  }
  if (state.gamma.dim(0) != x.dim(1)) {
    throw std::invalid_argument(
        "batch_norm2d: state has " + shape_str(state.gamma.shape()) +
        " channels but input is " + shape_str(x.shape()));
  }
}

}  // namespace

template <class T>
BatchNormState<T> BatchNormState<T>::make(int channels) {
  BatchNormState<T> s;
  s.gamma = TensorT<T>::full({channels}, T(1));
  s.beta = TensorT<T>::zeros({channels});
  s.running_mean = TensorT<T>::zeros({channels});
  s.running_var = TensorT<T>::full({channels}, T(1));
  return s;
}

template <class T>
TensorT<T> batch_norm2d(const TensorT<T>& x, BatchNormState<T>& state,
                        Mode mode, Tape<T>* tape) {
  check_input(x, state);
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t hw = std::int64_t(h) * w;
  const std::int64_t m = std::int64_t(n) * hw;  // elements per channel

  TensorT<T> mean{{c}};
  TensorT<T> inv_std{{c}};
  if (mode == Mode::Train) {
    if (m < 2) {
      throw std::invalid_argument(
          "batch_norm2d: train mode needs at least 2 elements per channel, "
          "input " + shape_str(x.shape()) + " has 1");
    }
    const T* xp = x.data();
    for (int ch = 0; ch < c; ++ch) {
      double sum = 0.0, sq = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* base = xp + (std::int64_t(i) * c + ch) * hw;
        for (std::int64_t j = 0; j < hw; ++j) {
          const double v = double(base[j]);
          sum += v;
          sq += v * v;
        }
      }
      const double mu = sum / double(m);
      double var = sq / double(m) - mu * mu;
      if (var < 0.0) var = 0.0;  // guard rounding on near-constant channels
      mean.data()[ch] = T(mu);
      inv_std.data()[ch] = T(1.0 / std::sqrt(var + double(state.eps)));
      state.running_mean.data()[ch] =
          state.momentum * state.running_mean.data()[ch] +
          (T(1) - state.momentum) * T(mu);
      state.running_var.data()[ch] =
          state.momentum * state.running_var.data()[ch] +
          (T(1) - state.momentum) * T(var);
    }
    ++state.batches_seen;
  } else {
    if (state.batches_seen == 0) {
      warn(
          "batch_norm2d: eval-mode normalization with uninitialized running "
          "statistics (no train-mode batch has been seen)");
    }
    for (int ch = 0; ch < c; ++ch) {
      mean.data()[ch] = state.running_mean.data()[ch];
      inv_std.data()[ch] =
          T(1) / std::sqrt(state.running_var.data()[ch] + state.eps);
    }
  }

  // x_hat is kept for the backward pass (and is itself y before scale/shift).
  TensorT<T> xhat{Shape(x.shape())};
  TensorT<T> y{Shape(x.shape())};
  {
    const T* xp = x.data();
    T* hp = xhat.data();
    T* yp = y.data();
    const T* gp = state.gamma.data();
    const T* bp = state.beta.data();
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const T mu = mean.data()[ch];
        const T is = inv_std.data()[ch];
        const T ga = gp[ch], be = bp[ch];
        const std::int64_t base = (std::int64_t(i) * c + ch) * hw;
        for (std::int64_t j = 0; j < hw; ++j) {
          const T xh = (xp[base + j] - mu) * is;
          hp[base + j] = xh;
          yp[base + j] = ga * xh + be;
        }
      }
    }
  }

  const bool want = tape && (x.requires_grad() || state.gamma.requires_grad() ||
                             state.beta.requires_grad());
  if (want) {
    y.set_requires_grad(true);
    TensorT<T> gamma = state.gamma;
    TensorT<T> beta = state.beta;
    const bool train = (mode == Mode::Train);
    tape->record([x = x, y, xhat, inv_std, gamma, beta, train, n, c, hw]() mutable {
      if (!y.has_grad()) return;
      const T* gy = y.grad();
      const T* hp = xhat.data();
      const std::int64_t m2 = std::int64_t(n) * hw;
      // Per-channel reductions used by every branch.
      std::vector<double> sum_gy(std::size_t(c), 0.0);
      std::vector<double> sum_gy_xhat(std::size_t(c), 0.0);
      for (int i = 0; i < n; ++i) {
        for (int ch = 0; ch < c; ++ch) {
          const std::int64_t base = (std::int64_t(i) * c + ch) * hw;
          double a = 0.0, b = 0.0;
          for (std::int64_t j = 0; j < hw; ++j) {
            a += double(gy[base + j]);
            b += double(gy[base + j]) * double(hp[base + j]);
          }
          sum_gy[std::size_t(ch)] += a;
          sum_gy_xhat[std::size_t(ch)] += b;
        }
      }
      if (beta.requires_grad()) {
        T* gb = beta.ensure_grad();
        for (int ch = 0; ch < c; ++ch) gb[ch] += T(sum_gy[std::size_t(ch)]);
      }
      if (gamma.requires_grad()) {
        T* gg = gamma.ensure_grad();
        for (int ch = 0; ch < c; ++ch)
          gg[ch] += T(sum_gy_xhat[std::size_t(ch)]);
      }
      if (x.requires_grad()) {
        T* gx = x.ensure_grad();
        for (int i = 0; i < n; ++i) {
          for (int ch = 0; ch < c; ++ch) {
            const T gis = gamma.data()[ch] * inv_std.data()[ch];
            const std::int64_t base = (std::int64_t(i) * c + ch) * hw;
            if (train) {
              // Batch statistics depend on x, so the gradient carries the
              // mean and variance terms.
              const T mean_gy = T(sum_gy[std::size_t(ch)] / double(m2));
              const T mean_gyx = T(sum_gy_xhat[std::size_t(ch)] / double(m2));
              for (std::int64_t j = 0; j < hw; ++j) {
                gx[base + j] += gis * (gy[base + j] - mean_gy -
                                       hp[base + j] * mean_gyx);
              }
            } else {
              // Running statistics are constants in eval mode.
              for (std::int64_t j = 0; j < hw; ++j) {
                gx[base + j] += gis * gy[base + j];
              }
            }
          }
        }
      }
    });
  }
  return y;
}

template struct BatchNormState<float>;
template struct BatchNormState<double>;
template TensorT<float> batch_norm2d(const TensorT<float>&,
                                     BatchNormState<float>&, Mode,
                                     Tape<float>*);
template TensorT<double> batch_norm2d(const TensorT<double>&,
                                      BatchNormState<double>&, Mode,
                                      Tape<double>*);

}  // namespace pdt
