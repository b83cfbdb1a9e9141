#pragma once

// Direct triple-loop reference convolutions. These are the oracles the fast
// GEMM-backed implementations are tested against, so they are written
// straight from the defining sums with no shared machinery: keep them slow,
// obvious, and independent.

#include <vector>

#include "pdt/tensor.hpp"

namespace pdt::testing {

// y[n,co,oh,ow] = sum_{ci,kh,kw} x[n,ci,oh*s+kh-p,ow*s+kw-p] * w[co,ci,kh,kw]
// with out-of-bounds input reads treated as zero.
template <class T>
TensorT<T> conv2d_reference(const TensorT<T>& x, const TensorT<T>& w,
                            int stride, int pad) {
  const int n = x.dim(0), ci = x.dim(1), hi = x.dim(2), wi = x.dim(3);
  const int co = w.dim(0), k = w.dim(2);
  const int ho = (hi + 2 * pad - k) / stride + 1;
  const int wo = (wi + 2 * pad - k) / stride + 1;
  TensorT<T> y = TensorT<T>::zeros({n, co, ho, wo});
  for (int in = 0; in < n; ++in)
    for (int oc = 0; oc < co; ++oc)
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow) {
          double acc = 0.0;
          for (int ic = 0; ic < ci; ++ic)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int ih = oh * stride + kh - pad;
                const int iw = ow * stride + kw - pad;
                if (ih < 0 || ih >= hi || iw < 0 || iw >= wi) continue;
                acc += double(x.at(in, ic, ih, iw)) *
                       double(w.at(oc, ic, kh, kw));
              }
          y.at(in, oc, oh, ow) = T(acc);
        }
  return y;
}

// Scatter form of the transposed convolution: every input element x[n,a,h,w]
// adds x * w[a,b,kh,kw] into y[n,b,h*s+kh-p,w*s+kw-p].
template <class T>
TensorT<T> conv2d_transposed_reference(const TensorT<T>& x, const TensorT<T>& w,
                                       int stride, int pad, int out_pad) {
  const int n = x.dim(0), a = x.dim(1), hi = x.dim(2), wi = x.dim(3);
  const int b = w.dim(1), k = w.dim(2);
  const int ho = (hi - 1) * stride - 2 * pad + k + out_pad;
  const int wo = (wi - 1) * stride - 2 * pad + k + out_pad;
  TensorT<T> y = TensorT<T>::zeros({n, b, ho, wo});
  for (int in = 0; in < n; ++in)
    for (int ia = 0; ia < a; ++ia)
      for (int h = 0; h < hi; ++h)
        for (int v = 0; v < wi; ++v) {
          const double xv = double(x.at(in, ia, h, v));
          for (int ob = 0; ob < b; ++ob)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int oh = h * stride + kh - pad;
                const int ow = v * stride + kw - pad;
                if (oh < 0 || oh >= ho || ow < 0 || ow >= wo) continue;
                y.at(in, ob, oh, ow) +=
                    T(xv * double(w.at(ia, ob, kh, kw)));
              }
        }
  return y;
}

// Largest elementwise |a-b| / max(|a|, |b|, floor).
template <class T>
double max_rel_diff(const TensorT<T>& a, const TensorT<T>& b,
                    double floor = 1e-6) {
  double worst = 0.0;
  const T* ap = a.data();
  const T* bp = b.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double av = double(ap[i]), bv = double(bp[i]);
    const double denom =
        std::max({std::abs(av), std::abs(bv), floor});
    worst = std::max(worst, std::abs(av - bv) / denom);
  }
  return worst;
}

}  // namespace pdt::testing
