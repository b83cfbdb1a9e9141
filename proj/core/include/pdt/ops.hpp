#pragma once

#include <vector>

#include "pdt/tape.hpp"
#include "pdt/tensor.hpp"

namespace pdt {

// Differentiable operations. Every op takes an optional tape; passing null
// evaluates forward only. When a tape is given and at least one input
// requires a gradient, the op appends a backward node and marks its output
// as requiring a gradient, which chains recording through the graph.
// Gradients always accumulate (+=) into input grad buffers.
//
// Shape conventions: activations are NCHW. Convolution weights are
// [out_ch, in_ch, k, k]; transposed-convolution weights are
// [in_ch, out_ch, k, k]. All shape violations throw std::invalid_argument
// naming both offending shapes.

enum class Act { Relu, LeakyRelu, Sigmoid, Tanh };

// --- elementwise -----------------------------------------------------------

// a + b, identical shapes.
template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b, Tape<T>* tape = nullptr);

// factor * x.
template <class T>
TensorT<T> scale(const TensorT<T>& x, T factor, Tape<T>* tape = nullptr);

template <class T>
TensorT<T> relu(const TensorT<T>& x, Tape<T>* tape = nullptr);

// max(x, 0) + negative_slope * min(x, 0).
template <class T>
TensorT<T> leaky_relu(const TensorT<T>& x, T negative_slope, Tape<T>* tape = nullptr);

template <class T>
TensorT<T> sigmoid(const TensorT<T>& x, Tape<T>* tape = nullptr);

template <class T>
TensorT<T> tanh_act(const TensorT<T>& x, Tape<T>* tape = nullptr);

// Dispatch by kind; negative_slope is only read for Act::LeakyRelu.
template <class T>
TensorT<T> activation(const TensorT<T>& x, Act kind, T negative_slope,
                      Tape<T>* tape = nullptr);

// --- reductions and losses -------------------------------------------------

// Sum over all elements; returns a single-element tensor.
template <class T>
TensorT<T> sum_all(const TensorT<T>& x, Tape<T>* tape = nullptr);

// Mean over all elements; returns a single-element tensor.
template <class T>
TensorT<T> mean_all(const TensorT<T>& x, Tape<T>* tape = nullptr);

// True when every element is finite (no NaN or infinity).
template <class T>
bool all_finite(const TensorT<T>& x);

// Elementwise binary cross-entropy -t*log(p^) + (t-1)*log(1-p^) where p^ is
// p clamped to [1e-7, 1 - 1e-7]. `targets` is treated as a constant (no
// gradient flows to it). The gradient w.r.t. p is (p^-t)/(p^*(1-p^)) inside
// the clamp interval and 0 outside it (the true derivative of the clamped
// composition).
template <class T>
TensorT<T> binary_cross_entropy(const TensorT<T>& p, const TensorT<T>& targets,
                                Tape<T>* tape = nullptr);

// Mean over all elements of (pred - target)^2; returns a single-element
// tensor. Gradients flow to both arguments if they require them.
template <class T>
TensorT<T> mse_loss(const TensorT<T>& pred, const TensorT<T>& target,
                    Tape<T>* tape = nullptr);

// --- structure -------------------------------------------------------------

// Concatenates two NCHW batches along the channel axis.
template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b,
                           Tape<T>* tape = nullptr);

// Builds an N-item NCHW batch where item i is row i of `generated` when
// use_generated[i], and the constant item constants[i] (shape [C,H,W])
// otherwise. Gradients flow only into the selected rows of `generated`;
// constants are fixed inputs. Unselected constants may be undefined.
template <class T>
TensorT<T> compose_batch(const TensorT<T>& generated,
                         const std::vector<TensorT<T>>& constants,
                         const std::vector<bool>& use_generated, Tape<T>* tape = nullptr);

// --- convolution family ----------------------------------------------------

// 2-D cross-correlation, stride `stride`, symmetric zero padding `pad`.
// x: [N,Ci,H,W], w: [Co,Ci,k,k] -> [N,Co,H',W'] with
// H' = floor((H + 2*pad - k)/stride) + 1. Implemented as im2col + GEMM; the
// test suite checks it against a direct triple-loop reference.
template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, int stride,
                  int pad, Tape<T>* tape = nullptr);

// Transposed convolution (fractional-stride upsampling), the exact adjoint
// of conv2d with the same stride and padding: for all x, y and shared w,
// <conv2d(x,w), y> == <x, conv2d_transposed(y,w)>.
// x: [N,Ci,H,W], w: [Ci,Co,k,k] -> [N,Co,H'',W''] with
// H'' = (H-1)*stride - 2*pad + k + out_pad. Requires 0 <= out_pad < stride.
template <class T>
TensorT<T> conv2d_transposed(const TensorT<T>& x, const TensorT<T>& w,
                             int stride, int pad, int out_pad, Tape<T>* tape = nullptr);

// Adds bias[c] to every element of channel c. x: [N,C,H,W], bias: [C].
template <class T>
TensorT<T> add_channel_bias(const TensorT<T>& x, const TensorT<T>& bias,
                            Tape<T>* tape = nullptr);

// --- non-differentiable batch helpers (leaf assembly) -----------------------

// Stacks equal-shape [C,H,W] items into an [N,C,H,W] batch (plain copy).
template <class T>
TensorT<T> stack_items(const std::vector<TensorT<T>>& items);

// Copies row i of an [N,C,H,W] batch out as a [C,H,W] tensor.
template <class T>
TensorT<T> slice_item(const TensorT<T>& batch, int i);

}  // namespace pdt
