#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pdt/batch_norm.hpp"
#include "pdt/common.hpp"
#include "pdt/ops.hpp"
#include "pdt/rng.hpp"
#include "pdt/tape.hpp"
#include "pdt/tensor.hpp"

namespace pdt {

// The model family: an image encoder and decoder forming the converter that
// maps a worn-product photo to a clean catalog-style product image, a
// real/fake discriminator over single images, and an association
// discriminator over channel-stacked (source, target) pairs that judges
// whether the pair shows the same product.
enum class NetworkKind { Encoder, Decoder, DiscRealFake, DiscDomain };

// Stable lowercase identifier: "encoder", "decoder", "disc_rf", "disc_da".
const char* network_name(NetworkKind kind);

// Scales a hidden channel count by the width multiplier (nearest integer,
// at least 1). Fixed interface channels (RGB in/out, discriminator score)
// never scale.
int scaled_channels(int base, double width);

// Channels of the encoder's latent code at a given width (64 at width 1).
int code_channels(double width);

struct LayerSpec {
  std::string name;
  bool transposed = false;  // false: conv, true: transposed conv
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  int out_pad = 0;
  bool has_bn = false;  // layers carry a bias exactly when they have no BN
  Act act = Act::Relu;
};

// The layer stack of each network at a given width multiplier.
//
// Encoder (input [N,3,64,64] -> code [N,64w,1,1]): four 5x5/stride-2/pad-2
// convolutions with 128w..1024w filters (leaky ReLU 0.2, batch norm from the
// second on), then a full-support 4x4 convolution collapsing the 4x4 map to
// a 1x1 code with batch norm and leaky ReLU.
//
// Decoder (code [N,64w,1,1] -> image [N,3,64,64]): a 1x1 convolution to
// 4*4*1024w channels (batch norm, ReLU) reshaped to [1024w,4,4], then four
// 5x5/stride-2/pad-2/output-pad-1 transposed convolutions halving the
// filter count down to the RGB output, batch norm and ReLU on all but the
// final layer, which uses tanh and no batch norm.
//
// Discriminators (input [N,3,64,64] or, for the association variant,
// channel-stacked pairs [N,6,64,64] -> probability [N,1,1,1]): same trunk
// as the encoder but the final 4x4 convolution emits one channel through a
// sigmoid, without batch norm.
std::vector<LayerSpec> layer_specs(NetworkKind kind, double width);

template <class T>
struct Layer {
  LayerSpec spec;
  TensorT<T> weight;                    // conv: [out,in,k,k]; tconv: [in,out,k,k]
  TensorT<T> bias;                      // defined iff !spec.has_bn
  std::optional<BatchNormState<T>> bn;  // engaged iff spec.has_bn
};

template <class T>
class Network {
 public:
  Network() = default;
  // Builds the layer stack with zeroed weights; call init_parameters (or
  // load a checkpoint) before use.
  Network(NetworkKind kind, double width);

  NetworkKind kind() const { return kind_; }
  double width() const { return width_; }
  std::vector<Layer<T>>& layers() { return layers_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }

  // Weights from N(0, stddev^2) drawn in layer order from `rng`, biases
  // zero, batch-norm scale 1 / shift 0, running statistics reset.
  void init_parameters(Rng& rng, T stddev = T(0.02));

  // Runs the stack. Train mode uses batch statistics in normalization
  // layers and updates their running estimates; pass a tape to record for
  // backward. If `shape_trace` is given, the activation shape after every
  // layer is appended to it.
  TensorT<T> forward(const TensorT<T>& x, Mode mode,
                     Tape<T>* tape = nullptr,
                     std::vector<Shape>* shape_trace = nullptr);

  // Learnable tensors (weights, biases, batch-norm scale/shift) in layer
  // order, named "<network>.<layer>.<role>".
  std::vector<std::pair<std::string, TensorT<T>>> learnable_parameters();
  // Learnables plus batch-norm running statistics: everything a checkpoint
  // must persist to reproduce this network's behavior.
  std::vector<std::pair<std::string, TensorT<T>>> named_tensors();

  std::int64_t parameter_count();

  void set_requires_grad(bool value);

  // Train-mode batches folded into running statistics (see BatchNormState).
  long long batches_seen() const;
  void set_batches_seen(long long n);

 private:
  NetworkKind kind_ = NetworkKind::Encoder;
  double width_ = 1.0;
  std::vector<Layer<T>> layers_;
};

// Encoder + decoder pair: the image-to-image converter.
template <class T>
struct Converter {
  Network<T> encoder;
  Network<T> decoder;
};

// Builds a network with freshly initialized parameters, drawing from the
// "init/<network_name>" substream of `master_seed`.
template <class T>
Network<T> make_network(NetworkKind kind, double width,
                        std::uint64_t master_seed);

template <class T>
Converter<T> make_converter(double width, std::uint64_t master_seed);

// [N,3,64,64] image batch -> [N,code,1,1] latent codes.
template <class T>
TensorT<T> encode(Network<T>& encoder, const TensorT<T>& images, Mode mode,
                  Tape<T>* tape = nullptr);

// [N,code,1,1] latent codes -> [N,3,64,64] images in (-1,1).
template <class T>
TensorT<T> decode(Network<T>& decoder, const TensorT<T>& codes, Mode mode,
                  Tape<T>* tape = nullptr);

// Full source-to-target translation: decode(encode(images)).
template <class T>
TensorT<T> convert(Converter<T>& converter, const TensorT<T>& images,
                   Mode mode, Tape<T>* tape = nullptr);

// [N,3,64,64] -> per-item probability [N] that the image is a real photo
// (of the target domain) rather than a generated one.
template <class T>
TensorT<T> discriminate_real_fake(Network<T>& disc, const TensorT<T>& images,
                                  Mode mode, Tape<T>* tape = nullptr);

// ([N,3,64,64] source, [N,3,64,64] target) -> per-item probability [N] that
// the target is the true counterpart of the source. The pair is stacked on
// the channel axis before entering the network.
template <class T>
TensorT<T> discriminate_domain(Network<T>& disc, const TensorT<T>& sources,
                               const TensorT<T>& targets, Mode mode,
                               Tape<T>* tape = nullptr);

#define PDT_EXTERN_NETWORKS(T)                                                \
  extern template struct Layer<T>;                                            \
  extern template class Network<T>;                                           \
  extern template struct Converter<T>;                                        \
  extern template Network<T> make_network(NetworkKind, double, std::uint64_t);\
  extern template Converter<T> make_converter(double, std::uint64_t);         \
  extern template TensorT<T> encode(Network<T>&, const TensorT<T>&, Mode,     \
                                    Tape<T>*);                                \
  extern template TensorT<T> decode(Network<T>&, const TensorT<T>&, Mode,     \
                                    Tape<T>*);                                \
  extern template TensorT<T> convert(Converter<T>&, const TensorT<T>&, Mode,  \
                                     Tape<T>*);                               \
  extern template TensorT<T> discriminate_real_fake(Network<T>&,              \
                                                    const TensorT<T>&, Mode,  \
                                                    Tape<T>*);                \
  extern template TensorT<T> discriminate_domain(                             \
      Network<T>&, const TensorT<T>&, const TensorT<T>&, Mode, Tape<T>*);

PDT_EXTERN_NETWORKS(float)
PDT_EXTERN_NETWORKS(double)
#undef PDT_EXTERN_NETWORKS

}  // namespace pdt
