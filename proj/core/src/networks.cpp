#include "pdt/networks.hpp"

#include <cmath>
#include <stdexcept>

namespace pdt {
namespace {

constexpr int kImageSide = 64;
constexpr int kImageChannels = 3;
constexpr int kPairChannels = 2 * kImageChannels;
constexpr int kBaseCode = 64;
constexpr int kSeedSide = 4;  // spatial size the decoder expands from

std::vector<LayerSpec> downsampling_trunk(int in_ch, double width) {
  // Four stride-2 5x5 stages: 64 -> 32 -> 16 -> 8 -> 4. The first stage
  // has no batch norm.
  std::vector<LayerSpec> specs;
  const int c1 = scaled_channels(128, width);
  const int c2 = scaled_channels(256, width);
  const int c3 = scaled_channels(512, width);
  const int c4 = scaled_channels(1024, width);
  specs.push_back({"conv1", false, in_ch, c1, 5, 2, 2, 0, false,
                   Act::LeakyRelu});
  specs.push_back({"conv2", false, c1, c2, 5, 2, 2, 0, true, Act::LeakyRelu});
  specs.push_back({"conv3", false, c2, c3, 5, 2, 2, 0, true, Act::LeakyRelu});
  specs.push_back({"conv4", false, c3, c4, 5, 2, 2, 0, true, Act::LeakyRelu});
  return specs;
}

}  // namespace

const char* network_name(NetworkKind kind) {
  switch (kind) {
    case NetworkKind::Encoder:
      return "encoder";
    case NetworkKind::Decoder:
      return "decoder";
    case NetworkKind::DiscRealFake:
      return "disc_rf";
    case NetworkKind::DiscDomain:
      return "disc_da";
  }
  throw std::invalid_argument("network_name: unknown kind");
}

int scaled_channels(int base, double width) {
  if (width <= 0.0) {
    throw std::invalid_argument("scaled_channels: width must be positive");
  }
  const long scaled = std::lround(double(base) * width);
  return scaled < 1 ? 1 : static_cast<int>(scaled);
}

int code_channels(double width) { return scaled_channels(kBaseCode, width); }

std::vector<LayerSpec> layer_specs(NetworkKind kind, double width) {
  const int code = code_channels(width);
  const int c1 = scaled_channels(128, width);
  const int c2 = scaled_channels(256, width);
  const int c3 = scaled_channels(512, width);
  const int c4 = scaled_channels(1024, width);
  switch (kind) {
    case NetworkKind::Encoder: {
      auto specs = downsampling_trunk(kImageChannels, width);
      // Full-support 4x4 collapse of the remaining map into the code.
      specs.push_back({"conv5", false, c4, code, kSeedSide, 1, 0, 0, true,
                       Act::LeakyRelu});
      return specs;
    }
    case NetworkKind::Decoder: {
      std::vector<LayerSpec> specs;
      // 1x1 expansion to a 4x4 seed map (reshaped after activation).
      specs.push_back({"conv1", false, code, kSeedSide * kSeedSide * c4, 1, 1,
                       0, 0, true, Act::Relu});
      specs.push_back({"fconv2", true, c4, c3, 5, 2, 2, 1, true, Act::Relu});
      specs.push_back({"fconv3", true, c3, c2, 5, 2, 2, 1, true, Act::Relu});
      specs.push_back({"fconv4", true, c2, c1, 5, 2, 2, 1, true, Act::Relu});
      specs.push_back({"fconv5", true, c1, kImageChannels, 5, 2, 2, 1, false,
                       Act::Tanh});
      return specs;
    }
    case NetworkKind::DiscRealFake:
    case NetworkKind::DiscDomain: {
      const int in_ch = kind == NetworkKind::DiscDomain ? kPairChannels
                                                        : kImageChannels;
      auto specs = downsampling_trunk(in_ch, width);
      specs.push_back({"conv5", false, c4, 1, kSeedSide, 1, 0, 0, false,
                       Act::Sigmoid});
      return specs;
    }
  }
  throw std::invalid_argument("layer_specs: unknown kind");
}

template <class T>
Network<T>::Network(NetworkKind kind, double width)
    : kind_(kind), width_(width) {
  for (const LayerSpec& spec : layer_specs(kind, width)) {
    Layer<T> layer;
    layer.spec = spec;
    if (spec.transposed) {
      layer.weight =
          TensorT<T>::zeros({spec.in_ch, spec.out_ch, spec.kernel, spec.kernel});
    } else {
      layer.weight =
          TensorT<T>::zeros({spec.out_ch, spec.in_ch, spec.kernel, spec.kernel});
    }
    layer.weight.set_requires_grad(true);
    if (spec.has_bn) {
      layer.bn = BatchNormState<T>::make(spec.out_ch);
      layer.bn->gamma.set_requires_grad(true);
      layer.bn->beta.set_requires_grad(true);
    } else {
      layer.bias = TensorT<T>::zeros({spec.out_ch});
      layer.bias.set_requires_grad(true);
    }
    layers_.push_back(std::move(layer));
  }
}

template <class T>
void Network<T>::init_parameters(Rng& rng, T stddev) {
  for (Layer<T>& layer : layers_) {
    T* w = layer.weight.data();
    const std::int64_t n = layer.weight.numel();
    for (std::int64_t i = 0; i < n; ++i) {
      w[i] = stddev * T(rng.next_gaussian());
    }
    if (layer.bias.defined()) {
      T* b = layer.bias.data();
      for (int i = 0; i < layer.spec.out_ch; ++i) b[i] = T(0);
    }
    if (layer.bn) {
      *layer.bn = BatchNormState<T>::make(layer.spec.out_ch);
      layer.bn->gamma.set_requires_grad(true);
      layer.bn->beta.set_requires_grad(true);
    }
  }
}

template <class T>
TensorT<T> Network<T>::forward(const TensorT<T>& x, Mode mode, Tape<T>* tape,
                               std::vector<Shape>* shape_trace) {
  if (x.rank() != 4 || x.dim(1) != layers_.front().spec.in_ch) {
    throw std::invalid_argument(
        std::string("Network::forward: ") + network_name(kind_) +
        " expects [N," + std::to_string(layers_.front().spec.in_ch) +
        ",...] input, got " + shape_str(x.shape()));
  }
  if (kind_ == NetworkKind::Decoder) {
    if (x.dim(2) != 1 || x.dim(3) != 1) {
      throw std::invalid_argument(
          "Network::forward: decoder expects a [N,code,1,1] input, got " +
          shape_str(x.shape()));
    }
  } else if (x.dim(2) != kImageSide || x.dim(3) != kImageSide) {
    throw std::invalid_argument(
        std::string("Network::forward: ") + network_name(kind_) +
        " expects " + std::to_string(kImageSide) + "x" +
        std::to_string(kImageSide) + " input, got " + shape_str(x.shape()));
  }

  TensorT<T> h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer<T>& layer = layers_[i];
    const LayerSpec& s = layer.spec;
    if (s.transposed) {
      h = conv2d_transposed(h, layer.weight, s.stride, s.pad, s.out_pad, tape);
    } else {
      h = conv2d(h, layer.weight, s.stride, s.pad, tape);
    }
    if (layer.bias.defined()) {
      h = add_channel_bias(h, layer.bias, tape);
    }
    if (layer.bn) {
      h = batch_norm2d(h, *layer.bn, mode, tape);
    }
    h = activation(h, s.act, T(0.2), tape);
    if (kind_ == NetworkKind::Decoder && i == 0) {
      // Unfold the expanded channels into the 4x4 seed map. A pure view:
      // gradients flow through shared storage without a tape node.
      const int hidden = layers_[1].spec.in_ch;
      h = h.reshaped({h.dim(0), hidden, kSeedSide, kSeedSide});
    }
    if (shape_trace) shape_trace->push_back(h.shape());
  }
  return h;
}

template <class T>
std::vector<std::pair<std::string, TensorT<T>>>
Network<T>::learnable_parameters() {
  std::vector<std::pair<std::string, TensorT<T>>> out;
  const std::string net = network_name(kind_);
  for (Layer<T>& layer : layers_) {
    const std::string base = net + "." + layer.spec.name;
    out.emplace_back(base + ".weight", layer.weight);
    if (layer.bias.defined()) out.emplace_back(base + ".bias", layer.bias);
    if (layer.bn) {
      out.emplace_back(base + ".bn_gamma", layer.bn->gamma);
      out.emplace_back(base + ".bn_beta", layer.bn->beta);
    }
  }
  return out;
}

template <class T>
std::vector<std::pair<std::string, TensorT<T>>> Network<T>::named_tensors() {
  auto out = learnable_parameters();
  const std::string net = network_name(kind_);
  for (Layer<T>& layer : layers_) {
    if (!layer.bn) continue;
    const std::string base = net + "." + layer.spec.name;
    out.emplace_back(base + ".bn_running_mean", layer.bn->running_mean);
    out.emplace_back(base + ".bn_running_var", layer.bn->running_var);
  }
  return out;
}

template <class T>
std::int64_t Network<T>::parameter_count() {
  std::int64_t n = 0;
  for (auto& [name, t] : learnable_parameters()) {
    (void)name;
    n += t.numel();
  }
  return n;
}

template <class T>
void Network<T>::set_requires_grad(bool value) {
  for (auto& [name, t] : learnable_parameters()) {
    (void)name;
    t.set_requires_grad(value);
  }
}

template <class T>
long long Network<T>::batches_seen() const {
  for (const Layer<T>& layer : layers_) {
    if (layer.bn) return layer.bn->batches_seen;
  }
  return 0;
}

template <class T>
void Network<T>::set_batches_seen(long long n) {
  for (Layer<T>& layer : layers_) {
    if (layer.bn) layer.bn->batches_seen = n;
  }
}

template <class T>
Network<T> make_network(NetworkKind kind, double width,
                        std::uint64_t master_seed) {
  Network<T> net(kind, width);
  Rng rng = Rng::stream(master_seed,
                        std::string("init/") + network_name(kind));
  net.init_parameters(rng);
  return net;
}

template <class T>
Converter<T> make_converter(double width, std::uint64_t master_seed) {
  Converter<T> c;
  c.encoder = make_network<T>(NetworkKind::Encoder, width, master_seed);
  c.decoder = make_network<T>(NetworkKind::Decoder, width, master_seed);
  return c;
}

namespace {

template <class T>
void expect_kind(const Network<T>& net, NetworkKind kind, const char* fn) {
  if (net.kind() != kind) {
    throw std::invalid_argument(std::string(fn) + ": network is a " +
                                network_name(net.kind()) + ", expected " +
                                network_name(kind));
  }
}

}  // namespace

template <class T>
TensorT<T> encode(Network<T>& encoder, const TensorT<T>& images, Mode mode,
                  Tape<T>* tape) {
  expect_kind(encoder, NetworkKind::Encoder, "encode");
  return encoder.forward(images, mode, tape);
}

template <class T>
TensorT<T> decode(Network<T>& decoder, const TensorT<T>& codes, Mode mode,
                  Tape<T>* tape) {
  expect_kind(decoder, NetworkKind::Decoder, "decode");
  return decoder.forward(codes, mode, tape);
}

template <class T>
TensorT<T> convert(Converter<T>& converter, const TensorT<T>& images,
                   Mode mode, Tape<T>* tape) {
  return decode(converter.decoder, encode(converter.encoder, images, mode, tape),
                mode, tape);
}

template <class T>
TensorT<T> discriminate_real_fake(Network<T>& disc, const TensorT<T>& images,
                                  Mode mode, Tape<T>* tape) {
  expect_kind(disc, NetworkKind::DiscRealFake, "discriminate_real_fake");
  TensorT<T> out = disc.forward(images, mode, tape);
  return out.reshaped({out.dim(0)});
}

template <class T>
TensorT<T> discriminate_domain(Network<T>& disc, const TensorT<T>& sources,
                               const TensorT<T>& targets, Mode mode,
                               Tape<T>* tape) {
  expect_kind(disc, NetworkKind::DiscDomain, "discriminate_domain");
  TensorT<T> stacked = concat_channels(sources, targets, tape);
  TensorT<T> out = disc.forward(stacked, mode, tape);
  return out.reshaped({out.dim(0)});
}

#define PDT_INSTANTIATE_NETWORKS(T)                                           \
  template struct Layer<T>;                                                   \
  template class Network<T>;                                                  \
  template struct Converter<T>;                                               \
  template Network<T> make_network(NetworkKind, double, std::uint64_t);       \
  template Converter<T> make_converter(double, std::uint64_t);                \
  template TensorT<T> encode(Network<T>&, const TensorT<T>&, Mode, Tape<T>*); \
  template TensorT<T> decode(Network<T>&, const TensorT<T>&, Mode, Tape<T>*); \
  template TensorT<T> convert(Converter<T>&, const TensorT<T>&, Mode,         \
                              Tape<T>*);                                      \
  template TensorT<T> discriminate_real_fake(Network<T>&, const TensorT<T>&,  \
                                             Mode, Tape<T>*);                 \
  template TensorT<T> discriminate_domain(Network<T>&, const TensorT<T>&,     \
                                          const TensorT<T>&, Mode, Tape<T>*);

PDT_INSTANTIATE_NETWORKS(float)
PDT_INSTANTIATE_NETWORKS(double)
#undef PDT_INSTANTIATE_NETWORKS

}  // namespace pdt
