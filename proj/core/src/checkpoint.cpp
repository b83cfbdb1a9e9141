#include "pdt/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace pdt {

namespace {

// --- little-endian encoding --------------------------------------------------

void put_u16(std::string* out, std::uint16_t v) {
  out->push_back(char(v & 0xff));
  out->push_back(char(v >> 8));
}

void put_u32(std::string* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out->push_back(char((v >> (8 * i)) & 0xff));
}

void put_f32(std::string* out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(std::string bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::uint16_t u16() { return std::uint16_t(byte() | byte() << 8); }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(byte()) << (8 * i);
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void f32_block(float* dst, std::size_t count) {
    need(count * 4);
    static_assert(std::numeric_limits<float>::is_iec559);
    // The stored byte order is the host's on every supported target.
    std::memcpy(dst, bytes_.data() + pos_, count * 4);
    pos_ += count * 4;
  }
  bool at_end() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& why) const {
    throw std::runtime_error(path_ + ": " + why);
  }

 private:
  unsigned char byte() {
    need(1);
    return static_cast<unsigned char>(bytes_[pos_++]);
  }
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) fail("truncated archive");
  }

  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

// --- numeric round-trip formatting -------------------------------------------

std::string fmt_f32(float v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", double(v));
  return buf;
}

std::string fmt_f64(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// --- metadata assembly / lookup ----------------------------------------------

class MetadataView {
 public:
  MetadataView(const std::string& text, std::string path)
      : path_(std::move(path)) {
    for (auto& [k, v] : parse_metadata(text)) map_.emplace(k, v);
  }

  const std::string& get(const std::string& key) const {
    auto it = map_.find(key);
    if (it == map_.end())
      throw std::runtime_error(path_ + ": metadata is missing '" + key + "'");
    return it->second;
  }
  std::int64_t get_int(const std::string& key) const {
    return std::strtoll(get(key).c_str(), nullptr, 10);
  }
  std::uint64_t get_u64(const std::string& key) const {
    return std::strtoull(get(key).c_str(), nullptr, 10);
  }
  float get_f32(const std::string& key) const {
    return std::strtof(get(key).c_str(), nullptr);
  }
  double get_f64(const std::string& key) const {
    return std::strtod(get(key).c_str(), nullptr);
  }

 private:
  std::map<std::string, std::string> map_;
  std::string path_;
};

void append_line(std::string* meta, const std::string& key,
                 const std::string& value) {
  *meta += key + "\t" + value + "\n";
}

// Tensor blobs in their save order: the four networks, then per-optimizer
// auxiliary buffers as flat rank-1 records.
std::vector<Network<float>*> networks_of(TrainingState& st) {
  return {&st.converter.encoder, &st.converter.decoder, &st.disc_rf,
          &st.disc_da};
}

std::vector<Optimizer<float>*> optimizers_of(TrainingState& st) {
  return {st.opt_conv.get(), st.opt_rf.get(), st.opt_da.get()};
}

const char* const kOptimizerLabels[3] = {"opt_conv", "opt_rf", "opt_da"};

}  // namespace

void write_checkpoint_file(const std::string& path,
                           const CheckpointData& data) {
  std::string out;
  out += kCheckpointMagic;
  put_u32(&out, kCheckpointVersion);
  if (data.tensors.size() > std::numeric_limits<std::uint32_t>::max())
    throw std::invalid_argument("checkpoint: too many records");
  put_u32(&out, std::uint32_t(data.tensors.size()));
  for (const auto& [name, tensor] : data.tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max())
      throw std::invalid_argument("checkpoint: record name too long: " + name);
    if (tensor.shape().size() > 255)
      throw std::invalid_argument("checkpoint: record rank too high: " + name);
    put_u16(&out, std::uint16_t(name.size()));
    out += name;
    out.push_back(char(tensor.shape().size()));
    for (int d : tensor.shape()) {
      if (d < 0) throw std::invalid_argument("checkpoint: negative dimension");
      put_u32(&out, std::uint32_t(d));
    }
    const float* v = tensor.data();
    const std::int64_t n = tensor.numel();
    const std::size_t start = out.size();
    out.resize(start + std::size_t(n) * 4);
    static_assert(std::numeric_limits<float>::is_iec559);
    std::memcpy(out.data() + start, v, std::size_t(n) * 4);
  }
  if (data.metadata.size() > std::numeric_limits<std::uint32_t>::max())
    throw std::invalid_argument("checkpoint: metadata too long");
  put_u32(&out, std::uint32_t(data.metadata.size()));
  out += data.metadata;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error(path + ": cannot open for writing");
  f.write(out.data(), std::streamsize(out.size()));
  f.flush();
  if (!f) throw std::runtime_error(path + ": write failed");
}

CheckpointData read_checkpoint_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(path + ": cannot open");
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path);

  if (r.str(4) != kCheckpointMagic) r.fail("not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    r.fail("unsupported format version " + std::to_string(version));

  CheckpointData data;
  const std::uint32_t count = r.u32();
  data.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u16());
    const int rank = int(r.str(1)[0]);
    Shape shape(static_cast<std::size_t>(rank));
    for (int d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32();
      if (dim > std::uint32_t(std::numeric_limits<int>::max()))
        r.fail("dimension overflow in record '" + name + "'");
      shape[std::size_t(d)] = int(dim);
    }
    Tensor t{Shape(shape)};
    r.f32_block(t.data(), std::size_t(t.numel()));
    data.tensors.emplace_back(name, std::move(t));
  }
  data.metadata = r.str(r.u32());
  if (!r.at_end()) r.fail("trailing bytes after metadata");
  return data;
}

std::vector<std::pair<std::string, std::string>> parse_metadata(
    const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("metadata line has no separator: " + line);
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

void save_training_state(const std::string& path, TrainingState& st) {
  CheckpointData data;
  for (Network<float>* net : networks_of(st))
    for (auto& [name, tensor] : net->named_tensors())
      data.tensors.emplace_back(name, tensor);
  {
    auto opts = optimizers_of(st);
    for (std::size_t i = 0; i < opts.size(); ++i) {
      for (auto& [name, buffer] : opts[i]->state_buffers()) {
        Tensor t({int(buffer->size())});
        std::memcpy(t.data(), buffer->data(), buffer->size() * 4);
        data.tensors.emplace_back(name, std::move(t));
      }
    }
  }

  std::string& meta = data.metadata;
  const TrainingConfig& c = st.config;
  append_line(&meta, "config.mode", training_mode_name(c.mode));
  append_line(&meta, "config.batch_size", std::to_string(c.batch_size));
  append_line(&meta, "config.lr", fmt_f32(c.lr));
  append_line(&meta, "config.lr_drop_epoch", std::to_string(c.lr_drop_epoch));
  append_line(&meta, "config.lr_after_drop", fmt_f32(c.lr_after_drop));
  append_line(&meta, "config.total_epochs", std::to_string(c.total_epochs));
  append_line(&meta, "config.momentum", fmt_f32(c.momentum));
  append_line(&meta, "config.seed", std::to_string(c.seed));
  append_line(&meta, "config.width", fmt_f64(c.width));
  append_line(&meta, "config.use_adam", c.use_adam ? "1" : "0");
  append_line(&meta, "config.non_saturating", c.non_saturating ? "1" : "0");
  append_line(&meta, "epochs_done", std::to_string(st.epochs_done));
  append_line(&meta, "rng.algorithm", kRngAlgorithmId);
  const std::pair<const char*, const Rng*> streams[] = {
      {"select", &st.select_rng},
      {"negative", &st.negative_rng},
      {"shuffle", &st.shuffle_rng}};
  for (const auto& [label, rng] : streams) {
    append_line(&meta, std::string("rng.") + label + ".seed",
                std::to_string(rng->seed()));
    append_line(&meta, std::string("rng.") + label + ".counter",
                std::to_string(rng->counter()));
  }
  {
    auto nets = networks_of(st);
    const char* const names[] = {"encoder", "decoder", "disc_rf", "disc_da"};
    for (std::size_t i = 0; i < nets.size(); ++i)
      append_line(&meta, std::string(names[i]) + ".batches_seen",
                  std::to_string(nets[i]->batches_seen()));
  }
  {
    auto opts = optimizers_of(st);
    for (std::size_t i = 0; i < opts.size(); ++i)
      for (const auto& [key, value] : opts[i]->scalar_state())
        append_line(&meta, std::string(kOptimizerLabels[i]) + "." + key,
                    std::to_string(std::int64_t(value)));
  }

  write_checkpoint_file(path, data);
}

TrainingState load_training_state(const std::string& path) {
  CheckpointData data = read_checkpoint_file(path);
  MetadataView meta(data.metadata, path);

  if (meta.get("rng.algorithm") != kRngAlgorithmId)
    throw std::runtime_error(path + ": archive uses PRNG '" +
                             meta.get("rng.algorithm") + "', this build has '" +
                             kRngAlgorithmId + "'");

  TrainingConfig config;
  config.mode = parse_training_mode(meta.get("config.mode"));
  config.batch_size = int(meta.get_int("config.batch_size"));
  config.lr = meta.get_f32("config.lr");
  config.lr_drop_epoch = int(meta.get_int("config.lr_drop_epoch"));
  config.lr_after_drop = meta.get_f32("config.lr_after_drop");
  config.total_epochs = int(meta.get_int("config.total_epochs"));
  config.momentum = meta.get_f32("config.momentum");
  config.seed = meta.get_u64("config.seed");
  config.width = meta.get_f64("config.width");
  config.use_adam = meta.get("config.use_adam") == "1";
  config.non_saturating = meta.get("config.non_saturating") == "1";

  TrainingState st = make_training_state(config);
  st.epochs_done = int(meta.get_int("epochs_done"));

  std::map<std::string, const Tensor*> records;
  for (const auto& [name, tensor] : data.tensors)
    if (!records.emplace(name, &tensor).second)
      throw std::runtime_error(path + ": duplicate record '" + name + "'");

  auto take = [&records, &path](const std::string& name) {
    auto it = records.find(name);
    if (it == records.end())
      throw std::runtime_error(path + ": archive lacks tensor '" + name + "'");
    const Tensor* t = it->second;
    records.erase(it);
    return t;
  };

  for (Network<float>* net : networks_of(st)) {
    for (auto& [name, tensor] : net->named_tensors()) {
      const Tensor* rec = take(name);
      if (!same_shape(rec->shape(), tensor.shape()))
        throw std::runtime_error(path + ": tensor '" + name + "' has shape " +
                                 shape_str(rec->shape()) + ", expected " +
                                 shape_str(tensor.shape()));
      std::memcpy(tensor.data(), rec->data(),
                  std::size_t(tensor.numel()) * 4);
    }
  }
  {
    auto opts = optimizers_of(st);
    for (std::size_t i = 0; i < opts.size(); ++i) {
      for (auto& [name, buffer] : opts[i]->state_buffers()) {
        const Tensor* rec = take(name);
        if (rec->shape().size() != 1 ||
            rec->numel() != std::int64_t(buffer->size()))
          throw std::runtime_error(path + ": optimizer buffer '" + name +
                                   "' has " + std::to_string(rec->numel()) +
                                   " values, expected " +
                                   std::to_string(buffer->size()));
        std::memcpy(buffer->data(), rec->data(), buffer->size() * 4);
      }
      for (const auto& [key, unused] : opts[i]->scalar_state())
        opts[i]->set_scalar_state(
            key, double(meta.get_int(std::string(kOptimizerLabels[i]) + "." +
                                     key)));
    }
  }
  if (!records.empty())
    throw std::runtime_error(path + ": unexpected tensor '" +
                             records.begin()->first + "'");

  {
    auto nets = networks_of(st);
    const char* const names[] = {"encoder", "decoder", "disc_rf", "disc_da"};
    for (std::size_t i = 0; i < nets.size(); ++i)
      nets[i]->set_batches_seen(
          meta.get_int(std::string(names[i]) + ".batches_seen"));
  }
  st.select_rng = Rng(meta.get_u64("rng.select.seed"),
                      meta.get_u64("rng.select.counter"));
  st.negative_rng = Rng(meta.get_u64("rng.negative.seed"),
                        meta.get_u64("rng.negative.counter"));
  st.shuffle_rng = Rng(meta.get_u64("rng.shuffle.seed"),
                       meta.get_u64("rng.shuffle.counter"));
  return st;
}

}  // namespace pdt
