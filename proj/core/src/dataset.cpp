#include "pdt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pdt/common.hpp"

namespace fs = std::filesystem;

namespace pdt {

const char* split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + name +
                              "' (expected train, val or test)");
}

std::vector<int> PairedDataset::group_indices(Split which) const {
  std::vector<int> out;
  for (int i = 0; i < int(groups.size()); ++i) {
    if (split.empty()) {
      if (which == Split::Train) out.push_back(i);
      continue;
    }
    auto it = split.find(groups[std::size_t(i)].product_id);
    if (it != split.end() && it->second == which) out.push_back(i);
  }
  return out;
}

int PairedDataset::total_sources() const {
  int n = 0;
  for (const ProductGroup& g : groups) n += int(g.source_paths.size());
  return n;
}

Tensor preprocess_image(const Image& raw, int side) {
  if (raw.width <= 0 || raw.height <= 0 ||
      raw.rgb.size() != std::size_t(raw.width) * raw.height * 3)
    throw std::invalid_argument("preprocess_image: malformed input image");
  if (side <= 0)
    throw std::invalid_argument("preprocess_image: side must be positive");

  // Content box after the aspect-preserving resize.
  const bool wide = raw.width >= raw.height;
  const int out_w =
      wide ? side : std::max<int>(1, int(std::lround(double(raw.width) * side /
                                                     raw.height)));
  const int out_h =
      wide ? std::max<int>(1, int(std::lround(double(raw.height) * side /
                                              raw.width)))
           : side;
  const int off_x = (side - out_w) / 2;
  const int off_y = (side - out_h) / 2;

  Tensor t = Tensor::full({3, side, side}, 1.0f);  // white margins -> +1
  float* out = t.data();

  const double sx = double(raw.width) / out_w;
  const double sy = double(raw.height) / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    // Half-pixel-centered bilinear sampling, clamped at the borders.
    const double fy = std::max(0.0, (oy + 0.5) * sy - 0.5);
    const int y0 = std::min(int(fy), raw.height - 1);
    const int y1 = std::min(y0 + 1, raw.height - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      const double fx = std::max(0.0, (ox + 0.5) * sx - 0.5);
      const int x0 = std::min(int(fx), raw.width - 1);
      const int x1 = std::min(x0 + 1, raw.width - 1);
      const double wx = fx - x0;
      const unsigned char* p00 = raw.pixel(y0, x0);
      const unsigned char* p01 = raw.pixel(y0, x1);
      const unsigned char* p10 = raw.pixel(y1, x0);
      const unsigned char* p11 = raw.pixel(y1, x1);
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - wy) * ((1 - wx) * p00[c] + wx * p01[c]) +
                         wy * ((1 - wx) * p10[c] + wx * p11[c]);
        out[(std::size_t(c) * side + (off_y + oy)) * side + (off_x + ox)] =
            float(v / 127.5 - 1.0);
      }
    }
  }
  return t;
}

Tensor load_image_tensor(const std::string& path, int side) {
  return preprocess_image(read_png(path), side);
}

Image tensor_to_image(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3)
    throw std::invalid_argument("tensor_to_image: expected a [3,H,W] tensor, got " +
                                shape_str(t.shape()));
  const int h = t.dim(1);
  const int w = t.dim(2);
  Image img = make_image(w, h, 0, 0, 0);
  const float* v = t.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      unsigned char* px = img.pixel(y, x);
      for (int c = 0; c < 3; ++c) {
        const double u = (double(v[(std::size_t(c) * h + y) * w + x]) + 1.0) *
                         127.5;
        px[c] = (unsigned char)std::clamp(std::lround(u), 0L, 255L);
      }
    }
  }
  return img;
}

namespace {

PairedDataset load_from_manifest(const std::string& root,
                                 const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot read " + manifest.string());

  struct Pending {
    std::string target;
    std::vector<std::string> sources;
  };
  std::unordered_map<std::string, Pending> by_id;
  std::vector<std::string> order;

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, role, rel;
    if (!std::getline(fields, id, '\t') || !std::getline(fields, role, '\t') ||
        !std::getline(fields, rel))
      throw std::runtime_error(manifest.string() + ":" +
                               std::to_string(line_no) +
                               ": expected product_id<TAB>role<TAB>path");
    const std::string full = (fs::path(root) / rel).string();
    if (!fs::exists(full))
      throw std::runtime_error(manifest.string() + ":" +
                               std::to_string(line_no) +
                               ": missing file " + full);
    if (by_id.find(id) == by_id.end()) order.push_back(id);
    Pending& p = by_id[id];
    if (role == "product") {
      if (!p.target.empty())
        throw std::runtime_error(manifest.string() + ":" +
                                 std::to_string(line_no) +
                                 ": duplicate product image for " + id);
      p.target = full;
    } else if (role == "model") {
      p.sources.push_back(full);
    } else {
      throw std::runtime_error(manifest.string() + ":" +
                               std::to_string(line_no) + ": unknown role '" +
                               role + "'");
    }
  }

  PairedDataset ds;
  std::sort(order.begin(), order.end());
  for (const std::string& id : order) {
    Pending& p = by_id[id];
    if (p.sources.empty()) {
      warn("product " + id + " has no model images; excluded");
      continue;
    }
    if (p.target.empty())
      throw std::runtime_error("product " + id +
                               " has model images but no product image");
    ds.groups.push_back({id, std::move(p.target), std::move(p.sources)});
  }
  return ds;
}

}  // namespace

PairedDataset load_lookbook(const std::string& root) {
  if (!fs::is_directory(root))
    throw std::runtime_error("dataset root is not a directory: " + root);

  const fs::path manifest = fs::path(root) / "manifest.tsv";
  if (fs::exists(manifest)) return load_from_manifest(root, manifest);

  std::vector<std::string> dirs;
  for (const fs::directory_entry& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path().filename().string());
  std::sort(dirs.begin(), dirs.end());

  PairedDataset ds;
  for (const std::string& id : dirs) {
    const fs::path dir = fs::path(root) / id;
    const fs::path target = dir / "product.png";
    std::vector<std::string> sources;
    for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (e.is_regular_file() && name.rfind("model_", 0) == 0 &&
          name.size() > 4 && name.substr(name.size() - 4) == ".png")
        sources.push_back(e.path().string());
    }
    std::sort(sources.begin(), sources.end());
    if (sources.empty()) {
      if (fs::exists(target))
        warn("product " + id + " has no model images; excluded");
      continue;  // directories with neither role are not product entries
    }
    if (!fs::exists(target))
      throw std::runtime_error("product " + id +
                               " has model images but no product image");
    ds.groups.push_back({id, target.string(), std::move(sources)});
  }
  return ds;
}

PairedDataset split_dataset(const PairedDataset& ds, double val_frac,
                            double test_frac, std::uint64_t seed) {
  if (val_frac < 0 || test_frac < 0 || val_frac + test_frac >= 1.0)
    throw std::invalid_argument(
        "split fractions must be nonnegative and sum below 1");
  const int n = int(ds.groups.size());
  if (n < 3)
    throw std::invalid_argument("splitting needs at least 3 products, got " +
                                std::to_string(n));

  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[std::size_t(i)] = i;
  Rng rng = Rng::stream(seed, "data/split");
  for (int i = n - 1; i > 0; --i)
    std::swap(idx[std::size_t(i)],
              idx[std::size_t(rng.next_below(std::uint64_t(i) + 1))]);

  const int n_val = int(val_frac * n);    // floor
  const int n_test = int(test_frac * n);  // floor
  PairedDataset out = ds;
  out.split.clear();
  for (int i = 0; i < n; ++i) {
    const std::string& id = ds.groups[std::size_t(idx[std::size_t(i)])].product_id;
    out.split[id] = i < n_val                ? Split::Val
                    : i < n_val + n_test     ? Split::Test
                                             : Split::Train;
  }
  return out;
}

const ProductGroup& sample_negative_group(const PairedDataset& ds,
                                          const std::string& product_id,
                                          Rng& rng) {
  std::vector<int> candidates;
  for (int i : ds.group_indices(Split::Train))
    if (ds.groups[std::size_t(i)].product_id != product_id)
      candidates.push_back(i);
  if (candidates.empty())
    throw std::invalid_argument(
        "negative sampling needs at least two training products");
  const int pick =
      candidates[std::size_t(rng.next_below(candidates.size()))];
  return ds.groups[std::size_t(pick)];
}

Tensor sample_negative(const PairedDataset& ds, const std::string& product_id,
                       Rng& rng) {
  return load_image_tensor(sample_negative_group(ds, product_id, rng)
                               .target_path);
}

}  // namespace pdt
