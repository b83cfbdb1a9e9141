#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "pdt/image.hpp"
#include "pdt/rng.hpp"
#include "pdt/tensor.hpp"

namespace pdt {

// Working resolution of the whole pipeline.
inline constexpr int kImageSide = 64;

enum class Split { Train, Val, Test };

// Stable lowercase identifier: "train", "val", "test".
const char* split_name(Split split);
// Inverse of split_name; throws std::invalid_argument on anything else.
Split parse_split(const std::string& name);

// One product: the catalog photo (target domain) and the photos of people
// wearing it (source domain).
struct ProductGroup {
  std::string product_id;
  std::string target_path;
  std::vector<std::string> source_paths;  // nonempty
};

struct PairedDataset {
  std::vector<ProductGroup> groups;  // ordered by product_id
  // Product-level split assignment; empty until split_dataset runs. Splits
  // partition whole products so no product's images leak across splits.
  std::unordered_map<std::string, Split> split;

  // Indices into `groups` for one split, in group order. A dataset without
  // an assignment counts entirely as training data.
  std::vector<int> group_indices(Split which) const;
  int total_sources() const;
};

// Aspect-preserving bilinear resize so the longer side is `side`, white
// (255) margins centered on the short axis to square, then the linear map
// [0,255] -> [-1,1]. Returns a [3,side,side] tensor.
Tensor preprocess_image(const Image& raw, int side = kImageSide);

// read_png + preprocess_image.
Tensor load_image_tensor(const std::string& path, int side = kImageSide);

// Maps (-1,1) model output back to an 8-bit RGB image.
Image tensor_to_image(const Tensor& t);

// Scans `root/<product_id>/product.png` + `root/<product_id>/model_<k>.png`.
// If `root/manifest.tsv` exists (tab-separated: product_id, role
// product|model, relative path), it overrides directory scanning. Products
// with no model images are excluded with a warning; a product directory
// with model images but no product photo is an error. An empty root yields
// an empty dataset.
PairedDataset load_lookbook(const std::string& root);

// Shuffles products with the "data/split" substream of `seed` and assigns
// the first floor(val_frac*n) to val, the next floor(test_frac*n) to test,
// and the remainder to train. Requires val_frac + test_frac < 1 and at
// least 3 products.
PairedDataset split_dataset(const PairedDataset& ds, double val_frac,
                            double test_frac, std::uint64_t seed);

// Uniformly picks a training product other than `product_id`: the source of
// the irrelevant target used as a negative pair. Requires at least two
// training products.
const ProductGroup& sample_negative_group(const PairedDataset& ds,
                                          const std::string& product_id,
                                          Rng& rng);

// The sampled product's preprocessed target image.
Tensor sample_negative(const PairedDataset& ds, const std::string& product_id,
                       Rng& rng);

}  // namespace pdt
