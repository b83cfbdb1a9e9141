#pragma once

#include <cstdint>
#include <string>

#include "pdt/dataset.hpp"
#include "pdt/image.hpp"

namespace pdt {

// Procedural paired-domain corpus: each product is a garment glyph in one
// palette color and pattern; the target shows it centered on white in
// catalog style, and each source shows the same garment worn by a stylized
// figure over a textured background. Color and pattern are the semantic
// attributes the converter must preserve.
struct SyntheticConfig {
  int n_products = 10;
  int colors = 6;       // palette size K, at least 2
  bool stripes = true;  // draw striped garments alongside solid ones
  int canvas = 64;
  std::uint64_t seed = 0;
};

struct Rgb {
  unsigned char r = 0, g = 0, b = 0;
};

// Palette entry k of K: hues evenly spaced around the wheel at full
// saturation, so entries are unambiguous under hue quantization.
Rgb palette_color(int k, int K);

// Index of the palette color covering the most saturated pixels, or -1 when
// the image has no saturated pixels. Backgrounds and figures are kept
// desaturated by construction, so this recovers the garment color.
int dominant_palette_color(const Image& img, int K);

// Writes `out_root/<product_id>/product.png` plus 2-4 model images per
// product (load_lookbook layout) and returns the dataset pointing at them.
// Byte-identical output for identical configs.
PairedDataset generate_synthetic(const SyntheticConfig& config,
                                 const std::string& out_root);

}  // namespace pdt
