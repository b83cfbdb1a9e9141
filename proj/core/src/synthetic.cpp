#include "pdt/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "pdt/rng.hpp"

namespace fs = std::filesystem;

namespace pdt {

namespace {

Rgb hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  auto to8 = [](double u) {
    return (unsigned char)std::clamp(std::lround(u * 255.0), 0L, 255L);
  };
  return {to8(r + m), to8(g + m), to8(b + m)};
}

void rgb_to_hsv(unsigned char r8, unsigned char g8, unsigned char b8,
                double* h, double* s, double* v) {
  const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
  const double maxc = std::max({r, g, b});
  const double minc = std::min({r, g, b});
  const double d = maxc - minc;
  *v = maxc;
  *s = maxc > 0 ? d / maxc : 0.0;
  if (d <= 0) {
    *h = 0.0;
    return;
  }
  double hp;
  if (maxc == r) hp = std::fmod((g - b) / d + 6.0, 6.0);
  else if (maxc == g) hp = (b - r) / d + 2.0;
  else hp = (r - g) / d + 4.0;
  *h = hp * 60.0;
}

// Garment silhouettes on glyph-local coordinates: x in [-0.5,0.5] around the
// glyph center, y likewise with negative up. Canonical footprint stays
// inside the unit box.
bool inside_glyph(int glyph, double x, double y) {
  const double ax = std::abs(x);
  switch (glyph) {
    case 0:  // tee: boxy torso, short sleeves
      if (ax <= 0.20 && y >= -0.25 && y <= 0.25) return true;
      return ax <= 0.35 && y >= -0.25 && y <= -0.05;
    case 1:  // long sleeve: same torso, sleeves reach the hem
      if (ax <= 0.20 && y >= -0.25 && y <= 0.25) return true;
      return ax <= 0.33 && y >= -0.25 && y <= 0.22;
    default: {  // dress: fitted bodice flaring into a skirt
      if (ax <= 0.16 && y >= -0.28 && y <= -0.05) return true;
      if (y > -0.05 && y <= 0.32) {
        const double half = 0.16 + (y + 0.05) * (0.34 - 0.16) / 0.37;
        return ax <= half;
      }
      return ax <= 0.28 && y >= -0.28 && y <= -0.12;
    }
  }
}

struct GarmentStyle {
  Rgb base;
  Rgb dark;     // stripe partner: same hue, dimmed
  bool striped;
};

// Paints the garment onto `img` with the glyph centered at (cx, cy) in
// normalized canvas coordinates and scaled by `scale`. Stripes run in
// canvas pixel space with an 8-pixel period, split 5/3 so the base color
// always dominates the pixel count.
void paint_glyph(Image* img, int glyph, const GarmentStyle& style, double cx,
                 double cy, double scale) {
  const int side = img->width;
  for (int py = 0; py < img->height; ++py) {
    for (int px = 0; px < side; ++px) {
      const double nx = (px + 0.5) / side;
      const double ny = (py + 0.5) / img->height;
      const double gx = (nx - cx) / scale;
      const double gy = (ny - cy) / scale;
      if (!inside_glyph(glyph, gx, gy)) continue;
      const Rgb& c =
          (style.striped && py % 8 >= 5) ? style.dark : style.base;
      unsigned char* p = img->pixel(py, px);
      p[0] = c.r;
      p[1] = c.g;
      p[2] = c.b;
    }
  }
}

// Head-and-body silhouette behind the garment, in muted tones that stay
// below the saturation threshold of the dominant-color oracle.
void paint_figure(Image* img, double cx, double cy, double scale) {
  const Rgb skin{168, 152, 138};
  const double head_cy = cy - 0.38 * scale;
  const double head_r = 0.09 * scale;
  for (int py = 0; py < img->height; ++py) {
    for (int px = 0; px < img->width; ++px) {
      const double nx = (px + 0.5) / img->width;
      const double ny = (py + 0.5) / img->height;
      const bool head = (nx - cx) * (nx - cx) + (ny - head_cy) * (ny - head_cy)
                        <= head_r * head_r;
      const bool body = std::abs(nx - cx) <= 0.08 * scale &&
                        ny >= head_cy && ny <= cy + 0.55 * scale;
      if (!head && !body) continue;
      unsigned char* p = img->pixel(py, px);
      p[0] = skin.r;
      p[1] = skin.g;
      p[2] = skin.b;
    }
  }
}

// Light desaturated checkerboard: texture without color, so the garment is
// the only saturated content.
Image textured_background(int side, int base_gray) {
  Image img = make_image(side, side, 0, 0, 0);
  for (int py = 0; py < side; ++py) {
    for (int px = 0; px < side; ++px) {
      const int shade = base_gray - ((px / 8 + py / 8) % 2 ? 12 : 0);
      const unsigned char g = (unsigned char)std::clamp(shade, 0, 255);
      unsigned char* p = img.pixel(py, px);
      p[0] = g;
      p[1] = g;
      p[2] = g;
    }
  }
  return img;
}

}  // namespace

Rgb palette_color(int k, int K) {
  if (K < 2) throw std::invalid_argument("palette needs at least 2 colors");
  if (k < 0 || k >= K) throw std::invalid_argument("palette index out of range");
  return hsv_to_rgb(360.0 * k / K, 0.9, 0.95);
}

int dominant_palette_color(const Image& img, int K) {
  if (K < 2) throw std::invalid_argument("palette needs at least 2 colors");
  std::vector<long> votes(std::size_t(K), 0);
  for (std::size_t i = 0; i + 2 < img.rgb.size(); i += 3) {
    double h, s, v;
    rgb_to_hsv(img.rgb[i], img.rgb[i + 1], img.rgb[i + 2], &h, &s, &v);
    if (s <= 0.5 || v <= 0.3) continue;
    // Nearest palette hue on the circle.
    int best = 0;
    double best_d = 361.0;
    for (int k = 0; k < K; ++k) {
      const double target = 360.0 * k / K;
      const double d = std::min(std::abs(h - target),
                                360.0 - std::abs(h - target));
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    ++votes[std::size_t(best)];
  }
  long top = 0;
  int arg = -1;
  for (int k = 0; k < K; ++k) {
    if (votes[std::size_t(k)] > top) {
      top = votes[std::size_t(k)];
      arg = k;
    }
  }
  return arg;
}

PairedDataset generate_synthetic(const SyntheticConfig& config,
                                 const std::string& out_root) {
  if (config.colors < 2)
    throw std::invalid_argument("synthetic palette needs at least 2 colors");
  if (config.n_products < 1)
    throw std::invalid_argument("synthetic corpus needs at least 1 product");
  if (config.canvas < 16)
    throw std::invalid_argument("synthetic canvas too small");

  fs::create_directories(out_root);
  Rng rng = Rng::stream(config.seed, "synth");

  // Ground-truth attributes per product, for oracle checks and debugging.
  std::ofstream truth(fs::path(out_root) / "attributes.tsv");
  if (!truth)
    throw std::runtime_error("cannot write attribute table under " + out_root);

  PairedDataset ds;
  for (int p = 0; p < config.n_products; ++p) {
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04d", p);
    const fs::path dir = fs::path(out_root) / id;
    fs::create_directories(dir);

    GarmentStyle style;
    const int color = int(rng.next_below(std::uint64_t(config.colors)));
    style.base = palette_color(color, config.colors);
    const Rgb dark = hsv_to_rgb(360.0 * color / config.colors, 0.9, 0.52);
    style.dark = dark;
    style.striped = config.stripes && rng.next_below(2) == 1;
    const int glyph = int(rng.next_below(3));
    truth << id << '\t' << color << '\t' << (style.striped ? "stripes" : "solid")
          << '\t' << glyph << '\n';

    // Catalog-style target: canonical pose on white.
    Image target = make_image(config.canvas, config.canvas, 255, 255, 255);
    paint_glyph(&target, glyph, style, 0.5, 0.5, 1.0);
    const std::string target_path = (dir / "product.png").string();
    write_png(target_path, target);

    ProductGroup group;
    group.product_id = id;
    group.target_path = target_path;

    const int n_sources = 2 + int(rng.next_below(3));
    for (int s = 1; s <= n_sources; ++s) {
      const int base_gray = 205 + int(rng.next_below(40));
      const double scale = 0.5 + 0.4 * rng.next_double();
      const double cx = 0.35 + 0.3 * rng.next_double();
      const double cy = 0.40 + 0.25 * rng.next_double();
      Image src = textured_background(config.canvas, base_gray);
      paint_figure(&src, cx, cy, scale);
      paint_glyph(&src, glyph, style, cx, cy, scale);
      char name[32];
      std::snprintf(name, sizeof name, "model_%d.png", s);
      const std::string src_path = (dir / name).string();
      write_png(src_path, src);
      group.source_paths.push_back(src_path);
    }
    ds.groups.push_back(std::move(group));
  }
  return ds;
}

}  // namespace pdt
