#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdt/common.hpp"
#include "pdt/dataset.hpp"
#include "pdt/image.hpp"
#include "pdt/synthetic.hpp"
#include "support/test_util.hpp"

using namespace pdt;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case.
fs::path scratch_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("pdt_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Image random_image(int w, int h, Rng& rng) {
  Image img = make_image(w, h, 0, 0, 0);
  for (unsigned char& byte : img.rgb)
    byte = (unsigned char)rng.next_below(256);
  return img;
}

void write_product(const fs::path& root, const std::string& id,
                   int n_models, Rng& rng) {
  fs::create_directories(root / id);
  write_png((root / id / "product.png").string(), random_image(32, 32, rng));
  for (int k = 1; k <= n_models; ++k)
    write_png((root / id / ("model_" + std::to_string(k) + ".png")).string(),
              random_image(40, 30, rng));
}

std::vector<char> file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  return std::vector<char>(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
}

// Minimal in-memory dataset for split/negative-sampling tests; the paths
// are never dereferenced there.
PairedDataset fake_dataset(int n_products) {
  PairedDataset ds;
  for (int i = 0; i < n_products; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "p%03d", i);
    ds.groups.push_back({id, std::string(id) + "/product.png",
                         {std::string(id) + "/model_1.png"}});
  }
  return ds;
}

}  // namespace

TEST_CASE("png io round-trips pixels exactly") {
  const fs::path dir = scratch_dir("pngio");
  Rng rng(50);
  Image img = random_image(37, 23, rng);
  const std::string path = (dir / "a.png").string();
  write_png(path, img);
  Image back = read_png(path);
  REQUIRE(back.width == 37);
  REQUIRE(back.height == 23);
  CHECK(back.rgb == img.rgb);
}

TEST_CASE("png io names the path in failure diagnostics") {
  try {
    (void)read_png("/nonexistent/file.png");
    FAIL("expected std::runtime_error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("/nonexistent/file.png") !=
          std::string::npos);
  }
  const fs::path dir = scratch_dir("pngbad");
  std::ofstream(dir / "junk.png") << "this is not a png";
  CHECK_THROWS_AS((void)read_png((dir / "junk.png").string()),
                  std::runtime_error);
  Image img = make_image(4, 4, 1, 2, 3);
  CHECK_THROWS_AS(write_png("/nonexistent/dir/out.png", img),
                  std::runtime_error);
}

TEST_CASE("preprocessing letterboxes a wide image with white margins") {
  Image img = make_image(128, 96, 0, 0, 0);  // all black, wide
  Tensor t = preprocess_image(img);
  REQUIRE(t.shape() == Shape{3, 64, 64});
  const float* v = t.data();
  // Content occupies rows 8..55 at full width; margins are white -> +1.
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        const float val = v[(std::size_t(c) * 64 + y) * 64 + x];
        if (y < 8 || y >= 56) {
          CHECK(val == 1.0f);
        } else {
          CHECK(val == -1.0f);
        }
      }
    }
  }
}

TEST_CASE("preprocessing letterboxes a tall image on the x axis") {
  Image img = make_image(50, 100, 0, 0, 0);
  Tensor t = preprocess_image(img);
  const float* v = t.data();
  // out_w = round(50*64/100) = 32, centered: columns 16..47 are content.
  for (int x = 0; x < 64; ++x) {
    const float val = v[std::size_t(0) * 64 * 64 + 32 * 64 + x];
    if (x < 16 || x >= 48) {
      CHECK(val == 1.0f);
    } else {
      CHECK(val == -1.0f);
    }
  }
}

TEST_CASE("preprocessing is the identity on already-sized inputs") {
  Rng rng(51);
  Image img = random_image(64, 64, rng);
  Tensor t = preprocess_image(img);
  // With scale 1 the bilinear weights collapse to a copy.
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const float expect = float(img.pixel(y, x)[c] / 127.5 - 1.0);
        REQUIRE(t.data()[(std::size_t(c) * 64 + y) * 64 + x] ==
                doctest::Approx(expect).epsilon(1e-12));
      }
}

TEST_CASE("preprocessing bounds hold across random sizes") {
  Rng rng(52);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 1 + int(rng.next_below(180));
    const int h = 1 + int(rng.next_below(180));
    Image img = random_image(w, h, rng);
    Tensor t = preprocess_image(img);
    REQUIRE(t.shape() == Shape{3, 64, 64});
    for (int i = 0; i < t.numel(); ++i) {
      REQUIRE(t.data()[i] >= -1.0f);
      REQUIRE(t.data()[i] <= 1.0f);
    }
  }
}

TEST_CASE("tensor to image maps the endpoints and midpoint") {
  Tensor t = Tensor::full({3, 2, 2}, -1.0f);
  t.data()[1] = 1.0f;
  t.data()[2] = 0.0f;
  Image img = tensor_to_image(t);
  CHECK(img.pixel(0, 0)[0] == 0);
  CHECK(img.pixel(0, 1)[0] == 255);
  CHECK(img.pixel(1, 0)[0] == 128);  // round(127.5)
  CHECK_THROWS_AS((void)tensor_to_image(Tensor::zeros({4, 2, 2})),
                  std::invalid_argument);
}

TEST_CASE("lookbook scan finds products and counts sources") {
  const fs::path root = scratch_dir("lookbook");
  Rng rng(53);
  write_product(root, "shirt_b", 2, rng);
  write_product(root, "shirt_a", 1, rng);
  write_product(root, "shirt_c", 5, rng);
  PairedDataset ds = load_lookbook(root.string());
  REQUIRE(ds.groups.size() == 3);
  CHECK(ds.total_sources() == 8);
  // Deterministic ordering by product id.
  CHECK(ds.groups[0].product_id == "shirt_a");
  CHECK(ds.groups[1].product_id == "shirt_b");
  CHECK(ds.groups[2].product_id == "shirt_c");
  CHECK(ds.groups[2].source_paths.size() == 5);
  for (const ProductGroup& g : ds.groups) {
    CHECK(fs::exists(g.target_path));
    for (const std::string& s : g.source_paths) CHECK(fs::exists(s));
  }
}

TEST_CASE("lookbook scan tolerates an empty root") {
  const fs::path root = scratch_dir("lookbook_empty");
  PairedDataset ds = load_lookbook(root.string());
  CHECK(ds.groups.empty());
  CHECK_THROWS_AS((void)load_lookbook((root / "missing").string()),
                  std::runtime_error);
}

TEST_CASE("lookbook scan excludes model-less products with a warning") {
  const fs::path root = scratch_dir("lookbook_warn");
  Rng rng(54);
  write_product(root, "good", 2, rng);
  fs::create_directories(root / "bare");
  write_png((root / "bare" / "product.png").string(),
            random_image(16, 16, rng));

  std::vector<std::string> warnings;
  WarnFn saved = warning_handler();
  warning_handler() = [&](const std::string& msg) { warnings.push_back(msg); };
  PairedDataset ds = load_lookbook(root.string());
  warning_handler() = saved;

  REQUIRE(ds.groups.size() == 1);
  CHECK(ds.groups[0].product_id == "good");
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("bare") != std::string::npos);
}

TEST_CASE("lookbook scan rejects a product missing its target photo") {
  const fs::path root = scratch_dir("lookbook_reject");
  Rng rng(55);
  fs::create_directories(root / "orphan");
  write_png((root / "orphan" / "model_1.png").string(),
            random_image(16, 16, rng));
  CHECK_THROWS_AS((void)load_lookbook(root.string()), std::runtime_error);
}

TEST_CASE("manifest overrides directory scanning") {
  const fs::path root = scratch_dir("manifest");
  Rng rng(56);
  write_product(root, "listed", 2, rng);
  write_product(root, "unlisted", 1, rng);  // present on disk, not in manifest
  std::ofstream m(root / "manifest.tsv");
  m << "listed\tproduct\tlisted/product.png\n";
  m << "listed\tmodel\tlisted/model_1.png\n";
  m << "listed\tmodel\tlisted/model_2.png\n";
  m.close();
  PairedDataset ds = load_lookbook(root.string());
  REQUIRE(ds.groups.size() == 1);
  CHECK(ds.groups[0].product_id == "listed");
  CHECK(ds.groups[0].source_paths.size() == 2);

  // Malformed rows are rejected with position information.
  std::ofstream bad(root / "manifest.tsv");
  bad << "listed\tgarbage_role\tlisted/product.png\n";
  bad.close();
  CHECK_THROWS_AS((void)load_lookbook(root.string()), std::runtime_error);
}

TEST_CASE("splits partition products at floor fractions") {
  PairedDataset ds = fake_dataset(100);
  PairedDataset out = split_dataset(ds, 0.05, 0.05, 7);
  CHECK(out.group_indices(Split::Val).size() == 5);
  CHECK(out.group_indices(Split::Test).size() == 5);
  CHECK(out.group_indices(Split::Train).size() == 90);
  // Every product lands in exactly one split.
  std::set<std::string> seen;
  for (Split s : {Split::Train, Split::Val, Split::Test})
    for (int i : out.group_indices(s))
      CHECK(seen.insert(out.groups[std::size_t(i)].product_id).second);
  CHECK(seen.size() == 100);
}

TEST_CASE("split assignment is seed-deterministic") {
  PairedDataset ds = fake_dataset(40);
  PairedDataset a = split_dataset(ds, 0.1, 0.1, 123);
  PairedDataset b = split_dataset(ds, 0.1, 0.1, 123);
  PairedDataset c = split_dataset(ds, 0.1, 0.1, 124);
  CHECK(a.split == b.split);
  CHECK(a.split != c.split);
}

TEST_CASE("split preconditions are enforced") {
  CHECK_THROWS_AS((void)split_dataset(fake_dataset(2), 0.05, 0.05, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)split_dataset(fake_dataset(10), 0.6, 0.5, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)split_dataset(fake_dataset(10), -0.1, 0.2, 1),
                  std::invalid_argument);
}

TEST_CASE("negative sampling excludes the query product") {
  PairedDataset ds = fake_dataset(2);
  Rng rng(57);
  for (int i = 0; i < 100; ++i)
    CHECK(sample_negative_group(ds, "p000", rng).product_id == "p001");
}

TEST_CASE("negative sampling is uniform over the other products") {
  PairedDataset ds = fake_dataset(5);
  Rng rng(58);
  std::map<std::string, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i)
    ++counts[sample_negative_group(ds, "p002", rng).product_id];
  CHECK(counts.find("p002") == counts.end());
  REQUIRE(counts.size() == 4);
  for (auto& [id, n] : counts)
    CHECK(std::abs(double(n) / draws - 0.25) < 0.02);
}

TEST_CASE("negative sampling respects split boundaries and preconditions") {
  PairedDataset ds = fake_dataset(3);
  ds.split["p000"] = Split::Train;
  ds.split["p001"] = Split::Train;
  ds.split["p002"] = Split::Val;  // not eligible as a training negative
  Rng rng(59);
  for (int i = 0; i < 50; ++i)
    CHECK(sample_negative_group(ds, "p000", rng).product_id == "p001");

  PairedDataset lone = fake_dataset(1);
  CHECK_THROWS_AS((void)sample_negative_group(lone, "p000", rng),
                  std::invalid_argument);
}

TEST_CASE("synthetic corpus has the declared structure") {
  const fs::path root = scratch_dir("synth");
  SyntheticConfig cfg;
  cfg.n_products = 10;
  cfg.colors = 4;
  cfg.seed = 9;
  PairedDataset ds = generate_synthetic(cfg, root.string());
  REQUIRE(ds.groups.size() == 10);
  int sources = ds.total_sources();
  CHECK(sources >= 20);
  CHECK(sources <= 40);
  for (const ProductGroup& g : ds.groups) {
    Image target = read_png(g.target_path);
    CHECK(target.width == 64);
    CHECK(target.height == 64);
    for (const std::string& s : g.source_paths) {
      Image src = read_png(s);
      CHECK(src.width == 64);
      CHECK(src.height == 64);
    }
  }
  // The on-disk layout is loadable through the standard scanner.
  PairedDataset rescanned = load_lookbook(root.string());
  CHECK(rescanned.groups.size() == 10);
  CHECK(rescanned.total_sources() == sources);
}

TEST_CASE("synthetic generation is byte-deterministic") {
  const fs::path a = scratch_dir("synth_a");
  const fs::path b = scratch_dir("synth_b");
  SyntheticConfig cfg;
  cfg.n_products = 4;
  cfg.seed = 33;
  PairedDataset da = generate_synthetic(cfg, a.string());
  PairedDataset db = generate_synthetic(cfg, b.string());
  REQUIRE(da.groups.size() == db.groups.size());
  for (std::size_t i = 0; i < da.groups.size(); ++i) {
    CHECK(file_bytes(da.groups[i].target_path) ==
          file_bytes(db.groups[i].target_path));
    REQUIRE(da.groups[i].source_paths.size() ==
            db.groups[i].source_paths.size());
    for (std::size_t j = 0; j < da.groups[i].source_paths.size(); ++j)
      CHECK(file_bytes(da.groups[i].source_paths[j]) ==
            file_bytes(db.groups[i].source_paths[j]));
  }
}

TEST_CASE("dominant color oracle recovers every generated garment color") {
  const fs::path root = scratch_dir("synth_colors");
  SyntheticConfig cfg;
  cfg.n_products = 24;
  cfg.colors = 6;
  cfg.seed = 17;
  PairedDataset ds = generate_synthetic(cfg, root.string());

  // The generator records its color choices; the classifier must agree on
  // every target image.
  std::map<std::string, int> truth;
  std::ifstream t(root / "attributes.tsv");
  REQUIRE(bool(t));
  std::string id, pattern;
  int color, glyph;
  while (t >> id >> color >> pattern >> glyph) truth[id] = color;
  REQUIRE(truth.size() == 24);

  int distinct = 0;
  std::set<int> colors_seen;
  for (const ProductGroup& g : ds.groups) {
    const int got = dominant_palette_color(read_png(g.target_path), cfg.colors);
    REQUIRE(truth.count(g.product_id) == 1);
    CHECK(got == truth[g.product_id]);
    colors_seen.insert(got);
    // Sources carry the same garment: dominant color must match.
    for (const std::string& s : g.source_paths)
      CHECK(dominant_palette_color(read_png(s), cfg.colors) == got);
  }
  distinct = int(colors_seen.size());
  CHECK(distinct >= 2);  // 24 draws over 6 colors: all-same is (1/6)^23
}

TEST_CASE("palette colors are saturated and distinct") {
  for (int K : {2, 4, 6, 12}) {
    std::set<std::tuple<int, int, int>> seen;
    for (int k = 0; k < K; ++k) {
      Rgb c = palette_color(k, K);
      seen.insert({c.r, c.g, c.b});
      const int maxc = std::max({int(c.r), int(c.g), int(c.b)});
      const int minc = std::min({int(c.r), int(c.g), int(c.b)});
      CHECK(maxc > 0);
      CHECK(double(maxc - minc) / maxc > 0.5);  // saturation above threshold
    }
    CHECK(int(seen.size()) == K);
  }
  CHECK_THROWS_AS((void)palette_color(0, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)palette_color(5, 4), std::invalid_argument);
}
