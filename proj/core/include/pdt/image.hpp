#pragma once

#include <string>
#include <vector>

namespace pdt {

// 8-bit RGB raster, rows top to bottom, 3 bytes per pixel.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> rgb;  // height * width * 3 bytes

  unsigned char* pixel(int y, int x) {
    return rgb.data() + 3 * (std::size_t(y) * width + x);
  }
  const unsigned char* pixel(int y, int x) const {
    return rgb.data() + 3 * (std::size_t(y) * width + x);
  }
};

// Solid-filled image of the given size.
Image make_image(int width, int height, unsigned char r, unsigned char g,
                 unsigned char b);

// Decodes a PNG file to 8-bit RGB (palette, grayscale, 16-bit and alpha
// variants are converted; alpha is dropped). Throws std::runtime_error
// naming the path when the file is missing or not decodable.
Image read_png(const std::string& path);

// Encodes an 8-bit RGB PNG. Output is deterministic: identical pixels
// produce identical bytes. Throws std::runtime_error naming the path on
// failure.
void write_png(const std::string& path, const Image& img);

}  // namespace pdt
