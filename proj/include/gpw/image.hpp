#pragma once

#include <string>
#include <vector>

namespace gpw {

//! Dense interleaved float64 image, row-major.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
  bool empty() const { return data.empty(); }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

//! 8-bit conversion: round(255 * clamp(v, 0, 1)).
unsigned char to_byte(double v);

void write_ppm(const std::string& path, const Image& rgb);
Image read_ppm(const std::string& path);
//! Writes 1- or 3-channel images as grayscale or RGB PNG.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

}  // namespace gpw
