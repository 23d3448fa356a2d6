#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lsfd/tensor.hpp"

namespace lsfd {

// 8-bit RGB image, row-major triples.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;

  ImageBuffer() = default;
  ImageBuffer(int w, int h)
      : width(w), height(h), pixels(size_t(w) * h * 3, 0) {}

  uint8_t& at(int x, int y, int c) {
    return pixels[(size_t(y) * width + x) * 3 + c];
  }
  uint8_t at(int x, int y, int c) const {
    return pixels[(size_t(y) * width + x) * 3 + c];
  }
};

// 8-bit RGB or grayscale PNGs only; grayscale is replicated to 3 channels.
// Palette, 16-bit and alpha files are rejected with FormatError.
ImageBuffer load_png(const std::string& path);
void save_png(const ImageBuffer& img, const std::string& path);
// Single-channel 8-bit PNG (attribution maps).
void save_png_gray(const std::vector<uint8_t>& gray, int width, int height,
                   const std::string& path);

ImageBuffer crop(const ImageBuffer& img, int x, int y, int w, int h);
// Largest top-left crop whose dimensions are multiples of s.
ImageBuffer crop_to_multiple(const ImageBuffer& img, int s);

// Separable cubic-convolution resize (a = -0.5 kernel), edge-clamped; the
// kernel is stretched by the scale factor when shrinking so downscales are
// antialiased. Values are clamped to [0,255] and rounded half away from
// zero at the end.
ImageBuffer bicubic_resize(const ImageBuffer& img, int out_w, int out_h);
// Width and height must be divisible by s.
ImageBuffer bicubic_downscale(const ImageBuffer& img, int s);
ImageBuffer bicubic_upscale(const ImageBuffer& img, int s);

// pixel/255 - mean_rgb per channel, as a (1,3,H,W) tensor.
Tensor to_tensor(const ImageBuffer& img, const std::array<double, 3>& mean_rgb);
// Inverse: clamps the de-normalized values to [0,1] and rounds to the
// 8-bit grid.
ImageBuffer from_tensor(const Tensor& t, const std::array<double, 3>& mean_rgb);

}  // namespace lsfd
