#include "lsfd/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace lsfd {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

double cubic_a05(double t) {
  t = std::fabs(t);
  if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
  if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
  return 0.0;
}

// One separable pass along x for a W_in x H plane -> W_out x H.
void resize_axis(const std::vector<double>& in, int w_in, int h,
                 std::vector<double>& out, int w_out) {
  out.assign(size_t(w_out) * h * 3, 0.0);
  const double scale = double(w_in) / double(w_out);
  const double fscale = std::max(1.0, scale);
  const double support = 2.0 * fscale;
  for (int ox = 0; ox < w_out; ++ox) {
    const double center = (ox + 0.5) * scale - 0.5;
    const int j0 = int(std::ceil(center - support));
    const int j1 = int(std::floor(center + support));
    double wsum = 0.0;
    std::vector<double> wts(j1 - j0 + 1);
    for (int j = j0; j <= j1; ++j) {
      wts[j - j0] = cubic_a05((center - j) / fscale);
      wsum += wts[j - j0];
    }
    for (int y = 0; y < h; ++y) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int j = j0; j <= j1; ++j) {
          const int sj = std::min(w_in - 1, std::max(0, j));
          acc += wts[j - j0] * in[(size_t(y) * w_in + sj) * 3 + c];
        }
        out[(size_t(y) * w_out + ox) * 3 + c] = acc / wsum;
      }
    }
  }
}

// Transpose the (w x h x 3) plane so the same axis pass handles y.
void transpose_plane(const std::vector<double>& in, int w, int h,
                     std::vector<double>& out) {
  out.assign(in.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        out[(size_t(x) * h + y) * 3 + c] = in[(size_t(y) * w + x) * 3 + c];
}

}  // namespace

ImageBuffer load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw FormatError("cannot open PNG file: " + path);

  uint8_t sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError("not a PNG file: " + path);
  }

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng initialization failed");
  }

  ImageBuffer img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG file: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unsupported PNG bit depth " +
                      std::to_string(bit_depth) + ": " + path);
  }
  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("palette PNGs are unsupported: " + path);
  }
  if (color_type != PNG_COLOR_TYPE_RGB && color_type != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("unsupported PNG color type: " + path);
  }
  if (color_type == PNG_COLOR_TYPE_GRAY) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);

  img.width = int(png_get_image_width(png, info));
  img.height = int(png_get_image_height(png, info));
  img.pixels.assign(size_t(img.width) * img.height * 3, 0);
  rows.resize(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = img.pixels.data() + size_t(y) * img.width * 3;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

namespace {

void write_png_impl(const uint8_t* data, int width, int height, int channels,
                    const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw FormatError("cannot write PNG file: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialization failed");
  }
  std::vector<png_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError("PNG write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(data + size_t(y) * width * channels);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void save_png(const ImageBuffer& img, const std::string& path) {
  write_png_impl(img.pixels.data(), img.width, img.height, 3, path);
}

void save_png_gray(const std::vector<uint8_t>& gray, int width, int height,
                   const std::string& path) {
  if (int64_t(gray.size()) != int64_t(width) * height) {
    throw ShapeError("save_png_gray: buffer size does not match dimensions");
  }
  write_png_impl(gray.data(), width, height, 1, path);
}

ImageBuffer crop(const ImageBuffer& img, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > img.width ||
      y + h > img.height) {
    throw ArgumentError("crop out of bounds");
  }
  ImageBuffer out(w, h);
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx < w; ++xx)
      for (int c = 0; c < 3; ++c)
        out.at(xx, yy, c) = img.at(x + xx, y + yy, c);
  return out;
}

ImageBuffer crop_to_multiple(const ImageBuffer& img, int s) {
  const int w = (img.width / s) * s;
  const int h = (img.height / s) * s;
  if (w < s || h < s) {
    throw ArgumentError("image smaller than one scale unit");
  }
  if (w == img.width && h == img.height) return img;
  return crop(img, 0, 0, w, h);
}

ImageBuffer bicubic_resize(const ImageBuffer& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw ArgumentError("bad resize target");
  std::vector<double> plane(img.pixels.begin(), img.pixels.end());
  std::vector<double> pass1, t1, pass2, t2;
  resize_axis(plane, img.width, img.height, pass1, out_w);
  transpose_plane(pass1, out_w, img.height, t1);
  resize_axis(t1, img.height, out_w, pass2, out_h);
  transpose_plane(pass2, out_h, out_w, t2);

  ImageBuffer out(out_w, out_h);
  for (size_t i = 0; i < t2.size(); ++i) {
    const double v = std::min(255.0, std::max(0.0, t2[i]));
    out.pixels[i] = uint8_t(std::lround(v));
  }
  return out;
}

ImageBuffer bicubic_downscale(const ImageBuffer& img, int s) {
  if (s < 1) throw ArgumentError("scale must be >= 1");
  if (img.width % s != 0 || img.height % s != 0) {
    throw ShapeError("image dimensions " + std::to_string(img.width) + "x" +
                     std::to_string(img.height) + " not divisible by " +
                     std::to_string(s) + "; crop first");
  }
  if (s == 1) return img;
  return bicubic_resize(img, img.width / s, img.height / s);
}

ImageBuffer bicubic_upscale(const ImageBuffer& img, int s) {
  if (s < 1) throw ArgumentError("scale must be >= 1");
  if (s == 1) return img;
  return bicubic_resize(img, img.width * s, img.height * s);
}

Tensor to_tensor(const ImageBuffer& img,
                 const std::array<double, 3>& mean_rgb) {
  Tensor t(Shape{1, 3, img.height, img.width});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        t.at(0, c, y, x) = img.at(x, y, c) / 255.0 - mean_rgb[c];
  return t;
}

ImageBuffer from_tensor(const Tensor& t,
                        const std::array<double, 3>& mean_rgb) {
  const Shape s = t.shape();
  if (s.n != 1 || s.c != 3) {
    throw ShapeError("from_tensor: expected (1,3,H,W), got " + s.str());
  }
  ImageBuffer img(int(s.w), int(s.h));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const double v =
            std::min(1.0, std::max(0.0, t.at(0, c, y, x) + mean_rgb[c]));
        img.at(x, y, c) = uint8_t(std::lround(v * 255.0));
      }
  return img;
}

}  // namespace lsfd
