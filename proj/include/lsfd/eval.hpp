#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lsfd/data.hpp"
#include "lsfd/model.hpp"

namespace lsfd {

// ITU-R BT.601 luma on the [0,1] scale:
// Y = (65.738 R + 129.057 G + 25.064 B) / 256 + 16/256.
Tensor rgb_to_y(const Tensor& img);

// PSNR in dB with MAX = 1. Both images are quantized to the 8-bit grid
// first and `shave` pixels are removed from every border (SISR convention:
// shave = scale, Y channel). Identical images give +infinity.
double psnr(const Tensor& pred, const Tensor& target, int shave, bool on_y);

struct EvalReport {
  std::string method;
  struct Item {
    std::string id;
    double psnr_db = 0.0;
  };
  std::vector<Item> items;
  double mean_psnr = 0.0;
  std::string config_digest;
  uint64_t seed = 0;

  std::string to_csv() const;          // id,psnr_db rows
  std::string to_json_string() const;  // full report
  void save(const std::string& csv_path, const std::string& json_path) const;
};

using ImagePredictor = std::function<ImageBuffer(const CorpusImage&)>;

// PSNR of predictor output vs HR over a split; shave defaults to the
// corpus scale, Y-channel metric unless on_y is false.
EvalReport evaluate_images(const ImagePredictor& predict, const Corpus& corpus,
                           Split split, int shave, bool on_y,
                           const std::string& label);

// Forwards full LR images through the model (no patches), de-normalizes
// and quantizes, then scores Y-channel PSNR with shave = scale.
EvalReport evaluate(Model& model, const Corpus& corpus, Split split,
                    const std::string& label = "", bool on_y = true);

// Plain bicubic upsampling of the LR plane: the floor every trained model
// must beat.
EvalReport evaluate_bicubic(const Corpus& corpus, Split split,
                            bool on_y = true);

// Gradient attribution: how much each LR pixel influences a target SR
// region (input-gradient magnitude, L2 over color channels, max 1).
struct Region {
  int x = 0, y = 0, w = 0, h = 0;
};

struct AttributionMap {
  std::string source_id;
  Region region;  // SR coordinates
  int lr_w = 0, lr_h = 0;
  std::vector<double> map;  // lr_h x lr_w, normalized to max 1

  // Pixels above `frac` of the max.
  int64_t footprint_area(double frac = 0.05) const;
  void save_png(const std::string& path) const;
};

// fwd runs the upscaler on an LR tensor bound to the given tape.
AttributionMap attribution_fn(
    const std::function<Tensor(Tape&, const Tensor&)>& fwd,
    const Tensor& lr, Region region, const std::string& source_id = "");

AttributionMap attribution(Model& model, const ImageBuffer& lr_img,
                           Region region,
                           const std::array<double, 3>& mean_rgb,
                           const std::string& source_id = "");

// FNV-1a digest of an arbitrary config blob, for run metadata.
std::string config_digest(const std::string& text);

}  // namespace lsfd
