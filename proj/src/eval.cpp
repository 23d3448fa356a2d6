#include "lsfd/eval.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace lsfd {

namespace {

double quantize01(double v) {
  v = std::min(1.0, std::max(0.0, v));
  return std::lround(v * 255.0) / 255.0;
}

std::string format_psnr(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << v;
  return os.str();
}

}  // namespace

Tensor rgb_to_y(const Tensor& img) {
  const Shape s = img.shape();
  if (s.c != 3) {
    throw ShapeError("rgb_to_y: expected 3 channels, got " + s.str());
  }
  Tensor out(Shape{s.n, 1, s.h, s.w});
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t y = 0; y < s.h; ++y)
      for (int64_t x = 0; x < s.w; ++x) {
        const double r = img.at(n, 0, y, x);
        const double g = img.at(n, 1, y, x);
        const double b = img.at(n, 2, y, x);
        out.at(n, 0, y, x) =
            (65.738 * r + 129.057 * g + 25.064 * b) / 256.0 + 16.0 / 256.0;
      }
  return out;
}

double psnr(const Tensor& pred, const Tensor& target, int shave, bool on_y) {
  if (!(pred.shape() == target.shape())) {
    throw ShapeError("psnr: shape mismatch " + pred.shape().str() + " vs " +
                     target.shape().str());
  }
  if (shave < 0) throw ArgumentError("psnr: shave must be >= 0");
  const Shape s = pred.shape();
  if (s.h - 2 * shave <= 0 || s.w - 2 * shave <= 0) {
    throw ArgumentError("psnr: shave " + std::to_string(shave) +
                        " leaves an empty region for " + s.str());
  }

  Tensor pq(s), tq(s);
  for (int64_t i = 0; i < s.numel(); ++i) {
    pq.data()[i] = quantize01(pred.data()[i]);
    tq.data()[i] = quantize01(target.data()[i]);
  }
  if (on_y) {
    pq = rgb_to_y(pq);
    tq = rgb_to_y(tq);
  }
  const Shape qs = pq.shape();
  double mse = 0.0;
  int64_t count = 0;
  for (int64_t n = 0; n < qs.n; ++n)
    for (int64_t c = 0; c < qs.c; ++c)
      for (int64_t y = shave; y < qs.h - shave; ++y)
        for (int64_t x = shave; x < qs.w - shave; ++x) {
          const double d = pq.at(n, c, y, x) - tq.at(n, c, y, x);
          mse += d * d;
          ++count;
        }
  mse /= double(count);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "id,psnr_db\n";
  for (const Item& it : items) {
    os << it.id << "," << format_psnr(it.psnr_db) << "\n";
  }
  os << "mean," << format_psnr(mean_psnr) << "\n";
  return os.str();
}

std::string EvalReport::to_json_string() const {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["config_digest"] = config_digest;
  j["seed"] = seed;
  j["images"] = nlohmann::ordered_json::array();
  for (const Item& it : items) {
    nlohmann::ordered_json e;
    e["id"] = it.id;
    if (std::isinf(it.psnr_db)) {
      e["psnr_db"] = nullptr;
      e["identical"] = true;
    } else {
      e["psnr_db"] = it.psnr_db;
    }
    j["images"].push_back(e);
  }
  if (std::isinf(mean_psnr)) {
    j["mean_psnr_db"] = nullptr;
    j["identical"] = true;
  } else {
    j["mean_psnr_db"] = mean_psnr;
  }
  return j.dump(2);
}

void EvalReport::save(const std::string& csv_path,
                      const std::string& json_path) const {
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    if (!out) throw FormatError("cannot write " + csv_path);
    out << to_csv();
  }
  if (!json_path.empty()) {
    std::ofstream out(json_path);
    if (!out) throw FormatError("cannot write " + json_path);
    out << to_json_string() << "\n";
  }
}

EvalReport evaluate_images(const ImagePredictor& predict, const Corpus& corpus,
                           Split split, int shave, bool on_y,
                           const std::string& label) {
  EvalReport report;
  report.method = label;
  double sum = 0.0;
  for (const CorpusImage& ci : corpus.split(split)) {
    ImageBuffer pred = predict(ci);
    const double db = psnr(to_tensor(pred, {0, 0, 0}),
                           to_tensor(ci.hr, {0, 0, 0}), shave, on_y);
    report.items.push_back({ci.id, db});
    sum += db;
  }
  report.mean_psnr =
      report.items.empty() ? 0.0 : sum / double(report.items.size());
  return report;
}

EvalReport evaluate(Model& model, const Corpus& corpus, Split split,
                    const std::string& label, bool on_y) {
  const auto mean = corpus.mean_rgb();
  ImagePredictor predict = [&](const CorpusImage& ci) {
    Tensor x = to_tensor(ci.lr, mean);
    Tensor sr = model.forward(nullptr, x).sr;
    return from_tensor(sr, mean);
  };
  return evaluate_images(predict, corpus, split, corpus.scale(), on_y,
                         label.empty() ? "model" : label);
}

EvalReport evaluate_bicubic(const Corpus& corpus, Split split, bool on_y) {
  ImagePredictor predict = [&](const CorpusImage& ci) {
    return bicubic_upscale(ci.lr, corpus.scale());
  };
  return evaluate_images(predict, corpus, split, corpus.scale(), on_y,
                         "bicubic");
}

int64_t AttributionMap::footprint_area(double frac) const {
  double mx = 0.0;
  for (double v : map) mx = std::max(mx, v);
  if (mx <= 0.0) return 0;
  int64_t count = 0;
  for (double v : map) {
    if (v > frac * mx) ++count;
  }
  return count;
}

void AttributionMap::save_png(const std::string& path) const {
  std::vector<uint8_t> gray(map.size());
  for (size_t i = 0; i < map.size(); ++i) {
    gray[i] = uint8_t(std::lround(255.0 * std::min(1.0, std::max(0.0, map[i]))));
  }
  save_png_gray(gray, lr_w, lr_h, path);
}

AttributionMap attribution_fn(
    const std::function<Tensor(Tape&, const Tensor&)>& fwd,
    const Tensor& lr, Region region, const std::string& source_id) {
  if (region.w < 1 || region.h < 1) {
    throw ArgumentError("attribution: empty region");
  }
  Tape tape;
  Tensor x = tape.leaf(lr, true);
  Tensor sr = fwd(tape, x);
  const Shape ss = sr.shape();
  if (region.x < 0 || region.y < 0 || region.x + region.w > ss.w ||
      region.y + region.h > ss.h) {
    throw ArgumentError("attribution: region outside the SR output " +
                        ss.str());
  }
  Tensor mask(ss);
  for (int64_t c = 0; c < ss.c; ++c)
    for (int64_t y = region.y; y < region.y + region.h; ++y)
      for (int64_t x2 = region.x; x2 < region.x + region.w; ++x2)
        mask.at(0, c, y, x2) = 1.0;
  tape.backward(reduce_sum(mul(sr, mask)));
  Tensor g = tape.grad(x);

  AttributionMap out;
  out.source_id = source_id;
  out.region = region;
  out.lr_w = int(lr.shape().w);
  out.lr_h = int(lr.shape().h);
  out.map.assign(size_t(out.lr_w) * out.lr_h, 0.0);
  double mx = 0.0;
  for (int64_t y = 0; y < lr.shape().h; ++y)
    for (int64_t x2 = 0; x2 < lr.shape().w; ++x2) {
      double acc = 0.0;
      for (int64_t c = 0; c < lr.shape().c; ++c) {
        const double v = g.at(0, c, y, x2);
        acc += v * v;
      }
      const double mag = std::sqrt(acc);
      out.map[size_t(y) * out.lr_w + x2] = mag;
      mx = std::max(mx, mag);
    }
  if (mx > 0.0) {
    for (double& v : out.map) v /= mx;
  }
  return out;
}

AttributionMap attribution(Model& model, const ImageBuffer& lr_img,
                           Region region,
                           const std::array<double, 3>& mean_rgb,
                           const std::string& source_id) {
  Tensor lr = to_tensor(lr_img, mean_rgb);
  return attribution_fn(
      [&](Tape& tape, const Tensor& x) {
        (void)tape;
        return model.forward(x.tape(), x).sr;
      },
      lr, region, source_id);
}

std::string config_digest(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  return std::string(buf);
}

}  // namespace lsfd
