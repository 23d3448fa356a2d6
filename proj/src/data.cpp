#include "lsfd/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace lsfd {

std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw FormatError("unknown split '" + name + "'");
}

ImageBuffer synth_texture(const TextureSpec& spec, Rng& rng) {
  if (spec.period < 2.0) {
    throw ConfigError("synth_texture: period must be >= 2 pixels");
  }
  if (spec.size < 1) throw ConfigError("synth_texture: bad size");
  const double p = spec.period;
  const double cs = std::cos(spec.angle), sn = std::sin(spec.angle);
  // Phase offsets in pixel units keep periodicity laws exact under fmod.
  const double ph1 = std::floor(rng.uniform(0.0, p));
  const double ph2 = std::floor(rng.uniform(0.0, p));

  auto wrap = [&](double t) {
    double m = std::fmod(t, p);
    return m < 0.0 ? m + p : m;
  };

  ImageBuffer img(spec.size, spec.size);
  for (int y = 0; y < spec.size; ++y) {
    for (int x = 0; x < spec.size; ++x) {
      // angle 0: t1 varies along y only, so rows are constant.
      const double t1 = x * sn + y * cs + ph1;
      const double t2 = x * cs - y * sn + ph2;
      double s = 0.0;
      switch (spec.pattern) {
        case TextureSpec::Pattern::Stripes:
          s = std::sin(2.0 * M_PI * wrap(t1) / p);
          break;
        case TextureSpec::Pattern::Checker: {
          // Cells of period/2 so the full spatial period matches `period`.
          const int64_t c1 = int64_t(std::floor(2.0 * t1 / p));
          const int64_t c2 = int64_t(std::floor(2.0 * t2 / p));
          s = ((c1 + c2) & 1) ? -1.0 : 1.0;
          break;
        }
        case TextureSpec::Pattern::Grid:
          s = (wrap(t1) < 1.0 || wrap(t2) < 1.0) ? -1.0 : 1.0;
          break;
        case TextureSpec::Pattern::Moire: {
          const double d = 0.15;
          const double u1 = x * (sn * std::cos(d) + cs * std::sin(d)) +
                            y * (cs * std::cos(d) - sn * std::sin(d));
          const double u2 = x * (sn * std::cos(d) - cs * std::sin(d)) +
                            y * (cs * std::cos(d) + sn * std::sin(d));
          s = std::sin(2.0 * M_PI * (u1 + ph1) / p) *
              std::sin(2.0 * M_PI * (u2 + ph2) / p);
          break;
        }
      }
      const double v = 0.5 + 0.5 * spec.contrast * s;
      const uint8_t q = uint8_t(std::lround(
          255.0 * std::min(1.0, std::max(0.0, v))));
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = q;
    }
  }
  return img;
}

PatchPair sample_patch(const ImageBuffer& hr, const ImageBuffer& lr, int s,
                       int patch, const std::array<double, 3>& mean_rgb,
                       Rng& rng, const std::string& source_id) {
  if (lr.width < patch || lr.height < patch) {
    throw ArgumentError("sample_patch: LR image " +
                        std::to_string(lr.width) + "x" +
                        std::to_string(lr.height) + " smaller than patch " +
                        std::to_string(patch));
  }
  if (hr.width != lr.width * s || hr.height != lr.height * s) {
    throw ShapeError("sample_patch: HR/LR sizes are not aligned at scale " +
                     std::to_string(s));
  }
  PatchPair pair;
  pair.source_id = source_id;
  pair.ox = int(rng.uniform_int(lr.width - patch + 1));
  pair.oy = int(rng.uniform_int(lr.height - patch + 1));
  pair.lr = to_tensor(crop(lr, pair.ox, pair.oy, patch, patch), mean_rgb);
  pair.hr = to_tensor(
      crop(hr, s * pair.ox, s * pair.oy, s * patch, s * patch), mean_rgb);
  return pair;
}

namespace {

Tensor flip_lr_tensor(const Tensor& t) {
  const Shape s = t.shape();
  Tensor out(s);
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t y = 0; y < s.h; ++y)
        for (int64_t x = 0; x < s.w; ++x)
          out.at(n, c, y, x) = t.at(n, c, y, s.w - 1 - x);
  return out;
}

}  // namespace

PatchPair flip_pair(const PatchPair& pair) {
  PatchPair out = pair;
  out.lr = flip_lr_tensor(pair.lr);
  out.hr = flip_lr_tensor(pair.hr);
  out.flipped = !pair.flipped;
  return out;
}

PatchPair hflip(const PatchPair& pair, Rng& rng) {
  return rng.bernoulli(0.5) ? flip_pair(pair) : pair;
}

void CorpusManifest::save(const std::string& path) const {
  ordered_json j;
  j["entries"] = ordered_json::array();
  for (const ManifestEntry& e : entries) {
    j["entries"].push_back(
        {{"id", e.id}, {"path", e.path}, {"split", e.split}});
  }
  if (has_mean) j["mean_rgb"] = {mean_rgb[0], mean_rgb[1], mean_rgb[2]};
  if (!generator.empty()) j["generator"] = ordered_json::parse(generator);
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

CorpusManifest CorpusManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw FormatError("malformed manifest " + path + ": " + e.what());
  }
  CorpusManifest m;
  if (!j.contains("entries") || !j["entries"].is_array()) {
    throw FormatError("manifest missing 'entries' array: " + path);
  }
  for (const auto& e : j["entries"]) {
    ManifestEntry entry;
    entry.id = e.at("id").get<std::string>();
    entry.path = e.at("path").get<std::string>();
    entry.split = e.at("split").get<std::string>();
    split_from_name(entry.split);  // validate
    m.entries.push_back(std::move(entry));
  }
  for (size_t i = 0; i < m.entries.size(); ++i) {
    for (size_t k = i + 1; k < m.entries.size(); ++k) {
      if (m.entries[i].id == m.entries[k].id) {
        throw FormatError("duplicate corpus id '" + m.entries[i].id + "'");
      }
    }
  }
  if (j.contains("mean_rgb")) {
    const auto& v = j["mean_rgb"];
    if (!v.is_array() || v.size() != 3) {
      throw FormatError("manifest mean_rgb must be 3 floats");
    }
    m.mean_rgb = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
    m.has_mean = true;
  }
  if (j.contains("generator")) m.generator = j["generator"].dump();
  return m;
}

std::array<double, 3> compute_mean_rgb(const std::vector<ImageBuffer>& imgs) {
  std::array<double, 3> mean{0, 0, 0};
  int64_t count = 0;
  for (const ImageBuffer& img : imgs) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c) mean[c] += img.at(x, y, c) / 255.0;
    count += int64_t(img.width) * img.height;
  }
  if (count > 0) {
    for (int c = 0; c < 3; ++c) mean[c] /= double(count);
  }
  return mean;
}

Corpus Corpus::load(const std::string& manifest_path, int scale) {
  CorpusManifest manifest = CorpusManifest::load(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();

  Corpus corpus;
  corpus.scale_ = scale;
  std::vector<ImageBuffer> train_hr;
  for (const ManifestEntry& e : manifest.entries) {
    fs::path p(e.path);
    if (p.is_relative()) p = base / p;
    CorpusImage img;
    img.id = e.id;
    img.hr = crop_to_multiple(load_png(p.string()), scale);
    img.lr = bicubic_downscale(img.hr, scale);
    switch (split_from_name(e.split)) {
      case Split::Train:
        train_hr.push_back(img.hr);
        corpus.train_.push_back(std::move(img));
        break;
      case Split::Val: corpus.val_.push_back(std::move(img)); break;
      case Split::Test: corpus.test_.push_back(std::move(img)); break;
    }
  }
  if (manifest.has_mean) {
    corpus.mean_rgb_ = manifest.mean_rgb;
  } else {
    corpus.mean_rgb_ = compute_mean_rgb(train_hr);
  }
  return corpus;
}

const std::vector<CorpusImage>& Corpus::split(Split s) const {
  switch (s) {
    case Split::Train: return train_;
    case Split::Val: return val_;
    case Split::Test: return test_;
  }
  return train_;
}

CorpusManifest generate_corpus(const SynthSpec& spec,
                               const std::string& out_dir) {
  if (spec.n_train < 1 || spec.n_val < 0 || spec.n_test < 0) {
    throw ConfigError("generate_corpus: bad split sizes");
  }
  fs::create_directories(out_dir);

  static constexpr TextureSpec::Pattern kPatterns[] = {
      TextureSpec::Pattern::Stripes, TextureSpec::Pattern::Checker,
      TextureSpec::Pattern::Grid, TextureSpec::Pattern::Moire};
  static constexpr double kPeriods[] = {3, 4, 5, 6, 8, 12};
  static constexpr double kAngles[] = {0.0, 0.35, 0.7, 1.05, 1.4};

  CorpusManifest manifest;
  std::vector<ImageBuffer> train_hr;
  const int total = spec.n_train + spec.n_val + spec.n_test;
  for (int i = 0; i < total; ++i) {
    Rng rng = Rng::substream(spec.seed, 0xDA7A, uint64_t(i));
    TextureSpec ts;
    ts.size = spec.size;
    ts.pattern = kPatterns[i % 4];
    ts.period = kPeriods[rng.uniform_int(6)];
    ts.angle = kAngles[rng.uniform_int(5)];
    ts.contrast = rng.uniform(0.6, 1.0);
    ImageBuffer img = synth_texture(ts, rng);

    char id[32];
    std::snprintf(id, sizeof(id), "synth-%05d", i);
    const std::string fname = std::string(id) + ".png";
    save_png(img, (fs::path(out_dir) / fname).string());

    ManifestEntry e;
    e.id = id;
    e.path = fname;
    e.split = i < spec.n_train ? "train"
              : i < spec.n_train + spec.n_val ? "val"
                                              : "test";
    manifest.entries.push_back(std::move(e));
    if (i < spec.n_train) train_hr.push_back(std::move(img));
  }
  manifest.mean_rgb = compute_mean_rgb(train_hr);
  manifest.has_mean = true;
  ordered_json gen;
  gen["n_train"] = spec.n_train;
  gen["n_val"] = spec.n_val;
  gen["n_test"] = spec.n_test;
  gen["size"] = spec.size;
  gen["seed"] = spec.seed;
  manifest.generator = gen.dump();
  manifest.save((fs::path(out_dir) / "manifest.json").string());
  return manifest;
}

}  // namespace lsfd
