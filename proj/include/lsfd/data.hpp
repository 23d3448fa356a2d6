#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "lsfd/image.hpp"

namespace lsfd {

enum class Split { Train, Val, Test };
std::string split_name(Split s);
Split split_from_name(const std::string& name);

// Procedural repetitive-texture generator. Patterns are deterministic in
// (spec, rng stream); the rng only perturbs phases so structural laws
// (periodicity, angle) stay exact.
struct TextureSpec {
  enum class Pattern { Stripes, Checker, Grid, Moire };
  int size = 64;
  Pattern pattern = Pattern::Stripes;
  double period = 8.0;   // pixels, >= 2
  double angle = 0.0;    // radians; 0 varies along y (constant rows)
  double contrast = 1.0; // 0 gives a constant image
};
ImageBuffer synth_texture(const TextureSpec& spec, Rng& rng);

// Aligned training crop in normalized tensor form.
struct PatchPair {
  Tensor lr;  // (1,3,p,p)
  Tensor hr;  // (1,3,S*p,S*p)
  std::string source_id;
  int ox = 0, oy = 0;  // LR crop offset; the HR crop sits at (S*ox, S*oy)
  bool flipped = false;
};

// Uniform random patch; the x offset is drawn before the y offset.
PatchPair sample_patch(const ImageBuffer& hr, const ImageBuffer& lr, int s,
                       int patch, const std::array<double, 3>& mean_rgb,
                       Rng& rng, const std::string& source_id = "");

// Mirrors both crops left-right (the only augmentation; no rotation).
PatchPair flip_pair(const PatchPair& pair);
// Applies flip_pair with probability 1/2.
PatchPair hflip(const PatchPair& pair, Rng& rng);

struct ManifestEntry {
  std::string id;
  std::string path;
  std::string split;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::array<double, 3> mean_rgb{0, 0, 0};
  bool has_mean = false;
  std::string generator;  // provenance blob for synthetic corpora

  void save(const std::string& path) const;
  static CorpusManifest load(const std::string& path);
};

struct CorpusImage {
  std::string id;
  ImageBuffer hr;
  ImageBuffer lr;
};

// Images grouped by split with LR planes derived by bicubic downscaling of
// the (pre-cropped) HR originals. mean_rgb comes from the manifest or, if
// absent there, from the train split.
class Corpus {
 public:
  static Corpus load(const std::string& manifest_path, int scale);

  const std::vector<CorpusImage>& split(Split s) const;
  const std::array<double, 3>& mean_rgb() const { return mean_rgb_; }
  int scale() const { return scale_; }

 private:
  std::vector<CorpusImage> train_, val_, test_;
  std::array<double, 3> mean_rgb_{0, 0, 0};
  int scale_ = 2;
};

std::array<double, 3> compute_mean_rgb(const std::vector<ImageBuffer>& imgs);

// Synthetic corpus: size x size HR textures cycling through the patterns
// with seeded periods, angles, contrasts and phases.
struct SynthSpec {
  int n_train = 200;
  int n_val = 32;
  int n_test = 0;
  int size = 64;
  uint64_t seed = 0;
};
// Writes <id>.png files plus manifest.json into out_dir; returns the
// manifest. Fully reproducible from (spec.seed, spec).
CorpusManifest generate_corpus(const SynthSpec& spec,
                               const std::string& out_dir);

}  // namespace lsfd
