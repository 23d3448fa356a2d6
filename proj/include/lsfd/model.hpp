#pragma once

#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "lsfd/autodiff.hpp"

namespace lsfd {

enum class Variant { EdsrLike, RcanLike };

struct ModelConfig {
  Variant variant = Variant::RcanLike;
  int channels = 64;
  int n_blocks = 16;   // blocks per group (rcan) or total blocks (edsr)
  int n_groups = 10;   // rcan only
  int scale = 2;       // in {2,3,4}
  double residual_scaling = 0.0;  // 0 -> variant default (0.1 edsr, 1.0 rcan)
  int reduction = 16;  // channel-attention bottleneck ratio (rcan)
  uint64_t seed = 0;
  int n_taps = 0;      // edsr tap count; 0 -> default 4 (capped by n_blocks)

  double effective_residual_scaling() const {
    if (residual_scaling > 0.0) return residual_scaling;
    return variant == Variant::EdsrLike ? 0.1 : 1.0;
  }
  void validate() const;
};

// A small EDSR-like or RCAN-like super-resolution network.
//
//   edsr_like: head conv -> n_blocks residual blocks (conv-ReLU-conv,
//              scaled, added to input) -> tail conv + long skip ->
//              upsampler -> output conv. Taps at evenly spaced blocks.
//   rcan_like: head conv -> n_groups groups of n_blocks RCABs
//              (conv-ReLU-conv + channel attention) each closed by a group
//              conv and short skip -> tail conv + long skip -> upsampler ->
//              output conv. Taps at every group output.
//
// No normalization layers anywhere. The upsampler is conv -> pixel_shuffle
// (one x2/x3 stage; two x2 stages for scale 4).
class Model {
 public:
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const std::vector<std::string>& tap_points() const { return tap_labels_; }

  struct Out {
    Tensor sr;
    std::vector<Tensor> taps;
  };
  // tape == nullptr runs inference without recording (frozen teacher).
  Out forward(Tape* tape, const Tensor& x);

  std::deque<Parameter>& parameters() { return params_; }
  const std::deque<Parameter>& parameters() const { return params_; }
  Parameter* find(const std::string& name);
  int64_t param_count() const;

  // Reinitialize all parameters from the seed: weights uniform(-b, b) with
  // b = sqrt(1/fan_in), biases zero.
  void init_params(uint64_t seed);

 private:
  struct ConvRef {
    int w = -1, b = -1;
  };
  struct Block {
    ConvRef c1, c2;
    ConvRef ca1, ca2;  // unused for edsr_like
  };
  struct Group {
    std::vector<Block> blocks;
    ConvRef gconv;  // rcan group-closing conv
  };

  ConvRef add_conv(const std::string& name, int cout, int cin, int k);
  Tensor conv(Tape* t, const Tensor& x, const ConvRef& c, int pad);
  Tensor run_block(Tape* t, const Tensor& x, const Block& blk);

  ModelConfig config_;
  std::deque<Parameter> params_;
  ConvRef head_, tail_, out_;
  std::vector<ConvRef> up_;
  std::vector<Group> groups_;
  std::vector<std::string> tap_labels_;
  std::vector<int> tap_blocks_;  // edsr: 1-based block indices to tap
};

// Channel attention: global average pool -> 1x1 conv to C/reduction ->
// ReLU -> 1x1 conv to C -> sigmoid -> channelwise rescale of x.
Tensor channel_attention(const Tensor& x, const Tensor& w1, const Tensor& b1,
                         const Tensor& w2, const Tensor& b2);

// Teacher/student tap pairing. Student tap j (1-based) maps to teacher tap
// round(j * T / S); equal counts give the identity pairing. A student with
// more taps than its teacher has no compatible pairing.
struct FeatureTapSet {
  // (teacher tap index, student tap index), 0-based.
  std::vector<std::pair<int, int>> pairs;
  std::vector<std::pair<std::string, std::string>> labels;
};
FeatureTapSet pair_taps(const Model& teacher, const Model& student);

}  // namespace lsfd
