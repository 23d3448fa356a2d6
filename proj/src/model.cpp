#include "lsfd/model.hpp"

#include <cmath>

namespace lsfd {

void ModelConfig::validate() const {
  if (channels < 1) throw ConfigError("model: channels must be >= 1");
  if (n_blocks < 1) throw ConfigError("model: n_blocks must be >= 1");
  if (scale < 2 || scale > 4) {
    throw ConfigError("model: scale must be in {2,3,4}");
  }
  if (variant == Variant::RcanLike) {
    if (n_groups < 1) throw ConfigError("model: n_groups must be >= 1");
    if (channels < reduction) {
      throw ConfigError("model: channels must be >= reduction");
    }
    if (reduction < 1 || channels % reduction != 0) {
      throw ConfigError("model: channels must be divisible by reduction");
    }
  }
  if (n_taps < 0) throw ConfigError("model: n_taps must be >= 0");
}

Model::ConvRef Model::add_conv(const std::string& name, int cout, int cin,
                               int k) {
  ConvRef ref;
  ref.w = static_cast<int>(params_.size());
  params_.emplace_back(Tensor(Shape{cout, cin, k, k}), name + ".weight");
  ref.b = static_cast<int>(params_.size());
  params_.emplace_back(Tensor(Shape{1, cout, 1, 1}), name + ".bias");
  return ref;
}

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int C = config_.channels;

  head_ = add_conv("head", C, 3, 3);

  const bool rcan = config_.variant == Variant::RcanLike;
  const int n_groups = rcan ? config_.n_groups : 1;
  for (int g = 1; g <= n_groups; ++g) {
    Group group;
    const std::string gp =
        rcan ? "group" + std::to_string(g) + "." : std::string();
    for (int bi = 1; bi <= config_.n_blocks; ++bi) {
      Block blk;
      const std::string bp = gp + "block" + std::to_string(bi) + ".";
      blk.c1 = add_conv(bp + "conv1", C, C, 3);
      blk.c2 = add_conv(bp + "conv2", C, C, 3);
      if (rcan) {
        const int cr = C / config_.reduction;
        blk.ca1 = add_conv(bp + "ca.conv1", cr, C, 1);
        blk.ca2 = add_conv(bp + "ca.conv2", C, cr, 1);
      }
      group.blocks.push_back(blk);
    }
    if (rcan) group.gconv = add_conv(gp + "conv", C, C, 3);
    groups_.push_back(std::move(group));
  }

  tail_ = add_conv("tail", C, C, 3);

  if (config_.scale == 4) {
    up_.push_back(add_conv("up1", 4 * C, C, 3));
    up_.push_back(add_conv("up2", 4 * C, C, 3));
  } else {
    const int r2 = config_.scale * config_.scale;
    up_.push_back(add_conv("up1", r2 * C, C, 3));
  }
  out_ = add_conv("out", 3, C, 3);

  if (rcan) {
    for (int g = 1; g <= n_groups; ++g) {
      tap_labels_.push_back("group_out/" + std::to_string(g));
    }
  } else {
    const int want = config_.n_taps > 0 ? config_.n_taps : 4;
    const int t = std::min(want, config_.n_blocks);
    for (int j = 1; j <= t; ++j) {
      const int idx =
          static_cast<int>(std::lround(double(j) * config_.n_blocks / t));
      tap_blocks_.push_back(idx);
      tap_labels_.push_back("block_out/" + std::to_string(idx));
    }
  }

  init_params(config_.seed);
}

void Model::init_params(uint64_t seed) {
  Rng rng(seed);
  for (Parameter& p : params_) {
    const Shape s = p.value.shape();
    if (p.name.size() >= 7 &&
        p.name.compare(p.name.size() - 7, 7, ".weight") == 0) {
      const double bound = std::sqrt(1.0 / double(s.c * s.h * s.w));
      for (int64_t i = 0; i < p.value.numel(); ++i) {
        p.value.data()[i] = rng.uniform(-bound, bound);
      }
    } else {
      std::fill(p.value.data(), p.value.data() + p.value.numel(), 0.0);
    }
  }
}

Parameter* Model::find(const std::string& name) {
  for (Parameter& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

int64_t Model::param_count() const {
  int64_t total = 0;
  for (const Parameter& p : params_) total += p.value.numel();
  return total;
}

Tensor Model::conv(Tape* t, const Tensor& x, const ConvRef& c, int pad) {
  Tensor w = t ? t->leaf(params_[c.w]) : params_[c.w].value;
  Tensor b = t ? t->leaf(params_[c.b]) : params_[c.b].value;
  return conv2d(x, w, b, pad);
}

Tensor channel_attention(const Tensor& x, const Tensor& w1, const Tensor& b1,
                         const Tensor& w2, const Tensor& b2) {
  const int64_t c = x.shape().c, cr = w1.shape().n;
  if (cr < 1 || c % cr != 0) {
    throw ConfigError("channel_attention: bottleneck width " +
                      std::to_string(cr) + " does not divide C=" +
                      std::to_string(c));
  }
  Tensor s = channel_mean(x);
  s = conv2d(s, w1, b1, 0);
  s = leaky_relu(s, 0.0);
  s = conv2d(s, w2, b2, 0);
  s = sigmoid(s);
  return scale_channels(x, s);
}

Tensor Model::run_block(Tape* t, const Tensor& x, const Block& blk) {
  auto bind = [&](int idx) { return t ? t->leaf(params_[idx]) : params_[idx].value; };
  Tensor h = conv(t, x, blk.c1, 1);
  h = leaky_relu(h, 0.0);
  h = conv(t, h, blk.c2, 1);
  if (config_.variant == Variant::RcanLike) {
    h = channel_attention(h, bind(blk.ca1.w), bind(blk.ca1.b),
                          bind(blk.ca2.w), bind(blk.ca2.b));
  }
  const double rs = config_.effective_residual_scaling();
  if (rs != 1.0) h = scale(h, rs);
  return add(x, h);
}

Model::Out Model::forward(Tape* tape, const Tensor& x) {
  if (x.shape().c != 3) {
    throw ShapeError("model: input must have 3 channels, got " +
                     x.shape().str());
  }
  Out result;
  Tensor h0 = conv(tape, x, head_, 1);
  Tensor h = h0;
  const bool rcan = config_.variant == Variant::RcanLike;
  for (size_t g = 0; g < groups_.size(); ++g) {
    Tensor gin = h;
    int block_index = 0;
    for (const Block& blk : groups_[g].blocks) {
      h = run_block(tape, h, blk);
      ++block_index;
      if (!rcan) {
        for (size_t j = 0; j < tap_blocks_.size(); ++j) {
          if (tap_blocks_[j] == block_index) result.taps.push_back(h);
        }
      }
    }
    if (rcan) {
      h = conv(tape, h, groups_[g].gconv, 1);
      h = add(gin, h);
      result.taps.push_back(h);
    }
  }
  h = conv(tape, h, tail_, 1);
  h = add(h0, h);  // long skip
  for (const ConvRef& up : up_) {
    h = conv(tape, h, up, 1);
    h = pixel_shuffle(h, config_.scale == 4 ? 2 : config_.scale);
  }
  result.sr = conv(tape, h, out_, 1);
  return result;
}

FeatureTapSet pair_taps(const Model& teacher, const Model& student) {
  const auto& tt = teacher.tap_points();
  const auto& st = student.tap_points();
  const int T = static_cast<int>(tt.size());
  const int S = static_cast<int>(st.size());
  if (T < 1 || S < 1) {
    throw ConfigError("pair_taps: both models need at least one tap");
  }
  if (S > T) {
    throw ConfigError("pair_taps: student has more taps (" +
                      std::to_string(S) + ") than teacher (" +
                      std::to_string(T) + "); no compatible pairing");
  }
  FeatureTapSet set;
  for (int j = 1; j <= S; ++j) {
    const int ti = static_cast<int>(std::lround(double(j) * T / S));
    set.pairs.emplace_back(ti - 1, j - 1);
    set.labels.emplace_back(tt[ti - 1], st[j - 1]);
  }
  return set;
}

}  // namespace lsfd
