#include "lsfd/losses.hpp"

#include <cmath>

namespace lsfd {

RegressorSpec RegressorSpec::fitnet(int in_ch, int out_ch) {
  RegressorSpec s;
  s.kind = Kind::Fitnet;
  s.in_channels = in_ch;
  s.out_channels = out_ch;
  s.depth = 1;
  s.kernel = 1;
  s.slope = 0.0;
  return s;
}

RegressorSpec RegressorSpec::deep(int in_ch, int out_ch) {
  RegressorSpec s;
  s.kind = Kind::Deep;
  s.in_channels = in_ch;
  s.out_channels = out_ch;
  s.depth = 5;
  s.kernel = 3;
  s.slope = 0.1;
  return s;
}

void RegressorSpec::validate() const {
  if (depth < 1) throw ConfigError("regressor: depth must be >= 1");
  if (kernel != 1 && kernel != 3) {
    throw ConfigError("regressor: kernel must be 1 or 3");
  }
  if (in_channels < 1 || out_channels < 1) {
    throw ConfigError("regressor: channel counts must be >= 1");
  }
  if (slope < 0.0 || slope >= 1.0) {
    throw ConfigError("regressor: slope must be in [0,1)");
  }
}

Regressor::Regressor(const RegressorSpec& spec, std::string name_prefix,
                     uint64_t seed)
    : spec_(spec) {
  spec_.validate();
  Rng rng(seed);
  for (int layer = 1; layer <= spec_.depth; ++layer) {
    const int cin = layer == 1 ? spec_.in_channels : spec_.out_channels;
    const int cout = spec_.out_channels;
    const int k = spec_.kernel;
    Tensor w(Shape{cout, cin, k, k});
    const double bound = std::sqrt(1.0 / double(cin * k * k));
    for (int64_t i = 0; i < w.numel(); ++i) {
      w.data()[i] = rng.uniform(-bound, bound);
    }
    const std::string base = name_prefix + "conv" + std::to_string(layer);
    params_.emplace_back(std::move(w), base + ".weight");
    params_.emplace_back(Tensor(Shape{1, cout, 1, 1}), base + ".bias");
  }
}

Tensor Regressor::forward(Tape* tape, const Tensor& f_s) {
  if (f_s.shape().c != spec_.in_channels) {
    throw ShapeError("regressor: input has " + std::to_string(f_s.shape().c) +
                     " channels, expected " +
                     std::to_string(spec_.in_channels));
  }
  Tensor h = f_s;
  const int pad = (spec_.kernel - 1) / 2;
  for (int layer = 0; layer < spec_.depth; ++layer) {
    Parameter& w = params_[2 * layer];
    Parameter& b = params_[2 * layer + 1];
    Tensor wt = tape ? tape->leaf(w) : w.value;
    Tensor bt = tape ? tape->leaf(b) : b.value;
    h = leaky_relu(conv2d(h, wt, bt, pad), spec_.slope);
  }
  return h;
}

void LossWeights::validate() const {
  if (alpha1 < 0.0 || alpha2 < 0.0 || fft_weight < 0.0) {
    throw ConfigError("loss weights must be >= 0");
  }
}

std::string method_name(Method m) {
  switch (m) {
    case Method::Vanilla: return "vanilla";
    case Method::Fitnet: return "fitnet";
    case Method::Lfd: return "lfd";
    case Method::Lsfd: return "lsfd";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  if (name == "vanilla") return Method::Vanilla;
  if (name == "fitnet") return Method::Fitnet;
  if (name == "lfd") return Method::Lfd;
  if (name == "lsfd") return Method::Lsfd;
  throw ConfigError("unknown method '" + name +
                    "' (expected vanilla|fitnet|lfd|lsfd)");
}

DistillPlan DistillPlan::make(Method method, const LossWeights& weights,
                              Model& teacher, Model& student, uint64_t seed) {
  weights.validate();
  DistillPlan plan;
  plan.method = method;
  plan.weights = weights;
  if (method == Method::Vanilla) return plan;

  plan.taps = pair_taps(teacher, student);
  const int in_ch = student.config().channels;
  const int out_ch = teacher.config().channels;
  for (size_t i = 0; i < plan.taps.pairs.size(); ++i) {
    const RegressorSpec spec = method == Method::Fitnet
                                   ? RegressorSpec::fitnet(in_ch, out_ch)
                                   : RegressorSpec::deep(in_ch, out_ch);
    const uint64_t rseed = Rng::substream(seed, 0x7e6, i).next_u64();
    plan.regressors.emplace_back(
        spec, "regressor" + std::to_string(i) + ".", rseed);
  }
  return plan;
}

Tensor sr_loss(const Tensor& sr_t, const Tensor& sr_s, const Tensor& hr) {
  if (!(sr_t.shape() == sr_s.shape()) || !(hr.shape() == sr_s.shape())) {
    throw ShapeError("sr_loss: shapes differ: " + sr_t.shape().str() + ", " +
                     sr_s.shape().str() + ", " + hr.shape().str());
  }
  Tensor mimic = l1_mean(sub(sr_t, sr_s));
  Tensor fidelity = l1_mean(sub(hr, sr_s));
  return scale(add(mimic, fidelity), 0.5);
}

LfdResult lfd_from_regressed(const Tensor& f_t, const Tensor& regressed,
                             double alpha1) {
  if (!(f_t.shape() == regressed.shape())) {
    throw ShapeError("lfd: teacher feature " + f_t.shape().str() +
                     " vs regressed student feature " +
                     regressed.shape().str());
  }
  LfdResult r;
  r.d = sub(l2_normalize(f_t), l2_normalize(regressed));
  r.loss = scale(l1_mean(r.d), alpha1);
  return r;
}

LfdResult lfd_loss(Tape* tape, const Tensor& f_t, const Tensor& f_s,
                   Regressor& regressor, double alpha1) {
  return lfd_from_regressed(f_t, regressor.forward(tape, f_s), alpha1);
}

Tensor sfd_map(const Tensor& sr_t, const Tensor& sr_s, int scale, int c) {
  if (!(sr_t.shape() == sr_s.shape())) {
    throw ShapeError("sfd_map: output shapes differ");
  }
  if (sr_t.shape().c != 3) {
    throw ShapeError("sfd_map: expected 3-channel outputs, got " +
                     sr_t.shape().str());
  }
  Tensor diff = reduce(abs(sub(sr_t, sr_s)), Reduce::ChannelSum);
  return broadcast_channel(avg_pool(diff, scale), c);
}

Tensor lsfd_loss(const Tensor& d, const Tensor& sfd, double alpha2) {
  if (!(d.shape() == sfd.shape())) {
    throw ShapeError("lsfd_loss: D " + d.shape().str() + " vs SFD " +
                     sfd.shape().str());
  }
  return scale(l1_mean(mul(sfd, d)), alpha2);
}

Tensor fft_loss(const Tensor& sr_t, const Tensor& sr_s) {
  if (!(sr_t.shape() == sr_s.shape())) {
    throw ShapeError("fft_loss: output shapes differ");
  }
  // dft2 is linear, so transforming the difference equals differencing the
  // transforms; the packed layout holds both re and im planes.
  return l1_mean(dft2_packed(sub(sr_t, sr_s)));
}

LossBreakdown total_loss(Tape& tape, DistillPlan& plan,
                         const BatchOutputs& batch) {
  plan.weights.validate();
  const bool needs_teacher =
      plan.method != Method::Vanilla || plan.weights.use_fft;
  if (needs_teacher && batch.sr_t.empty()) {
    throw ConfigError("total_loss: method requires a teacher output");
  }

  LossBreakdown out;
  Tensor sr_term;
  Tensor distill_term;

  if (plan.method == Method::Vanilla) {
    sr_term = l1_mean(sub(batch.hr, batch.sr_s));
  } else {
    sr_term = sr_loss(batch.sr_t, batch.sr_s, batch.hr);

    if (plan.regressors.size() != plan.taps.pairs.size()) {
      throw ConfigError("total_loss: plan has " +
                        std::to_string(plan.regressors.size()) +
                        " regressors for " +
                        std::to_string(plan.taps.pairs.size()) + " tap pairs");
    }
    Tensor sfd;
    for (size_t i = 0; i < plan.taps.pairs.size(); ++i) {
      const auto [ti, si] = plan.taps.pairs[i];
      if (ti >= int(batch.taps_t.size()) || si >= int(batch.taps_s.size())) {
        throw ConfigError("total_loss: tap pairing exceeds provided taps");
      }
      const Tensor& f_t = batch.taps_t[ti];
      const Tensor& f_s = batch.taps_s[si];
      Tensor term;
      if (plan.method == Method::Lsfd) {
        LfdResult lfd = lfd_loss(&tape, f_t, f_s, plan.regressors[i],
                                 plan.weights.alpha1);
        if (sfd.empty()) {
          const int s = int(batch.hr.shape().h / f_s.shape().h);
          Tensor sr_s_for_map =
              plan.sfd_flow_through ? batch.sr_s : batch.sr_s.detached();
          sfd = sfd_map(batch.sr_t.detached(), sr_s_for_map, s,
                        int(f_t.shape().c));
        }
        term = lsfd_loss(lfd.d, sfd, plan.weights.alpha2);
      } else {
        term = lfd_loss(&tape, f_t, f_s, plan.regressors[i],
                        plan.weights.alpha1)
                   .loss;
      }
      distill_term = distill_term.empty() ? term : add(distill_term, term);
    }
    if (!distill_term.empty() && plan.taps.pairs.size() > 1) {
      distill_term =
          scale(distill_term, 1.0 / double(plan.taps.pairs.size()));
    }
  }

  Tensor total = sr_term;
  if (!distill_term.empty()) total = add(total, distill_term);
  Tensor fft_term;
  if (plan.weights.use_fft) {
    fft_term = scale(fft_loss(batch.sr_t, batch.sr_s),
                     plan.weights.fft_weight);
    total = add(total, fft_term);
  }

  out.total = total;
  out.total_v = total.item();
  out.sr = sr_term.item();
  out.distill = distill_term.empty() ? 0.0 : distill_term.item();
  out.fft = fft_term.empty() ? 0.0 : fft_term.item();
  return out;
}

}  // namespace lsfd
