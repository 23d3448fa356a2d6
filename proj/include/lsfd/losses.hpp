#pragma once

#include <deque>
#include <string>
#include <vector>

#include "lsfd/model.hpp"

namespace lsfd {

// Adapter applied to student features before comparison with the teacher:
// one 1x1 conv with ReLU (fitnet) or five 3x3 convs with LeakyReLU(0.1)
// (deep), every layer activated.
struct RegressorSpec {
  enum class Kind { Fitnet, Deep };
  Kind kind = Kind::Deep;
  int in_channels = 0;
  int out_channels = 0;
  int depth = 5;
  int kernel = 3;
  double slope = 0.1;

  static RegressorSpec fitnet(int in_ch, int out_ch);
  static RegressorSpec deep(int in_ch, int out_ch);
  void validate() const;
};

class Regressor {
 public:
  Regressor(const RegressorSpec& spec, std::string name_prefix,
            uint64_t seed);

  Tensor forward(Tape* tape, const Tensor& f_s);

  const RegressorSpec& spec() const { return spec_; }
  std::deque<Parameter>& parameters() { return params_; }

 private:
  RegressorSpec spec_;
  std::deque<Parameter> params_;
};

struct LossWeights {
  double alpha1 = 2000.0;
  double alpha2 = 10.0;
  double fft_weight = 1.0;
  bool use_fft = false;
  void validate() const;
};

enum class Method { Vanilla, Fitnet, Lfd, Lsfd };
std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct DistillPlan {
  Method method = Method::Vanilla;
  LossWeights weights;
  FeatureTapSet taps;
  std::vector<Regressor> regressors;  // one per tap pair; none for vanilla
  bool sfd_flow_through = false;      // let gradients pass the attention map

  // Pairs taps and instantiates regressors for the chosen method.
  static DistillPlan make(Method method, const LossWeights& weights,
                          Model& teacher, Model& student, uint64_t seed);
};

// Output loss: 1/2 (mean|sr_T - sr_S| + mean|hr - sr_S|).
Tensor sr_loss(const Tensor& sr_t, const Tensor& sr_s, const Tensor& hr);

// D = normalize(F_T) - normalize(DR(F_S)); loss = alpha1 * mean|D|.
// D is returned for reuse by the selective (lsfd) weighting.
struct LfdResult {
  Tensor loss;
  Tensor d;
};
LfdResult lfd_from_regressed(const Tensor& f_t, const Tensor& regressed,
                             double alpha1);
LfdResult lfd_loss(Tape* tape, const Tensor& f_t, const Tensor& f_s,
                   Regressor& regressor, double alpha1);

// Attention map from teacher/student output disagreement: channel-summed
// |sr_T - sr_S| pooled by the model scale and broadcast to C channels.
// Callers pass detached outputs to keep it gradient-blocked (the default).
Tensor sfd_map(const Tensor& sr_t, const Tensor& sr_s, int scale, int c);

// alpha2 * mean|sfd (x) D|.
Tensor lsfd_loss(const Tensor& d, const Tensor& sfd, double alpha2);

// mean L1 over the real and imaginary DFT difference planes.
Tensor fft_loss(const Tensor& sr_t, const Tensor& sr_s);

struct BatchOutputs {
  Tensor sr_t;  // teacher output, off-tape (frozen); empty for vanilla
  Tensor sr_s;  // student output on the training tape
  Tensor hr;
  std::vector<Tensor> taps_t;
  std::vector<Tensor> taps_s;
};

struct LossBreakdown {
  Tensor total;  // scalar tape node for backward
  double total_v = 0.0;
  double sr = 0.0;
  double distill = 0.0;
  double fft = 0.0;
};

// Composes the per-method objective; multiple taps are averaged.
LossBreakdown total_loss(Tape& tape, DistillPlan& plan,
                         const BatchOutputs& batch);

}  // namespace lsfd
