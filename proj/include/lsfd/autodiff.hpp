#pragma once

#include <array>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lsfd/tensor.hpp"

namespace lsfd {

// Trainable tensor. grad is allocated lazily (zeros of value's shape) the
// first time it is touched; Tape::backward overwrites it for every
// parameter registered on that tape.
struct Parameter {
  Tensor value;
  Tensor grad;
  std::string name;

  Parameter() = default;
  Parameter(Tensor v, std::string n) : value(std::move(v)), name(std::move(n)) {}

  // Grad as zeros if backward never reached this parameter.
  Tensor& ensure_grad();
};

enum class Pointwise { Add, Sub, Mul };
enum class Reduce { L1Mean, Mean, Sum, ChannelSum };

enum class Op {
  Leaf,
  Conv2d,
  LeakyRelu,
  PwAdd,
  PwSub,
  PwMul,
  Scale,
  AvgPool,
  ChannelMean,
  BroadcastChannel,
  PixelShuffle,
  L2Normalize,
  ReduceOp,
  Abs,
  Sigmoid,
  ScaleChannels,
  Dft2Packed,
  SliceChannels,
};

// Reverse-mode tape. Ops executed on tensors bound to a tape append nodes;
// backward() runs one reverse-topological sweep and fills Parameter.grad
// for every parameter leafed onto this tape (gradients of parameters that
// the loss does not reach come out as zeros). Single-threaded; nodes hold
// shared references to the forward buffers, so no values are copied.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Bind a value as a leaf. track=true requests a gradient for it.
  Tensor leaf(const Tensor& value, bool track = false);
  // Bind a parameter; its grad is written by backward().
  Tensor leaf(Parameter& p);

  // loss must be a scalar produced on this tape.
  void backward(const Tensor& loss);

  // Gradient w.r.t. any tensor of this tape (zeros if none flowed).
  Tensor grad(const Tensor& t) const;

  size_t size() const { return nodes_.size(); }
  void clear();

  // Internal: used by the op implementations.
  struct Node {
    Op op = Op::Leaf;
    std::array<int, 3> in{-1, -1, -1};
    Tensor out;
    bool track = false;       // some tracked leaf feeds this node
    double scalar = 0.0;      // slope / scale factor
    int i0 = 0, i1 = 0;       // op ints: pad, k, C, r, slice bounds, kind
    Parameter* param = nullptr;
  };
  int record(Op op, std::array<int, 3> in, Tensor& out, double scalar = 0.0,
             int i0 = 0, int i1 = 0);
  const Node& node(int i) const { return nodes_[i]; }

 private:
  std::vector<double>& grad_buf(int node, int64_t numel);
  void backprop(int i);

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  std::vector<std::pair<int, Parameter*>> param_nodes_;
};

// --- Ops -------------------------------------------------------------
//
// Every op works eagerly on unbound tensors and records a tape node when
// any input is bound. Mixing tensors from two different tapes is a
// ContractError. No implicit broadcasting anywhere; shapes must match
// exactly unless the op says otherwise.

// 3x3 or 1x1 convolution, stride 1, zero padding pad=(k-1)/2 ("same").
// x: (N,Cin,H,W), w: (Cout,Cin,k,k), b: (1,Cout,1,1).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int pad);

// max(x, slope*x); the subgradient at exactly 0 is the negative-side slope.
Tensor leaky_relu(const Tensor& x, double slope);

Tensor pointwise(const Tensor& x, const Tensor& y, Pointwise kind);
inline Tensor add(const Tensor& x, const Tensor& y) {
  return pointwise(x, y, Pointwise::Add);
}
inline Tensor sub(const Tensor& x, const Tensor& y) {
  return pointwise(x, y, Pointwise::Sub);
}
inline Tensor mul(const Tensor& x, const Tensor& y) {
  return pointwise(x, y, Pointwise::Mul);
}
Tensor scale(const Tensor& x, double s);

// Non-overlapping k x k mean pooling; H and W must be divisible by k.
Tensor avg_pool(const Tensor& x, int k);

// Per-channel spatial mean: (N,C,H,W) -> (N,C,1,1).
Tensor channel_mean(const Tensor& x);

// (N,1,H,W) -> (N,C,H,W); backward sums over the broadcast channels.
Tensor broadcast_channel(const Tensor& x, int c);

// (N, r^2*C, H, W) -> (N, C, rH, rW) sub-pixel rearrangement.
Tensor pixel_shuffle(const Tensor& x, int r);

// Per-sample unit L2 norm over all C*H*W elements. A sample with norm
// <= 1e-12 raises DegenerateInputError.
Tensor l2_normalize(const Tensor& x);

// L1Mean/Mean/Sum reduce to a scalar; ChannelSum maps (N,3,H,W)->(N,1,H,W).
Tensor reduce(const Tensor& x, Reduce kind);
inline Tensor l1_mean(const Tensor& x) { return reduce(x, Reduce::L1Mean); }
inline Tensor reduce_sum(const Tensor& x) { return reduce(x, Reduce::Sum); }

// |x| with subgradient 0 at exactly 0.
Tensor abs(const Tensor& x);

Tensor sigmoid(const Tensor& x);

// x: (N,C,H,W) scaled channelwise by s: (N,C,1,1).
Tensor scale_channels(const Tensor& x, const Tensor& s);

// 2-D DFT of every (sample, channel) plane; returns (re, im) of the same
// spatial shape. Linear, so backward is the adjoint transform.
std::pair<Tensor, Tensor> dft2(const Tensor& x);
// Fused layout used internally: (N,2C,H,W) with re planes then im planes.
Tensor dft2_packed(const Tensor& x);

// Channel range [c0, c1) as a copy; backward scatters into the range.
Tensor slice_channels(const Tensor& x, int c0, int c1);

// Central-difference check of f: Tensor -> scalar against the tape
// gradient. Returns max relative error with denominator max(|a|,|n|,1e-8).
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double eps = 1e-6);

// Seeded random tensor with |values| in [lo_mag, hi_mag], random signs.
// Keeps leaky-relu / l1 kink neighborhoods out of gradient checks.
Tensor random_signed(Shape s, Rng& rng, double lo_mag = 0.2,
                     double hi_mag = 1.0);
Tensor random_uniform(Shape s, Rng& rng, double lo, double hi);

// Per-op finite-difference suite on seeded inputs; returns (op name,
// max relative error) pairs. All entries are expected below 1e-5.
std::vector<std::pair<std::string, double>> gradcheck_suite();

}  // namespace lsfd
