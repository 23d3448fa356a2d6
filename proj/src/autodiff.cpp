#include "lsfd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace lsfd {

namespace {

// Valid y range when reading plane[y + d] for y in [0, H).
inline void shift_range(int d, int extent, int& lo, int& hi) {
  lo = std::max(0, -d);
  hi = extent - std::max(0, d);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError(std::string(what) + ": shape mismatch " +
                     a.shape().str() + " vs " + b.shape().str());
  }
}

// Resolve the tape shared by the inputs (ContractError on a mix of tapes),
// binding unbound inputs as constant leaves when a tape is present.
Tape* resolve_tape(std::initializer_list<const Tensor*> ins) {
  Tape* tape = nullptr;
  for (const Tensor* t : ins) {
    if (!t || !t->on_tape()) continue;
    if (tape && tape != t->tape()) {
      throw ContractError("operands belong to two different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

int node_id(Tape* tape, const Tensor& t) {
  if (t.on_tape()) return t.node();
  // Constant leaf so backward can walk past it.
  return tape->leaf(t, false).node();
}

void maybe_record(Op op, std::initializer_list<const Tensor*> ins, Tensor& out,
                  double scalar = 0.0, int i0 = 0, int i1 = 0) {
  Tape* tape = resolve_tape(ins);
  if (!tape) return;
  std::array<int, 3> ids{-1, -1, -1};
  size_t k = 0;
  for (const Tensor* t : ins) ids[k++] = node_id(tape, *t);
  tape->record(op, ids, out, scalar, i0, i1);
}

// --- conv2d kernels ---------------------------------------------------

void conv2d_forward(const double* x, const double* w, const double* b,
                    double* out, int N, int Cin, int H, int W, int Cout,
                    int k, int pad) {
  const int64_t plane = int64_t(H) * W;
  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Cout; ++co) {
      double* op = out + (int64_t(n) * Cout + co) * plane;
      std::fill(op, op + plane, b[co]);
      for (int ci = 0; ci < Cin; ++ci) {
        const double* ip = x + (int64_t(n) * Cin + ci) * plane;
        const double* wp = w + (int64_t(co) * Cin + ci) * k * k;
        for (int ky = 0; ky < k; ++ky) {
          const int dy = ky - pad;
          int y0, y1;
          shift_range(dy, H, y0, y1);
          for (int kx = 0; kx < k; ++kx) {
            const int dx = kx - pad;
            int x0, x1;
            shift_range(dx, W, x0, x1);
            const double wv = wp[ky * k + kx];
            for (int y = y0; y < y1; ++y) {
              double* orow = op + int64_t(y) * W;
              const double* irow = ip + int64_t(y + dy) * W + dx;
              for (int xx = x0; xx < x1; ++xx) orow[xx] += wv * irow[xx];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_x(const double* g, const double* w, double* gx, int N,
                       int Cin, int H, int W, int Cout, int k, int pad) {
  const int64_t plane = int64_t(H) * W;
  for (int n = 0; n < N; ++n) {
    for (int ci = 0; ci < Cin; ++ci) {
      double* gp = gx + (int64_t(n) * Cin + ci) * plane;
      for (int co = 0; co < Cout; ++co) {
        const double* op = g + (int64_t(n) * Cout + co) * plane;
        const double* wp = w + (int64_t(co) * Cin + ci) * k * k;
        for (int ky = 0; ky < k; ++ky) {
          const int e = pad - ky;  // reading g[u + e]
          int u0, u1;
          shift_range(e, H, u0, u1);
          for (int kx = 0; kx < k; ++kx) {
            const int f = pad - kx;
            int v0, v1;
            shift_range(f, W, v0, v1);
            const double wv = wp[ky * k + kx];
            for (int u = u0; u < u1; ++u) {
              double* grow = gp + int64_t(u) * W;
              const double* orow = op + int64_t(u + e) * W + f;
              for (int v = v0; v < v1; ++v) grow[v] += wv * orow[v];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_w(const double* g, const double* x, double* gw, int N,
                       int Cin, int H, int W, int Cout, int k, int pad) {
  const int64_t plane = int64_t(H) * W;
  for (int co = 0; co < Cout; ++co) {
    for (int ci = 0; ci < Cin; ++ci) {
      double* wp = gw + (int64_t(co) * Cin + ci) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        const int dy = ky - pad;
        int y0, y1;
        shift_range(dy, H, y0, y1);
        for (int kx = 0; kx < k; ++kx) {
          const int dx = kx - pad;
          int x0, x1;
          shift_range(dx, W, x0, x1);
          double s = 0.0;
          for (int n = 0; n < N; ++n) {
            const double* op = g + (int64_t(n) * Cout + co) * plane;
            const double* ip = x + (int64_t(n) * Cin + ci) * plane;
            for (int y = y0; y < y1; ++y) {
              const double* orow = op + int64_t(y) * W;
              const double* irow = ip + int64_t(y + dy) * W + dx;
              for (int xx = x0; xx < x1; ++xx) s += orow[xx] * irow[xx];
            }
          }
          wp[ky * k + kx] += s;
        }
      }
    }
  }
}

void conv2d_backward_b(const double* g, double* gb, int N, int Cout,
                       int64_t plane) {
  for (int co = 0; co < Cout; ++co) {
    double s = 0.0;
    for (int n = 0; n < N; ++n) {
      const double* op = g + (int64_t(n) * Cout + co) * plane;
      for (int64_t i = 0; i < plane; ++i) s += op[i];
    }
    gb[co] += s;
  }
}

// --- DFT --------------------------------------------------------------

struct Twiddle {
  std::vector<double> cos_t, sin_t;
  explicit Twiddle(int n, int sign) : cos_t(n), sin_t(n) {
    for (int i = 0; i < n; ++i) {
      const double a = 2.0 * M_PI * i / n;
      cos_t[i] = std::cos(a);
      sin_t[i] = sign * std::sin(a);
    }
  }
};

// out(u,v) = sum_{y,x} f(y,x) * e^{i*sign*2pi*(u*y/H + v*x/W)} for complex
// f = re + i*im (im may be null). Separable; twiddles indexed mod H / mod W
// so periodicity is exact.
void dft2_plane(const double* re, const double* im, double* out_re,
                double* out_im, int H, int W, int sign) {
  const Twiddle th(H, sign), tw(W, sign);
  std::vector<double> tr(int64_t(H) * W), ti(int64_t(H) * W);
  for (int u = 0; u < H; ++u) {
    for (int x = 0; x < W; ++x) {
      double ar = 0.0, ai = 0.0;
      for (int y = 0; y < H; ++y) {
        const int idx = int(int64_t(u) * y % H);
        const double c = th.cos_t[idx], s = th.sin_t[idx];
        const double fr = re[int64_t(y) * W + x];
        const double fi = im ? im[int64_t(y) * W + x] : 0.0;
        ar += fr * c - fi * s;
        ai += fr * s + fi * c;
      }
      tr[int64_t(u) * W + x] = ar;
      ti[int64_t(u) * W + x] = ai;
    }
  }
  for (int u = 0; u < H; ++u) {
    for (int v = 0; v < W; ++v) {
      double ar = 0.0, ai = 0.0;
      for (int x = 0; x < W; ++x) {
        const int idx = int(int64_t(v) * x % W);
        const double c = tw.cos_t[idx], s = tw.sin_t[idx];
        const double fr = tr[int64_t(u) * W + x];
        const double fi = ti[int64_t(u) * W + x];
        ar += fr * c - fi * s;
        ai += fr * s + fi * c;
      }
      out_re[int64_t(u) * W + v] = ar;
      if (out_im) out_im[int64_t(u) * W + v] = ai;
    }
  }
}

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

// --- Parameter ---------------------------------------------------------

Tensor& Parameter::ensure_grad() {
  if (grad.empty() || !(grad.shape() == value.shape())) {
    grad = Tensor(value.shape());
  }
  return grad;
}

// --- Tape --------------------------------------------------------------

int Tape::record(Op op, std::array<int, 3> in, Tensor& out, double scalar,
                 int i0, int i1) {
  Node node;
  node.op = op;
  node.in = in;
  node.scalar = scalar;
  node.i0 = i0;
  node.i1 = i1;
  for (int id : in) {
    if (id >= 0 && nodes_[id].track) node.track = true;
  }
  const int id = static_cast<int>(nodes_.size());
  out.tape_ = this;
  out.node_ = id;
  node.out = out;
  nodes_.push_back(std::move(node));
  return id;
}

Tensor Tape::leaf(const Tensor& value, bool track) {
  Tensor bound = value.detached();
  Node node;
  node.op = Op::Leaf;
  node.track = track;
  const int id = static_cast<int>(nodes_.size());
  bound.tape_ = this;
  bound.node_ = id;
  node.out = bound;
  nodes_.push_back(std::move(node));
  return bound;
}

Tensor Tape::leaf(Parameter& p) {
  Tensor bound = leaf(p.value, true);
  nodes_[bound.node()].param = &p;
  param_nodes_.emplace_back(bound.node(), &p);
  return bound;
}

void Tape::clear() {
  nodes_.clear();
  grads_.clear();
  param_nodes_.clear();
}

std::vector<double>& Tape::grad_buf(int node, int64_t numel) {
  if (grads_[node].empty()) grads_[node].assign(numel, 0.0);
  return grads_[node];
}

Tensor Tape::grad(const Tensor& t) const {
  if (t.tape() != this) {
    throw ContractError("grad() queried for a tensor not on this tape");
  }
  const Shape s = t.shape();
  if (t.node() < static_cast<int>(grads_.size()) &&
      !grads_[t.node()].empty()) {
    return Tensor(s, grads_[t.node()]);
  }
  return Tensor(s);
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) {
    throw ContractError("backward: loss tensor is not on this tape");
  }
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be scalar, got " +
                        loss.shape().str());
  }
  grads_.assign(nodes_.size(), {});
  grad_buf(loss.node(), 1)[0] = 1.0;
  for (int i = loss.node(); i >= 0; --i) {
    if (grads_[i].empty() || !nodes_[i].track) continue;
    if (nodes_[i].op == Op::Leaf) continue;
    backprop(i);
  }
  for (auto& [nid, p] : param_nodes_) {
    Tensor& g = p->ensure_grad();
    std::fill(g.data(), g.data() + g.numel(), 0.0);
    if (!grads_[nid].empty()) {
      const std::vector<double>& src = grads_[nid];
      std::copy(src.begin(), src.end(), g.data());
    }
  }
}

void Tape::backprop(int i) {
  const Node& nd = nodes_[i];
  const std::vector<double>& g = grads_[i];
  const Shape os = nd.out.shape();
  auto in_tensor = [&](int slot) -> const Tensor& {
    return nodes_[nd.in[slot]].out;
  };
  auto tracked = [&](int slot) {
    return nd.in[slot] >= 0 && nodes_[nd.in[slot]].track;
  };
  auto buf = [&](int slot) -> std::vector<double>& {
    return grad_buf(nd.in[slot], in_tensor(slot).numel());
  };

  switch (nd.op) {
    case Op::Leaf:
      break;
    case Op::Conv2d: {
      const Tensor& x = in_tensor(0);
      const Tensor& w = in_tensor(1);
      const Shape xs = x.shape(), ws = w.shape();
      const int pad = nd.i0, k = int(ws.h);
      if (tracked(0)) {
        conv2d_backward_x(g.data(), w.data(), buf(0).data(), int(xs.n),
                          int(xs.c), int(xs.h), int(xs.w), int(ws.n), k, pad);
      }
      if (tracked(1)) {
        conv2d_backward_w(g.data(), x.data(), buf(1).data(), int(xs.n),
                          int(xs.c), int(xs.h), int(xs.w), int(ws.n), k, pad);
      }
      if (tracked(2)) {
        conv2d_backward_b(g.data(), buf(2).data(), int(xs.n), int(ws.n),
                          xs.h * xs.w);
      }
      break;
    }
    case Op::LeakyRelu: {
      if (!tracked(0)) break;
      const double* x = in_tensor(0).data();
      std::vector<double>& gx = buf(0);
      const double slope = nd.scalar;
      for (int64_t j = 0; j < os.numel(); ++j) {
        gx[j] += g[j] * (x[j] > 0.0 ? 1.0 : slope);
      }
      break;
    }
    case Op::PwAdd:
    case Op::PwSub:
    case Op::PwMul: {
      const int64_t m = os.numel();
      if (tracked(0)) {
        std::vector<double>& gx = buf(0);
        if (nd.op == Op::PwMul) {
          const double* y = in_tensor(1).data();
          for (int64_t j = 0; j < m; ++j) gx[j] += g[j] * y[j];
        } else {
          for (int64_t j = 0; j < m; ++j) gx[j] += g[j];
        }
      }
      if (tracked(1)) {
        std::vector<double>& gy = buf(1);
        if (nd.op == Op::PwMul) {
          const double* x = in_tensor(0).data();
          for (int64_t j = 0; j < m; ++j) gy[j] += g[j] * x[j];
        } else if (nd.op == Op::PwSub) {
          for (int64_t j = 0; j < m; ++j) gy[j] -= g[j];
        } else {
          for (int64_t j = 0; j < m; ++j) gy[j] += g[j];
        }
      }
      break;
    }
    case Op::Scale: {
      if (!tracked(0)) break;
      std::vector<double>& gx = buf(0);
      for (int64_t j = 0; j < os.numel(); ++j) gx[j] += g[j] * nd.scalar;
      break;
    }
    case Op::AvgPool: {
      if (!tracked(0)) break;
      const Shape xs = in_tensor(0).shape();
      std::vector<double>& gx = buf(0);
      const int k = nd.i0;
      const double inv = 1.0 / (double(k) * k);
      const int64_t oh = os.h, ow = os.w;
      for (int64_t n = 0; n < xs.n; ++n)
        for (int64_t c = 0; c < xs.c; ++c) {
          const double* gp = g.data() + (n * xs.c + c) * oh * ow;
          double* gxp = gx.data() + (n * xs.c + c) * xs.h * xs.w;
          for (int64_t y = 0; y < xs.h; ++y)
            for (int64_t x = 0; x < xs.w; ++x)
              gxp[y * xs.w + x] += gp[(y / k) * ow + (x / k)] * inv;
        }
      break;
    }
    case Op::ChannelMean: {
      if (!tracked(0)) break;
      const Shape xs = in_tensor(0).shape();
      std::vector<double>& gx = buf(0);
      const double inv = 1.0 / double(xs.h * xs.w);
      for (int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
        const double gv = g[nc] * inv;
        double* gxp = gx.data() + nc * xs.h * xs.w;
        for (int64_t j = 0; j < xs.h * xs.w; ++j) gxp[j] += gv;
      }
      break;
    }
    case Op::BroadcastChannel: {
      if (!tracked(0)) break;
      const Shape xs = in_tensor(0).shape();
      std::vector<double>& gx = buf(0);
      const int64_t plane = xs.h * xs.w;
      for (int64_t n = 0; n < os.n; ++n)
        for (int64_t c = 0; c < os.c; ++c) {
          const double* gp = g.data() + (n * os.c + c) * plane;
          double* gxp = gx.data() + n * plane;
          for (int64_t j = 0; j < plane; ++j) gxp[j] += gp[j];
        }
      break;
    }
    case Op::PixelShuffle: {
      if (!tracked(0)) break;
      const Shape xs = in_tensor(0).shape();
      std::vector<double>& gx = buf(0);
      const int r = nd.i0;
      for (int64_t n = 0; n < os.n; ++n)
        for (int64_t c = 0; c < os.c; ++c)
          for (int64_t y = 0; y < xs.h; ++y)
            for (int64_t x = 0; x < xs.w; ++x)
              for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx) {
                  const int64_t ic = (c * r + dy) * r + dx;
                  const int64_t oy = y * r + dy, ox = x * r + dx;
                  gx[((n * xs.c + ic) * xs.h + y) * xs.w + x] +=
                      g[((n * os.c + c) * os.h + oy) * os.w + ox];
                }
      break;
    }
    case Op::L2Normalize: {
      if (!tracked(0)) break;
      const Tensor& x = in_tensor(0);
      const Shape xs = x.shape();
      std::vector<double>& gx = buf(0);
      const int64_t m = xs.c * xs.h * xs.w;
      for (int64_t n = 0; n < xs.n; ++n) {
        const double* xp = x.data() + n * m;
        const double* gp = g.data() + n * m;
        double nrm2 = 0.0, dot = 0.0;
        for (int64_t j = 0; j < m; ++j) nrm2 += xp[j] * xp[j];
        const double nrm = std::sqrt(nrm2);
        for (int64_t j = 0; j < m; ++j) dot += gp[j] * xp[j];
        const double a = 1.0 / nrm, b = dot / (nrm2 * nrm);
        double* gxp = gx.data() + n * m;
        for (int64_t j = 0; j < m; ++j) gxp[j] += gp[j] * a - xp[j] * b;
      }
      break;
    }
    case Op::ReduceOp: {
      if (!tracked(0)) break;
      const Tensor& x = in_tensor(0);
      const int64_t m = x.numel();
      std::vector<double>& gx = buf(0);
      switch (static_cast<Reduce>(nd.i0)) {
        case Reduce::L1Mean: {
          const double* xp = x.data();
          const double gv = g[0] / double(m);
          for (int64_t j = 0; j < m; ++j) gx[j] += gv * sign_of(xp[j]);
          break;
        }
        case Reduce::Mean: {
          const double gv = g[0] / double(m);
          for (int64_t j = 0; j < m; ++j) gx[j] += gv;
          break;
        }
        case Reduce::Sum: {
          for (int64_t j = 0; j < m; ++j) gx[j] += g[0];
          break;
        }
        case Reduce::ChannelSum: {
          const Shape xs = x.shape();
          const int64_t plane = xs.h * xs.w;
          for (int64_t n = 0; n < xs.n; ++n)
            for (int64_t c = 0; c < xs.c; ++c) {
              double* gxp = gx.data() + (n * xs.c + c) * plane;
              const double* gp = g.data() + n * plane;
              for (int64_t j = 0; j < plane; ++j) gxp[j] += gp[j];
            }
          break;
        }
      }
      break;
    }
    case Op::Abs: {
      if (!tracked(0)) break;
      const double* x = in_tensor(0).data();
      std::vector<double>& gx = buf(0);
      for (int64_t j = 0; j < os.numel(); ++j) gx[j] += g[j] * sign_of(x[j]);
      break;
    }
    case Op::Sigmoid: {
      if (!tracked(0)) break;
      const double* s = nd.out.data();
      std::vector<double>& gx = buf(0);
      for (int64_t j = 0; j < os.numel(); ++j)
        gx[j] += g[j] * s[j] * (1.0 - s[j]);
      break;
    }
    case Op::ScaleChannels: {
      const Tensor& x = in_tensor(0);
      const Tensor& s = in_tensor(1);
      const Shape xs = x.shape();
      const int64_t plane = xs.h * xs.w;
      if (tracked(0)) {
        std::vector<double>& gx = buf(0);
        for (int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
          const double sv = s.data()[nc];
          const double* gp = g.data() + nc * plane;
          double* gxp = gx.data() + nc * plane;
          for (int64_t j = 0; j < plane; ++j) gxp[j] += gp[j] * sv;
        }
      }
      if (tracked(1)) {
        std::vector<double>& gs = buf(1);
        for (int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
          const double* gp = g.data() + nc * plane;
          const double* xp = x.data() + nc * plane;
          double acc = 0.0;
          for (int64_t j = 0; j < plane; ++j) acc += gp[j] * xp[j];
          gs[nc] += acc;
        }
      }
      break;
    }
    case Op::Dft2Packed: {
      if (!tracked(0)) break;
      const Shape xs = in_tensor(0).shape();
      std::vector<double>& gx = buf(0);
      const int64_t plane = xs.h * xs.w;
      std::vector<double> tmp(plane);
      for (int64_t n = 0; n < xs.n; ++n)
        for (int64_t c = 0; c < xs.c; ++c) {
          const double* gre = g.data() + ((n * os.c + c) * plane);
          const double* gim = g.data() + ((n * os.c + xs.c + c) * plane);
          dft2_plane(gre, gim, tmp.data(), nullptr, int(xs.h), int(xs.w), +1);
          double* gxp = gx.data() + (n * xs.c + c) * plane;
          for (int64_t j = 0; j < plane; ++j) gxp[j] += tmp[j];
        }
      break;
    }
    case Op::SliceChannels: {
      if (!tracked(0)) break;
      const Shape xs = in_tensor(0).shape();
      std::vector<double>& gx = buf(0);
      const int64_t plane = xs.h * xs.w;
      const int c0 = nd.i0;
      for (int64_t n = 0; n < os.n; ++n)
        for (int64_t c = 0; c < os.c; ++c) {
          const double* gp = g.data() + (n * os.c + c) * plane;
          double* gxp = gx.data() + (n * xs.c + (c0 + c)) * plane;
          for (int64_t j = 0; j < plane; ++j) gxp[j] += gp[j];
        }
      break;
    }
  }
}

// --- op entry points ----------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int pad) {
  const Shape xs = x.shape(), ws = w.shape(), bs = b.shape();
  const int k = int(ws.h);
  if (ws.h != ws.w || (k != 1 && k != 3)) {
    throw ShapeError("conv2d: kernel must be 1x1 or 3x3, got " + ws.str());
  }
  if (pad != (k - 1) / 2) {
    throw ShapeError("conv2d: pad must be (k-1)/2 for same-size output");
  }
  if (xs.c != ws.c) {
    throw ShapeError("conv2d: input channels " + std::to_string(xs.c) +
                     " do not match kernel channels " + std::to_string(ws.c));
  }
  if (!(bs == Shape{1, ws.n, 1, 1})) {
    throw ShapeError("conv2d: bias must have shape (1,Cout,1,1), got " +
                     bs.str());
  }
  Tensor out(Shape{xs.n, ws.n, xs.h, xs.w});
  conv2d_forward(x.data(), w.data(), b.data(), out.data(), int(xs.n),
                 int(xs.c), int(xs.h), int(xs.w), int(ws.n), k, pad);
  maybe_record(Op::Conv2d, {&x, &w, &b}, out, 0.0, pad);
  return out;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  if (slope < 0.0 || slope >= 1.0) {
    throw ConfigError("leaky_relu: slope must be in [0,1)");
  }
  Tensor out(x.shape());
  const double* xp = x.data();
  double* op = out.data();
  for (int64_t j = 0; j < x.numel(); ++j) {
    op[j] = xp[j] > 0.0 ? xp[j] : slope * xp[j];
  }
  maybe_record(Op::LeakyRelu, {&x}, out, slope);
  return out;
}

Tensor pointwise(const Tensor& x, const Tensor& y, Pointwise kind) {
  check_same_shape(x, y, "pointwise");
  Tensor out(x.shape());
  const double* a = x.data();
  const double* b = y.data();
  double* op = out.data();
  const int64_t m = x.numel();
  Op node_op = Op::PwAdd;
  switch (kind) {
    case Pointwise::Add:
      for (int64_t j = 0; j < m; ++j) op[j] = a[j] + b[j];
      node_op = Op::PwAdd;
      break;
    case Pointwise::Sub:
      for (int64_t j = 0; j < m; ++j) op[j] = a[j] - b[j];
      node_op = Op::PwSub;
      break;
    case Pointwise::Mul:
      for (int64_t j = 0; j < m; ++j) op[j] = a[j] * b[j];
      node_op = Op::PwMul;
      break;
  }
  maybe_record(node_op, {&x, &y}, out);
  return out;
}

Tensor scale(const Tensor& x, double s) {
  Tensor out(x.shape());
  const double* xp = x.data();
  double* op = out.data();
  for (int64_t j = 0; j < x.numel(); ++j) op[j] = xp[j] * s;
  maybe_record(Op::Scale, {&x}, out, s);
  return out;
}

Tensor avg_pool(const Tensor& x, int k) {
  const Shape xs = x.shape();
  if (k < 1) throw ConfigError("avg_pool: k must be >= 1");
  if (xs.h % k != 0 || xs.w % k != 0) {
    throw ShapeError("avg_pool: spatial dims " + xs.str() +
                     " not divisible by k=" + std::to_string(k));
  }
  const Shape os{xs.n, xs.c, xs.h / k, xs.w / k};
  Tensor out(os);
  const double inv = 1.0 / (double(k) * k);
  for (int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
    const double* xp = x.data() + nc * xs.h * xs.w;
    double* op = out.data() + nc * os.h * os.w;
    for (int64_t oy = 0; oy < os.h; ++oy)
      for (int64_t ox = 0; ox < os.w; ++ox) {
        double s = 0.0;
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx)
            s += xp[(oy * k + dy) * xs.w + ox * k + dx];
        op[oy * os.w + ox] = s * inv;
      }
  }
  maybe_record(Op::AvgPool, {&x}, out, 0.0, k);
  return out;
}

Tensor channel_mean(const Tensor& x) {
  const Shape xs = x.shape();
  Tensor out(Shape{xs.n, xs.c, 1, 1});
  const double inv = 1.0 / double(xs.h * xs.w);
  for (int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
    const double* xp = x.data() + nc * xs.h * xs.w;
    double s = 0.0;
    for (int64_t j = 0; j < xs.h * xs.w; ++j) s += xp[j];
    out.data()[nc] = s * inv;
  }
  maybe_record(Op::ChannelMean, {&x}, out);
  return out;
}

Tensor broadcast_channel(const Tensor& x, int c) {
  const Shape xs = x.shape();
  if (xs.c != 1) {
    throw ShapeError("broadcast_channel: input must have 1 channel, got " +
                     xs.str());
  }
  if (c < 1) throw ConfigError("broadcast_channel: C must be >= 1");
  Tensor out(Shape{xs.n, c, xs.h, xs.w});
  const int64_t plane = xs.h * xs.w;
  for (int64_t n = 0; n < xs.n; ++n) {
    const double* xp = x.data() + n * plane;
    for (int64_t cc = 0; cc < c; ++cc) {
      std::copy(xp, xp + plane, out.data() + (n * c + cc) * plane);
    }
  }
  maybe_record(Op::BroadcastChannel, {&x}, out, 0.0, c);
  return out;
}

Tensor pixel_shuffle(const Tensor& x, int r) {
  const Shape xs = x.shape();
  if (r < 1) throw ConfigError("pixel_shuffle: r must be >= 1");
  if (xs.c % (int64_t(r) * r) != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(xs.c) +
                     " not divisible by r^2=" + std::to_string(r * r));
  }
  const Shape os{xs.n, xs.c / (r * r), xs.h * r, xs.w * r};
  Tensor out(os);
  for (int64_t n = 0; n < os.n; ++n)
    for (int64_t c = 0; c < os.c; ++c)
      for (int64_t y = 0; y < xs.h; ++y)
        for (int64_t x2 = 0; x2 < xs.w; ++x2)
          for (int dy = 0; dy < r; ++dy)
            for (int dx = 0; dx < r; ++dx) {
              const int64_t ic = (c * r + dy) * r + dx;
              out.at(n, c, y * r + dy, x2 * r + dx) = x.at(n, ic, y, x2);
            }
  maybe_record(Op::PixelShuffle, {&x}, out, 0.0, r);
  return out;
}

Tensor l2_normalize(const Tensor& x) {
  const Shape xs = x.shape();
  Tensor out(xs);
  const int64_t m = xs.c * xs.h * xs.w;
  for (int64_t n = 0; n < xs.n; ++n) {
    const double* xp = x.data() + n * m;
    double nrm2 = 0.0;
    for (int64_t j = 0; j < m; ++j) nrm2 += xp[j] * xp[j];
    const double nrm = std::sqrt(nrm2);
    if (nrm <= 1e-12) {
      throw DegenerateInputError(
          "l2_normalize: sample " + std::to_string(n) +
          " has (near-)zero norm " + std::to_string(nrm));
    }
    double* op = out.data() + n * m;
    for (int64_t j = 0; j < m; ++j) op[j] = xp[j] / nrm;
  }
  maybe_record(Op::L2Normalize, {&x}, out);
  return out;
}

Tensor reduce(const Tensor& x, Reduce kind) {
  const Shape xs = x.shape();
  const int64_t m = x.numel();
  Tensor out;
  switch (kind) {
    case Reduce::L1Mean: {
      double s = 0.0;
      for (int64_t j = 0; j < m; ++j) s += std::fabs(x.data()[j]);
      out = Tensor::scalar(s / double(m));
      break;
    }
    case Reduce::Mean: {
      double s = 0.0;
      for (int64_t j = 0; j < m; ++j) s += x.data()[j];
      out = Tensor::scalar(s / double(m));
      break;
    }
    case Reduce::Sum: {
      double s = 0.0;
      for (int64_t j = 0; j < m; ++j) s += x.data()[j];
      out = Tensor::scalar(s);
      break;
    }
    case Reduce::ChannelSum: {
      if (xs.c != 3) {
        throw ShapeError("reduce: channel_sum requires (N,3,H,W), got " +
                         xs.str());
      }
      out = Tensor(Shape{xs.n, 1, xs.h, xs.w});
      const int64_t plane = xs.h * xs.w;
      for (int64_t n = 0; n < xs.n; ++n) {
        double* op = out.data() + n * plane;
        for (int64_t c = 0; c < xs.c; ++c) {
          const double* xp = x.data() + (n * xs.c + c) * plane;
          for (int64_t j = 0; j < plane; ++j) {
            op[j] = (c == 0 ? 0.0 : op[j]) + xp[j];
          }
        }
      }
      break;
    }
  }
  maybe_record(Op::ReduceOp, {&x}, out, 0.0, static_cast<int>(kind));
  return out;
}

Tensor abs(const Tensor& x) {
  Tensor out(x.shape());
  for (int64_t j = 0; j < x.numel(); ++j) {
    out.data()[j] = std::fabs(x.data()[j]);
  }
  maybe_record(Op::Abs, {&x}, out);
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  for (int64_t j = 0; j < x.numel(); ++j) {
    out.data()[j] = 1.0 / (1.0 + std::exp(-x.data()[j]));
  }
  maybe_record(Op::Sigmoid, {&x}, out);
  return out;
}

Tensor scale_channels(const Tensor& x, const Tensor& s) {
  const Shape xs = x.shape(), ss = s.shape();
  if (!(ss == Shape{xs.n, xs.c, 1, 1})) {
    throw ShapeError("scale_channels: scale must be (N,C,1,1), got " +
                     ss.str() + " for x " + xs.str());
  }
  Tensor out(xs);
  const int64_t plane = xs.h * xs.w;
  for (int64_t nc = 0; nc < xs.n * xs.c; ++nc) {
    const double sv = s.data()[nc];
    const double* xp = x.data() + nc * plane;
    double* op = out.data() + nc * plane;
    for (int64_t j = 0; j < plane; ++j) op[j] = xp[j] * sv;
  }
  maybe_record(Op::ScaleChannels, {&x, &s}, out);
  return out;
}

Tensor dft2_packed(const Tensor& x) {
  const Shape xs = x.shape();
  Tensor out(Shape{xs.n, 2 * xs.c, xs.h, xs.w});
  const int64_t plane = xs.h * xs.w;
  for (int64_t n = 0; n < xs.n; ++n)
    for (int64_t c = 0; c < xs.c; ++c) {
      const double* xp = x.data() + (n * xs.c + c) * plane;
      double* re = out.data() + ((n * 2 * xs.c + c) * plane);
      double* im = out.data() + ((n * 2 * xs.c + xs.c + c) * plane);
      dft2_plane(xp, nullptr, re, im, int(xs.h), int(xs.w), -1);
    }
  maybe_record(Op::Dft2Packed, {&x}, out);
  return out;
}

std::pair<Tensor, Tensor> dft2(const Tensor& x) {
  const int c = int(x.shape().c);
  Tensor packed = dft2_packed(x);
  return {slice_channels(packed, 0, c), slice_channels(packed, c, 2 * c)};
}

Tensor slice_channels(const Tensor& x, int c0, int c1) {
  const Shape xs = x.shape();
  if (c0 < 0 || c1 > xs.c || c0 >= c1) {
    throw ShapeError("slice_channels: bad range [" + std::to_string(c0) +
                     "," + std::to_string(c1) + ") for " + xs.str());
  }
  Tensor out(Shape{xs.n, c1 - c0, xs.h, xs.w});
  const int64_t plane = xs.h * xs.w;
  for (int64_t n = 0; n < xs.n; ++n)
    for (int64_t c = c0; c < c1; ++c) {
      const double* xp = x.data() + (n * xs.c + c) * plane;
      std::copy(xp, xp + plane,
                out.data() + (n * out.shape().c + (c - c0)) * plane);
    }
  maybe_record(Op::SliceChannels, {&x}, out, 0.0, c0, c1);
  return out;
}

// --- gradient checking ---------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double eps) {
  Tape tape;
  Tensor xt = tape.leaf(x, true);
  Tensor y = f(xt);
  if (y.numel() != 1) {
    throw ContractError("grad_check: f must return a scalar");
  }
  tape.backward(y);
  Tensor analytic = tape.grad(xt);

  double max_rel = 0.0;
  for (int64_t j = 0; j < x.numel(); ++j) {
    Tensor xp = x.clone();
    xp.data()[j] += eps;
    const double fp = f(xp).item();
    Tensor xm = x.clone();
    xm.data()[j] -= eps;
    const double fm = f(xm).item();
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic.data()[j];
    const double denom =
        std::max({std::fabs(a), std::fabs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
  }
  return max_rel;
}

Tensor random_signed(Shape s, Rng& rng, double lo_mag, double hi_mag) {
  Tensor t(s);
  for (int64_t j = 0; j < t.numel(); ++j) {
    const double mag = rng.uniform(lo_mag, hi_mag);
    t.data()[j] = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

Tensor random_uniform(Shape s, Rng& rng, double lo, double hi) {
  Tensor t(s);
  for (int64_t j = 0; j < t.numel(); ++j) t.data()[j] = rng.uniform(lo, hi);
  return t;
}

std::vector<std::pair<std::string, double>> gradcheck_suite() {
  std::vector<std::pair<std::string, double>> results;

  {
    Rng rng(11);
    Tensor x = random_signed({2, 3, 6, 6}, rng);
    Tensor w = random_signed({4, 3, 3, 3}, rng, 0.1, 0.5);
    Tensor b = random_signed({1, 4, 1, 1}, rng);
    results.emplace_back("conv2d/x", grad_check([&](const Tensor& t) {
      return reduce(mul(conv2d(t, w, b, 1), conv2d(t, w, b, 1)), Reduce::Mean);
    }, x));
    results.emplace_back("conv2d/w", grad_check([&](const Tensor& t) {
      return reduce(mul(conv2d(x, t, b, 1), conv2d(x, t, b, 1)), Reduce::Mean);
    }, w));
    results.emplace_back("conv2d/b", grad_check([&](const Tensor& t) {
      return reduce(mul(conv2d(x, w, t, 1), conv2d(x, w, t, 1)), Reduce::Mean);
    }, b));
  }
  {
    Rng rng(12);
    Tensor x = random_signed({2, 4, 8, 8}, rng);
    results.emplace_back("leaky_relu", grad_check([&](const Tensor& t) {
      Tensor y = leaky_relu(t, 0.1);
      return reduce(mul(y, y), Reduce::Mean);
    }, x));
  }
  {
    Rng rng(13);
    Tensor x = random_signed({2, 3, 4, 4}, rng);
    Tensor y = random_signed({2, 3, 4, 4}, rng);
    auto via = [&](Pointwise kind, bool wrt_x) {
      return grad_check([&, kind, wrt_x](const Tensor& t) {
        Tensor r = wrt_x ? pointwise(t, y, kind) : pointwise(x, t, kind);
        return reduce(mul(r, r), Reduce::Mean);
      }, wrt_x ? x : y);
    };
    results.emplace_back("pointwise_add/x", via(Pointwise::Add, true));
    results.emplace_back("pointwise_sub/y", via(Pointwise::Sub, false));
    results.emplace_back("pointwise_mul/x", via(Pointwise::Mul, true));
    results.emplace_back("pointwise_mul/y", via(Pointwise::Mul, false));
    results.emplace_back("scale", grad_check([&](const Tensor& t) {
      Tensor r = scale(t, -1.7);
      return reduce(mul(r, r), Reduce::Mean);
    }, x));
  }
  {
    Rng rng(14);
    Tensor x = random_signed({2, 3, 8, 8}, rng);
    results.emplace_back("avg_pool", grad_check([&](const Tensor& t) {
      Tensor y = avg_pool(t, 2);
      return reduce(mul(y, y), Reduce::Mean);
    }, x));
    results.emplace_back("channel_mean", grad_check([&](const Tensor& t) {
      Tensor y = channel_mean(t);
      return reduce(mul(y, y), Reduce::Mean);
    }, x));
  }
  {
    Rng rng(15);
    Tensor x = random_signed({2, 1, 5, 5}, rng);
    results.emplace_back("broadcast_channel", grad_check([&](const Tensor& t) {
      Tensor y = broadcast_channel(t, 4);
      Tensor wfix(y.shape());
      for (int64_t j = 0; j < wfix.numel(); ++j)
        wfix.data()[j] = 0.3 + 0.01 * double(j % 17);
      return reduce(mul(mul(y, wfix), y), Reduce::Mean);
    }, x));
  }
  {
    Rng rng(16);
    Tensor x = random_signed({1, 4, 3, 3}, rng);
    results.emplace_back("pixel_shuffle", grad_check([&](const Tensor& t) {
      Tensor y = pixel_shuffle(t, 2);
      Tensor wfix(y.shape());
      for (int64_t j = 0; j < wfix.numel(); ++j)
        wfix.data()[j] = 0.2 + 0.015 * double(j % 13);
      return reduce(mul(mul(y, wfix), y), Reduce::Mean);
    }, x));
  }
  {
    Rng rng(17);
    Tensor x = random_signed({2, 3, 4, 4}, rng);
    results.emplace_back("l2_normalize", grad_check([&](const Tensor& t) {
      Tensor y = l2_normalize(t);
      Tensor wfix(y.shape());
      for (int64_t j = 0; j < wfix.numel(); ++j)
        wfix.data()[j] = 0.4 + 0.02 * double(j % 11);
      return reduce(mul(mul(y, wfix), y), Reduce::Mean);
    }, x));
  }
  {
    Rng rng(18);
    Tensor x = random_signed({2, 4, 4, 4}, rng);
    results.emplace_back("reduce_l1_mean", grad_check([&](const Tensor& t) {
      return reduce(t, Reduce::L1Mean);
    }, x));
    results.emplace_back("reduce_mean", grad_check([&](const Tensor& t) {
      return reduce(t, Reduce::Mean);
    }, x));
    results.emplace_back("reduce_sum", grad_check([&](const Tensor& t) {
      return reduce(t, Reduce::Sum);
    }, x));
    results.emplace_back("abs", grad_check([&](const Tensor& t) {
      Tensor wfix(t.shape());
      for (int64_t j = 0; j < wfix.numel(); ++j)
        wfix.data()[j] = 0.5 + 0.03 * double(j % 7);
      return reduce(mul(abs(t), wfix), Reduce::Mean);
    }, x));
    results.emplace_back("sigmoid", grad_check([&](const Tensor& t) {
      Tensor y = sigmoid(t);
      return reduce(mul(y, y), Reduce::Mean);
    }, x));
  }
  {
    Rng rng(19);
    Tensor x = random_signed({2, 3, 4, 4}, rng);
    results.emplace_back("channel_sum", grad_check([&](const Tensor& t) {
      Tensor y = reduce(t, Reduce::ChannelSum);
      return reduce(mul(y, y), Reduce::Mean);
    }, x));
    Tensor s = random_signed({2, 3, 1, 1}, rng, 0.3, 1.0);
    results.emplace_back("scale_channels/x", grad_check([&](const Tensor& t) {
      Tensor y = scale_channels(t, s);
      return reduce(mul(y, y), Reduce::Mean);
    }, x));
    results.emplace_back("scale_channels/s", grad_check([&](const Tensor& t) {
      Tensor y = scale_channels(x, t);
      return reduce(mul(y, y), Reduce::Mean);
    }, s));
  }
  {
    Rng rng(20);
    Tensor x = random_signed({1, 2, 6, 6}, rng);
    results.emplace_back("dft2", grad_check([&](const Tensor& t) {
      Tensor y = dft2_packed(t);
      return reduce(mul(y, y), Reduce::Mean);
    }, x));
    results.emplace_back("slice_channels", grad_check([&](const Tensor& t) {
      Tensor y = slice_channels(t, 0, 1);
      return reduce(mul(y, y), Reduce::Mean);
    }, x));
  }
  {
    // Composite chain used throughout the losses:
    // conv -> leaky_relu -> l2_normalize -> l1_mean.
    Rng rng(21);
    Tensor x = random_signed({1, 2, 6, 6}, rng);
    Tensor w = random_signed({3, 2, 3, 3}, rng, 0.1, 0.5);
    Tensor b = random_signed({1, 3, 1, 1}, rng);
    results.emplace_back("chain_conv_lrelu_l2n_l1", grad_check(
        [&](const Tensor& t) {
          return l1_mean(l2_normalize(leaky_relu(conv2d(t, w, b, 1), 0.1)));
        }, x));
  }
  return results;
}

}  // namespace lsfd
