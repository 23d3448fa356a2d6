#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lsfd/common.hpp"

namespace lsfd {

class Tape;

struct Shape {
  int64_t n = 0, c = 0, h = 0, w = 0;

  int64_t numel() const { return n * c * h * w; }
  bool operator==(const Shape& o) const = default;
  std::string str() const;
};

// Dense (N,C,H,W) tensor of 64-bit floats, row-major. Copies are cheap:
// the buffer is shared and ops never mutate their inputs. A tensor may be
// bound to a node on a Tape, in which case gradients can flow to it.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s)
      : shape_(s), data_(std::make_shared<std::vector<double>>(s.numel())) {}
  Tensor(Shape s, std::vector<double> v);

  static Tensor full(Shape s, double v);
  static Tensor scalar(double v) { return full({1, 1, 1, 1}, v); }

  const Shape& shape() const { return shape_; }
  int64_t numel() const { return shape_.numel(); }
  bool empty() const { return !data_; }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }

  double& at(int64_t n, int64_t c, int64_t y, int64_t x) {
    return (*data_)[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  double at(int64_t n, int64_t c, int64_t y, int64_t x) const {
    return (*data_)[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  // Value of a (1,1,1,1) tensor; ContractError otherwise.
  double item() const;

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

  // Same values, no tape binding.
  Tensor detached() const {
    Tensor t = *this;
    t.tape_ = nullptr;
    t.node_ = -1;
    return t;
  }

  // Deep copy with its own buffer.
  Tensor clone() const;

 private:
  Shape shape_{};
  std::shared_ptr<std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;

  friend class Tape;
};

}  // namespace lsfd
