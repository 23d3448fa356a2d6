#include "lsfd/tensor.hpp"

#include <sstream>

namespace lsfd {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> v) : shape_(s) {
  if (static_cast<int64_t>(v.size()) != s.numel()) {
    throw ShapeError("tensor data length " + std::to_string(v.size()) +
                     " does not match shape " + s.str());
  }
  data_ = std::make_shared<std::vector<double>>(std::move(v));
}

Tensor Tensor::full(Shape s, double v) {
  Tensor t(s);
  std::fill(t.data_->begin(), t.data_->end(), v);
  return t;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() requires a scalar tensor, got " +
                        shape_.str());
  }
  return (*data_)[0];
}

Tensor Tensor::clone() const {
  Tensor t(shape_);
  if (data_) *t.data_ = *data_;
  return t;
}

}  // namespace lsfd
