#include "recolor/tensor.hpp"

#include <cmath>
#include <sstream>

namespace recolor {

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ", ";
    os << shape_[i];
  }
  os << ")";
  return os.str();
}

void check_shape(const Tensor& t, const std::vector<int>& expected, const char* what) {
  if (t.shape() != expected) {
    Tensor e(expected);
    throw std::invalid_argument(std::string(what) + ": expected shape " + e.shape_str() +
                                ", got " + t.shape_str());
  }
}

bool all_finite(const Tensor& t) {
  for (int64_t i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(t[i])) return false;
  }
  return true;
}

}  // namespace recolor
