#include "fwi/ad/array4.hpp"

#include <algorithm>
#include <cmath>

#include "fwi/error.hpp"

namespace fwi::ad {

Array4::Array4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, double value)
    : dims_{n, c, h, w}, data_(n * c * h * w, value) {
  require(n > 0 && c > 0 && h > 0 && w > 0, ErrorKind::shape, "Array4: dims must be positive");
}

Array4::Array4(Dims dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
  require(dims[0] > 0 && dims[1] > 0 && dims[2] > 0 && dims[3] > 0, ErrorKind::shape,
          "Array4: dims must be positive");
  require(data_.size() == dims[0] * dims[1] * dims[2] * dims[3], ErrorKind::shape,
          "Array4: data size does not match dims");
}

void Array4::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Array4::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Array4& Array4::operator+=(const Array4& o) {
  require(dims_ == o.dims_, ErrorKind::shape, "Array4 +=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

double dot(const Array4& a, const Array4& b) {
  require(a.dims() == b.dims(), ErrorKind::shape, "dot: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace fwi::ad
