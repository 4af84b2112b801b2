#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace fwi::ad {

/// Dense (batch, channel, height, width) array of doubles, row-major.
class Array4 {
 public:
  using Dims = std::array<std::size_t, 4>;

  Array4() = default;
  Array4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, double value = 0.0);
  Array4(Dims dims, std::vector<double> data);

  const Dims& dims() const noexcept { return dims_; }
  std::size_t n() const noexcept { return dims_[0]; }
  std::size_t c() const noexcept { return dims_[1]; }
  std::size_t h() const noexcept { return dims_[2]; }
  std::size_t w() const noexcept { return dims_[3]; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[((n * dims_[1] + c) * dims_[2] + y) * dims_[3] + x];
  }
  double operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[((n * dims_[1] + c) * dims_[2] + y) * dims_[3] + x];
  }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  /// Pointer to plane (n, c).
  double* plane(std::size_t n, std::size_t c) noexcept { return data_.data() + (n * dims_[1] + c) * dims_[2] * dims_[3]; }
  const double* plane(std::size_t n, std::size_t c) const noexcept {
    return data_.data() + (n * dims_[1] + c) * dims_[2] * dims_[3];
  }

  void fill(double v);
  bool all_finite() const;
  Array4& operator+=(const Array4& o);

  friend bool operator==(const Array4&, const Array4&) = default;

 private:
  Dims dims_{0, 0, 0, 0};
  std::vector<double> data_;
};

double dot(const Array4& a, const Array4& b);

}  // namespace fwi::ad
