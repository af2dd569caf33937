#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace innet {

// Dense row-major array of doubles. Rank-2 tensors are [rows, cols]; rank-1
// tensors are treated as a single row.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor vector(std::initializer_list<double> values);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const noexcept {
    if (shape_.empty()) return 0;
    return shape_.size() == 1 ? 1 : shape_[0];
  }
  std::size_t cols() const noexcept {
    if (shape_.empty()) return 0;
    return shape_.size() == 1 ? shape_[0] : shape_[1];
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Column-wise concatenation of equal-row matrices, in argument order.
Tensor concat_cols(std::span<const Tensor> parts);

// Columns [begin, begin + width) of a matrix.
Tensor slice_cols(const Tensor& t, std::size_t begin, std::size_t width);

// Rows picked by index, in the given order.
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> indices);

}  // namespace innet
