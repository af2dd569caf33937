#include "innet/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "innet/errors.hpp"

namespace innet {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size()) {
    throw DimensionError("tensor shape product " +
                         std::to_string(product(shape_)) +
                         " does not match data length " +
                         std::to_string(data_.size()));
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

std::span<double> Tensor::row(std::size_t r) {
  return std::span<double>(data_).subspan(r * cols(), cols());
}

std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(data_).subspan(r * cols(), cols());
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) return {};
  const std::size_t rows = parts.front().rows();
  std::size_t width = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row count " + std::to_string(p.rows()) +
                           " != " + std::to_string(rows));
    }
    width += p.cols();
  }
  Tensor out({rows, width});
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
      auto src = p.row(r);
      std::copy(src.begin(), src.end(), out.row(r).begin() + offset);
      offset += p.cols();
    }
  }
  return out;
}

Tensor slice_cols(const Tensor& t, std::size_t begin, std::size_t width) {
  if (begin + width > t.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + width) + ") exceeds width " +
                         std::to_string(t.cols()));
  }
  Tensor out({t.rows(), width});
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto src = t.row(r).subspan(begin, width);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> indices) {
  Tensor out({indices.size(), t.cols()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= t.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) +
                           " out of range " + std::to_string(t.rows()));
    }
    auto src = t.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace innet
