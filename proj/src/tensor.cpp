#include "gslab/tensor.hpp"

#include <stdexcept>
#include <string>

namespace gslab {

namespace {

Index shape_product(const std::vector<Index>& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
  data_ = ArrayX::Zero(shape_product(shape_));
}

Tensor Tensor::zeros(std::vector<Index> shape) {
  return Tensor(std::move(shape));
}

Index Tensor::dim(Index i) const {
  if (i < 0 || i >= rank()) throw std::out_of_range("Tensor::dim: axis out of range");
  return shape_[static_cast<std::size_t>(i)];
}

Scalar& Tensor::operator()(Index a) {
  return data_[a];
}

Scalar Tensor::operator()(Index a) const {
  return data_[a];
}

Scalar& Tensor::operator()(Index a, Index b) {
  return data_[a * shape_[1] + b];
}

Scalar Tensor::operator()(Index a, Index b) const {
  return data_[a * shape_[1] + b];
}

Scalar& Tensor::operator()(Index n, Index c, Index h, Index w) {
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

Scalar Tensor::operator()(Index n, Index c, Index h, Index w) const {
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

MapMatrix Tensor::mat(Index rows, Index cols) {
  if (rows * cols != size()) {
    throw std::invalid_argument("Tensor::mat: view of " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " does not cover " +
                                std::to_string(size()) + " elements");
  }
  return MapMatrix(data_.data(), rows, cols);
}

ConstMapMatrix Tensor::mat(Index rows, Index cols) const {
  if (rows * cols != size()) {
    throw std::invalid_argument("Tensor::mat: view of " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " does not cover " +
                                std::to_string(size()) + " elements");
  }
  return ConstMapMatrix(data_.data(), rows, cols);
}

}  // namespace gslab
