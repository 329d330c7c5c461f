#pragma once

#include "gslab/core.hpp"

#include <vector>

namespace gslab {

// Dense float64 tensor, contiguous row-major storage (last index fastest).
// Rank is dynamic; batches use NCHW order. Eigen maps over the buffer do the
// heavy lifting, Tensor only owns shape and memory.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<Index> shape);

  static Tensor zeros(std::vector<Index> shape);

  const std::vector<Index>& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const;
  Index size() const { return data_.size(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  ArrayX& array() { return data_; }
  const ArrayX& array() const { return data_; }

  Scalar& operator()(Index a);
  Scalar operator()(Index a) const;
  Scalar& operator()(Index a, Index b);
  Scalar operator()(Index a, Index b) const;
  Scalar& operator()(Index n, Index c, Index h, Index w);
  Scalar operator()(Index n, Index c, Index h, Index w) const;

  // Matrix view over the contiguous buffer; rows * cols must equal size().
  MapMatrix mat(Index rows, Index cols);
  ConstMapMatrix mat(Index rows, Index cols) const;

  void set_zero() { data_.setZero(); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  std::vector<Index> shape_;
  ArrayX data_;
};

}  // namespace gslab
