#pragma once

#include "gslab/tensor.hpp"

namespace gslab {

// Layer primitives over NCHW tensors. Forward functions return fresh tensors;
// backward functions take whatever the forward pass cached and produce
// gradients for inputs and parameters. Convolution lowers each image to a
// column matrix and runs an Eigen GEMM; gradient reduction over the batch is
// serialized so results do not depend on the worker count.

// x: N x C x H x W, w: O x C x k x k, b: O. Zero padding.
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const VectorX& b,
                      Index stride, Index pad);

struct Conv2dGrads {
  Tensor dx;
  Tensor dw;
  VectorX db;
};

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, Index stride,
                            Index pad, const Tensor& dy);

struct BatchNormCache {
  Tensor xhat;
  VectorX invstd;
  Index m = 0;  // N * H * W
};

// Train mode: normalizes with batch statistics, updates running stats in
// place (running = (1 - momentum) * running + momentum * batch, unbiased
// variance for the running buffer) and fills the cache for backward.
// Requires N * H * W > 1.
Tensor batchnorm2d_train(const Tensor& x, const VectorX& gamma, const VectorX& beta,
                         VectorX& running_mean, VectorX& running_var,
                         Scalar momentum, Scalar eps, BatchNormCache& cache);

// Eval mode: normalizes with the running statistics, touches nothing.
Tensor batchnorm2d_eval(const Tensor& x, const VectorX& gamma, const VectorX& beta,
                        const VectorX& running_mean, const VectorX& running_var,
                        Scalar eps);

struct BatchNormGrads {
  Tensor dx;
  VectorX dgamma;
  VectorX dbeta;
};

BatchNormGrads batchnorm2d_backward(const BatchNormCache& cache, const VectorX& gamma,
                                    const Tensor& dy);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

// N x C x H x W -> N x C mean over the spatial plane.
MatrixX global_avg_pool_forward(const Tensor& x);
Tensor global_avg_pool_backward(const MatrixX& dy, Index h, Index w);

// x: N x in, w: out x in, b: out. y = x * w^T + b.
MatrixX linear_forward(const MatrixX& x, const MatrixX& w, const VectorX& b);

struct LinearGrads {
  MatrixX dx;
  MatrixX dw;
  VectorX db;
};

LinearGrads linear_backward(const MatrixX& x, const MatrixX& w, const MatrixX& dy);

}  // namespace gslab
