#include "gslab/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gslab {

namespace {

void check_conv_args(const Tensor& x, const Tensor& w, Index stride, Index pad) {
  if (x.rank() != 4) throw std::invalid_argument("conv2d: input must be rank 4 (NCHW)");
  if (w.rank() != 4) throw std::invalid_argument("conv2d: weight must be rank 4 (OIKK)");
  if (w.dim(2) != w.dim(3)) throw std::invalid_argument("conv2d: kernel must be square");
  if (x.dim(1) != w.dim(1)) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(x.dim(1)) +
                                " channels, weight expects " + std::to_string(w.dim(1)));
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv2d: pad must be >= 0");
  const Index k = w.dim(2);
  if (x.dim(2) + 2 * pad < k || x.dim(3) + 2 * pad < k) {
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  }
}

// Lowers one image (C x H x W slab) to a (C*k*k) x (Hout*Wout) column matrix.
void im2col(const Scalar* x, Index c_in, Index h, Index w, Index k, Index stride,
            Index pad, Index h_out, Index w_out, MatrixX& col) {
  for (Index c = 0; c < c_in; ++c) {
    const Scalar* plane = x + c * h * w;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Index row = (c * k + ky) * k + kx;
        Scalar* out = col.row(row).data();
        for (Index oy = 0; oy < h_out; ++oy) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            for (Index ox = 0; ox < w_out; ++ox) out[oy * w_out + ox] = 0.0;
            continue;
          }
          for (Index ox = 0; ox < w_out; ++ox) {
            const Index ix = ox * stride - pad + kx;
            out[oy * w_out + ox] = (ix >= 0 && ix < w) ? plane[iy * w + ix] : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add of a column-matrix gradient back to image layout.
void col2im(const MatrixX& col, Index c_in, Index h, Index w, Index k, Index stride,
            Index pad, Index h_out, Index w_out, Scalar* dx) {
  for (Index c = 0; c < c_in; ++c) {
    Scalar* plane = dx + c * h * w;
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const Index row = (c * k + ky) * k + kx;
        const Scalar* grad = col.row(row).data();
        for (Index oy = 0; oy < h_out; ++oy) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (Index ox = 0; ox < w_out; ++ox) {
            const Index ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) plane[iy * w + ix] += grad[oy * w_out + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const VectorX& b,
                      Index stride, Index pad) {
  check_conv_args(x, w, stride, pad);
  const Index n = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index c_out = w.dim(0), k = w.dim(2);
  if (b.size() != c_out) throw std::invalid_argument("conv2d: bias size mismatch");
  const Index h_out = (h + 2 * pad - k) / stride + 1;
  const Index w_out = (wd + 2 * pad - k) / stride + 1;

  Tensor y({n, c_out, h_out, w_out});
  ConstMapMatrix w_mat(w.data(), c_out, c_in * k * k);

  // One scratch column matrix per worker; parallel_for hands image i to
  // worker i % workers, so the slot assignment never collides.
  const Index workers = static_cast<Index>(thread_count());
  std::vector<MatrixX> cols(static_cast<std::size_t>(workers),
                            MatrixX(c_in * k * k, h_out * w_out));
  parallel_for(n, [&](Index i) {
    MatrixX& col = cols[static_cast<std::size_t>(i % workers)];
    im2col(x.data() + i * c_in * h * wd, c_in, h, wd, k, stride, pad, h_out, w_out, col);
    MapMatrix y_i(y.data() + i * c_out * h_out * w_out, c_out, h_out * w_out);
    y_i.noalias() = w_mat * col;
    y_i.colwise() += b;
  });
  return y;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, Index stride,
                            Index pad, const Tensor& dy) {
  check_conv_args(x, w, stride, pad);
  const Index n = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index c_out = w.dim(0), k = w.dim(2);
  const Index h_out = (h + 2 * pad - k) / stride + 1;
  const Index w_out = (wd + 2 * pad - k) / stride + 1;
  if (dy.rank() != 4 || dy.dim(0) != n || dy.dim(1) != c_out || dy.dim(2) != h_out ||
      dy.dim(3) != w_out) {
    throw std::invalid_argument("conv2d_backward: upstream gradient shape mismatch");
  }

  Conv2dGrads g;
  g.dx = Tensor({n, c_in, h, wd});
  g.dw = Tensor({c_out, c_in, k, k});
  g.db = VectorX::Zero(c_out);

  ConstMapMatrix w_mat(w.data(), c_out, c_in * k * k);

  // Per-image weight/bias contributions land in their own slabs and are
  // reduced serially afterwards, keeping sums independent of worker count.
  const Index kk = c_in * k * k;
  std::vector<MatrixX> dw_n(static_cast<std::size_t>(n));
  std::vector<VectorX> db_n(static_cast<std::size_t>(n));
  const Index workers = static_cast<Index>(thread_count());
  std::vector<MatrixX> cols(static_cast<std::size_t>(workers), MatrixX(kk, h_out * w_out));
  std::vector<MatrixX> col_grads(static_cast<std::size_t>(workers), MatrixX(kk, h_out * w_out));

  parallel_for(n, [&](Index i) {
    MatrixX& col = cols[static_cast<std::size_t>(i % workers)];
    MatrixX& col_grad = col_grads[static_cast<std::size_t>(i % workers)];
    im2col(x.data() + i * c_in * h * wd, c_in, h, wd, k, stride, pad, h_out, w_out, col);
    ConstMapMatrix dy_i(dy.data() + i * c_out * h_out * w_out, c_out, h_out * w_out);
    dw_n[static_cast<std::size_t>(i)].noalias() = dy_i * col.transpose();
    db_n[static_cast<std::size_t>(i)] = dy_i.rowwise().sum();
    col_grad.noalias() = w_mat.transpose() * dy_i;
    col2im(col_grad, c_in, h, wd, k, stride, pad, h_out, w_out,
           g.dx.data() + i * c_in * h * wd);
  });

  MapMatrix dw_mat(g.dw.data(), c_out, kk);
  for (Index i = 0; i < n; ++i) {
    dw_mat += dw_n[static_cast<std::size_t>(i)];
    g.db += db_n[static_cast<std::size_t>(i)];
  }
  return g;
}

Tensor batchnorm2d_train(const Tensor& x, const VectorX& gamma, const VectorX& beta,
                         VectorX& running_mean, VectorX& running_var,
                         Scalar momentum, Scalar eps, BatchNormCache& cache) {
  if (x.rank() != 4) throw std::invalid_argument("batchnorm2d: input must be rank 4");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c ||
      running_var.size() != c) {
    throw std::invalid_argument("batchnorm2d: parameter size mismatch");
  }
  const Index m = n * h * w;
  if (m <= 1) {
    throw std::invalid_argument("batchnorm2d: train mode needs more than one value per channel");
  }

  Tensor y(x.shape());
  cache.xhat = Tensor(x.shape());
  cache.invstd = VectorX(c);
  cache.m = m;

  const Index plane = h * w;
  for (Index ch = 0; ch < c; ++ch) {
    Scalar mean = 0.0;
    for (Index i = 0; i < n; ++i) {
      ConstMapVector slab(x.data() + (i * c + ch) * plane, plane);
      mean += slab.sum();
    }
    mean /= static_cast<Scalar>(m);
    Scalar var = 0.0;
    for (Index i = 0; i < n; ++i) {
      ConstMapVector slab(x.data() + (i * c + ch) * plane, plane);
      var += (slab.array() - mean).square().sum();
    }
    var /= static_cast<Scalar>(m);
    const Scalar invstd = 1.0 / std::sqrt(var + eps);
    cache.invstd[ch] = invstd;

    for (Index i = 0; i < n; ++i) {
      ConstMapVector in(x.data() + (i * c + ch) * plane, plane);
      MapVector xh(cache.xhat.data() + (i * c + ch) * plane, plane);
      MapVector out(y.data() + (i * c + ch) * plane, plane);
      xh = (in.array() - mean) * invstd;
      out = xh.array() * gamma[ch] + beta[ch];
    }

    const Scalar unbiased = var * static_cast<Scalar>(m) / static_cast<Scalar>(m - 1);
    running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mean;
    running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * unbiased;
  }
  return y;
}

Tensor batchnorm2d_eval(const Tensor& x, const VectorX& gamma, const VectorX& beta,
                        const VectorX& running_mean, const VectorX& running_var,
                        Scalar eps) {
  if (x.rank() != 4) throw std::invalid_argument("batchnorm2d: input must be rank 4");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c ||
      running_var.size() != c) {
    throw std::invalid_argument("batchnorm2d: parameter size mismatch");
  }
  Tensor y(x.shape());
  const Index plane = h * w;
  for (Index ch = 0; ch < c; ++ch) {
    const Scalar invstd = 1.0 / std::sqrt(running_var[ch] + eps);
    const Scalar scale = gamma[ch] * invstd;
    const Scalar shift = beta[ch] - running_mean[ch] * scale;
    for (Index i = 0; i < n; ++i) {
      ConstMapVector in(x.data() + (i * c + ch) * plane, plane);
      MapVector out(y.data() + (i * c + ch) * plane, plane);
      out = in.array() * scale + shift;
    }
  }
  return y;
}

BatchNormGrads batchnorm2d_backward(const BatchNormCache& cache, const VectorX& gamma,
                                    const Tensor& dy) {
  if (cache.m <= 1 || cache.xhat.size() == 0) {
    throw std::logic_error("batchnorm2d_backward: no train-mode forward cache");
  }
  if (!dy.same_shape(cache.xhat)) {
    throw std::invalid_argument("batchnorm2d_backward: upstream gradient shape mismatch");
  }
  const Index n = dy.dim(0), c = dy.dim(1), h = dy.dim(2), w = dy.dim(3);
  const Index plane = h * w;
  const Scalar m = static_cast<Scalar>(cache.m);

  BatchNormGrads g;
  g.dx = Tensor(dy.shape());
  g.dgamma = VectorX::Zero(c);
  g.dbeta = VectorX::Zero(c);

  for (Index ch = 0; ch < c; ++ch) {
    Scalar sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (Index i = 0; i < n; ++i) {
      ConstMapVector d(dy.data() + (i * c + ch) * plane, plane);
      ConstMapVector xh(cache.xhat.data() + (i * c + ch) * plane, plane);
      sum_dy += d.sum();
      sum_dy_xhat += d.dot(xh);
    }
    g.dbeta[ch] = sum_dy;
    g.dgamma[ch] = sum_dy_xhat;

    const Scalar k = gamma[ch] * cache.invstd[ch] / m;
    for (Index i = 0; i < n; ++i) {
      ConstMapVector d(dy.data() + (i * c + ch) * plane, plane);
      ConstMapVector xh(cache.xhat.data() + (i * c + ch) * plane, plane);
      MapVector out(g.dx.data() + (i * c + ch) * plane, plane);
      out = k * (m * d.array() - sum_dy - xh.array() * sum_dy_xhat);
    }
  }
  return g;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y(x.shape());
  y.array() = x.array().max(0.0);
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  if (!x.same_shape(dy)) throw std::invalid_argument("relu_backward: shape mismatch");
  Tensor dx(x.shape());
  dx.array() = (x.array() > 0.0).select(dy.array(), 0.0);
  return dx;
}

MatrixX global_avg_pool_forward(const Tensor& x) {
  if (x.rank() != 4) throw std::invalid_argument("global_avg_pool: input must be rank 4");
  const Index n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  MatrixX y(n, c);
  for (Index i = 0; i < n; ++i) {
    for (Index ch = 0; ch < c; ++ch) {
      ConstMapVector slab(x.data() + (i * c + ch) * plane, plane);
      y(i, ch) = slab.mean();
    }
  }
  return y;
}

Tensor global_avg_pool_backward(const MatrixX& dy, Index h, Index w) {
  const Index n = dy.rows(), c = dy.cols(), plane = h * w;
  Tensor dx({n, c, h, w});
  const Scalar inv = 1.0 / static_cast<Scalar>(plane);
  for (Index i = 0; i < n; ++i) {
    for (Index ch = 0; ch < c; ++ch) {
      MapVector slab(dx.data() + (i * c + ch) * plane, plane);
      slab.setConstant(dy(i, ch) * inv);
    }
  }
  return dx;
}

MatrixX linear_forward(const MatrixX& x, const MatrixX& w, const VectorX& b) {
  if (x.cols() != w.cols()) throw std::invalid_argument("linear: input width mismatch");
  if (b.size() != w.rows()) throw std::invalid_argument("linear: bias size mismatch");
  MatrixX y = x * w.transpose();
  y.rowwise() += b.transpose();
  return y;
}

LinearGrads linear_backward(const MatrixX& x, const MatrixX& w, const MatrixX& dy) {
  if (dy.rows() != x.rows() || dy.cols() != w.rows()) {
    throw std::invalid_argument("linear_backward: upstream gradient shape mismatch");
  }
  LinearGrads g;
  g.dx = dy * w;
  g.dw = dy.transpose() * x;
  g.db = dy.colwise().sum().transpose();
  return g;
}

}  // namespace gslab
