#include "gslab/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gslab {

LossValue cross_entropy(const MatrixX& logits, const std::vector<int>& labels) {
  const Index n = logits.rows(), k = logits.cols();
  if (n == 0) throw std::invalid_argument("cross_entropy: empty batch");
  if (static_cast<Index>(labels.size()) != n) {
    throw std::invalid_argument("cross_entropy: label count does not match batch size");
  }
  if (!logits.allFinite()) throw std::invalid_argument("cross_entropy: non-finite logits");

  LossValue out;
  out.grad = MatrixX::Zero(n, k);
  Scalar total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw std::invalid_argument("cross_entropy: label out of range");
    const Scalar m = logits.row(i).maxCoeff();
    const Scalar lse = m + std::log((logits.row(i).array() - m).exp().sum());
    total += lse - logits(i, y);
    out.grad.row(i) = (logits.row(i).array() - lse).exp().matrix();
    out.grad(i, y) -= 1.0;
  }
  out.value = total / static_cast<Scalar>(n);
  out.grad /= static_cast<Scalar>(n);
  return out;
}

Scalar accuracy(const MatrixX& logits, const std::vector<int>& labels) {
  const Index n = logits.rows(), k = logits.cols();
  if (n == 0) throw std::invalid_argument("accuracy: empty batch");
  if (static_cast<Index>(labels.size()) != n) {
    throw std::invalid_argument("accuracy: label count does not match batch size");
  }
  Index hits = 0;
  for (Index i = 0; i < n; ++i) {
    Index best = 0;
    for (Index j = 1; j < k; ++j) {
      if (logits(i, j) > logits(i, best)) best = j;
    }
    if (best == labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<Scalar>(hits) / static_cast<Scalar>(n);
}

TripletLossValue triplet_loss(const MatrixX& anchor, const MatrixX& positive,
                              const MatrixX& negative, Scalar margin) {
  const Index n = anchor.rows(), d = anchor.cols();
  if (n == 0) throw std::invalid_argument("triplet_loss: empty batch");
  if (positive.rows() != n || negative.rows() != n || positive.cols() != d ||
      negative.cols() != d) {
    throw std::invalid_argument("triplet_loss: anchor/positive/negative shapes differ");
  }
  if (margin < 0.0) throw std::invalid_argument("triplet_loss: margin must be >= 0");

  TripletLossValue out;
  out.grad_anchor = MatrixX::Zero(n, d);
  out.grad_positive = MatrixX::Zero(n, d);
  out.grad_negative = MatrixX::Zero(n, d);
  Scalar total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const VectorX ap = (anchor.row(i) - positive.row(i)).transpose();
    const VectorX an = (anchor.row(i) - negative.row(i)).transpose();
    const Scalar dp = ap.norm();
    const Scalar dn = an.norm();
    const Scalar h = dp - dn + margin;
    if (h <= 0.0) continue;
    total += h;
    if (dp > 0.0) {
      const VectorX u = ap / dp;
      out.grad_anchor.row(i) += u.transpose();
      out.grad_positive.row(i) -= u.transpose();
    }
    if (dn > 0.0) {
      const VectorX u = an / dn;
      out.grad_anchor.row(i) -= u.transpose();
      out.grad_negative.row(i) += u.transpose();
    }
  }
  const Scalar inv = 1.0 / static_cast<Scalar>(n);
  out.value = total * inv;
  out.grad_anchor *= inv;
  out.grad_positive *= inv;
  out.grad_negative *= inv;
  return out;
}

LossValue info_nce(const MatrixX& z, Scalar temperature) {
  const Index n = z.rows(), d = z.cols();
  if (temperature <= 0.0) throw std::invalid_argument("info_nce: temperature must be positive");
  if (n < 4 || n % 2 != 0) {
    throw std::invalid_argument("info_nce: batch must hold an even number (>= 4) of views");
  }
  if (!z.allFinite()) throw std::invalid_argument("info_nce: non-finite embeddings");

  VectorX norms(n);
  MatrixX zn(n, d);
  for (Index i = 0; i < n; ++i) {
    const Scalar nm = z.row(i).norm();
    if (nm == 0.0) throw std::invalid_argument("info_nce: zero-norm embedding row");
    norms[i] = nm;
    zn.row(i) = z.row(i) / nm;
  }

  const MatrixX sim = zn * zn.transpose();
  MatrixX grad_s = MatrixX::Zero(n, n);
  Scalar total = 0.0;
  const Scalar inv_nt = 1.0 / (temperature * static_cast<Scalar>(n));
  for (Index i = 0; i < n; ++i) {
    const Index partner = i ^ 1;
    Scalar m = -std::numeric_limits<Scalar>::infinity();
    for (Index j = 0; j < n; ++j) {
      if (j != i) m = std::max(m, sim(i, j) / temperature);
    }
    Scalar denom = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (j != i) denom += std::exp(sim(i, j) / temperature - m);
    }
    const Scalar lse = m + std::log(denom);
    total += lse - sim(i, partner) / temperature;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const Scalar p = std::exp(sim(i, j) / temperature - lse);
      grad_s(i, j) = (p - (j == partner ? 1.0 : 0.0)) * inv_nt;
    }
  }

  // sim = zn * zn^T, so d(loss)/d(zn) = (G + G^T) * zn; then back through the
  // row normalization zn_i = z_i / |z_i|.
  const MatrixX d_zn = (grad_s + grad_s.transpose()) * zn;
  LossValue out;
  out.value = total / static_cast<Scalar>(n);
  out.grad = MatrixX(n, d);
  for (Index i = 0; i < n; ++i) {
    const Scalar dot = zn.row(i).dot(d_zn.row(i));
    out.grad.row(i) = (d_zn.row(i) - dot * zn.row(i)) / norms[i];
  }
  return out;
}

}  // namespace gslab
