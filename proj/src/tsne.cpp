#include "gslab/tsne.hpp"

#include "gslab/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gslab {

namespace {

constexpr Scalar kAffinityFloor = 1e-12;

// Pairwise squared Euclidean distances, clamped at zero against roundoff.
MatrixX squared_distances(const MatrixX& x) {
  const VectorX sq = x.rowwise().squaredNorm();
  MatrixX d = sq.replicate(1, x.rows()) + sq.transpose().replicate(x.rows(), 1) -
              2.0 * x * x.transpose();
  return d.cwiseMax(0.0);
}

void validate_perplexity(Index n, Scalar perplexity) {
  if (!(perplexity > 1.0)) {
    throw std::invalid_argument("tsne: perplexity must exceed 1");
  }
  if (n < static_cast<Index>(3.0 * perplexity) + 1) {
    throw std::invalid_argument("tsne: need at least 3*perplexity + 1 points, got " +
                                std::to_string(n));
  }
}

}  // namespace

MatrixX conditional_affinities(const MatrixX& x, Scalar perplexity) {
  const Index n = x.rows();
  validate_perplexity(n, perplexity);

  const MatrixX d2 = squared_distances(x);
  const Scalar target_entropy = std::log(perplexity);
  MatrixX p = MatrixX::Zero(n, n);

  parallel_for(n, [&](Index i) {
    // Shift distances by the row minimum so exp never underflows wholesale.
    Scalar dmin = std::numeric_limits<Scalar>::max();
    for (Index j = 0; j < n; ++j) {
      if (j != i) dmin = std::min(dmin, d2(i, j));
    }

    Scalar beta = 1.0;
    Scalar beta_lo = 0.0;
    Scalar beta_hi = std::numeric_limits<Scalar>::infinity();
    VectorX row(n);

    for (int step = 0; step < 50; ++step) {
      Scalar sum = 0.0;
      Scalar weighted = 0.0;
      for (Index j = 0; j < n; ++j) {
        if (j == i) {
          row[j] = 0.0;
          continue;
        }
        const Scalar shifted = d2(i, j) - dmin;
        const Scalar w = std::exp(-beta * shifted);
        row[j] = w;
        sum += w;
        weighted += shifted * w;
      }
      // Entropy in nats of the normalized row; invariant to the shift.
      const Scalar entropy = std::log(sum) + beta * weighted / sum;
      const Scalar diff = entropy - target_entropy;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0.0) {
        beta_lo = beta;
        beta = std::isinf(beta_hi) ? beta * 2.0 : 0.5 * (beta + beta_hi);
      } else {
        beta_hi = beta;
        beta = 0.5 * (beta + beta_lo);
      }
    }

    const Scalar sum = row.sum();
    p.row(i) = (row / sum).transpose();
  });

  return p;
}

MatrixX joint_affinities(const MatrixX& x, Scalar perplexity) {
  const MatrixX cond = conditional_affinities(x, perplexity);
  const Index n = x.rows();
  MatrixX p = (cond + cond.transpose()) / (2.0 * static_cast<Scalar>(n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i != j) p(i, j) = std::max(p(i, j), kAffinityFloor);
    }
  }
  return p;
}

TsneResult tsne(const MatrixX& embeddings, const TsneConfig& cfg) {
  const Index n = embeddings.rows();
  validate_perplexity(n, cfg.perplexity);
  if (n > 5000) {
    throw std::invalid_argument("tsne: the exact method is capped at 5000 points");
  }
  if (cfg.iterations < 1) throw std::invalid_argument("tsne: iterations must be positive");

  const MatrixX p_true = joint_affinities(embeddings, cfg.perplexity);

  Rng rng(cfg.seed);
  MatrixX y(n, 2);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < 2; ++c) y(i, c) = 1e-4 * rng.normal();
  }

  MatrixX inc = MatrixX::Zero(n, 2);
  MatrixX gains = MatrixX::Ones(n, 2);

  // Student-t weights and the normalized low-dimensional affinities.
  MatrixX w(n, n), q(n, n);
  const auto refresh_q = [&]() {
    w = (1.0 + squared_distances(y).array()).inverse().matrix();
    w.diagonal().setZero();
    q = (w / w.sum()).cwiseMax(kAffinityFloor);
  };
  const auto kl_against_true_p = [&]() {
    Scalar kl = 0.0;
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        if (i != j) kl += p_true(i, j) * std::log(p_true(i, j) / q(i, j));
      }
    }
    return kl;
  };

  TsneResult result;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    refresh_q();
    if (iter % 50 == 0) result.kl_series.push_back(kl_against_true_p());

    const bool exaggerated = iter < cfg.exaggeration_iters;
    const Scalar momentum = iter < 250 ? 0.5 : 0.8;

    // grad_i = 4 sum_j (p_ij - q_ij) w_ij (y_i - y_j)
    const MatrixX diff = exaggerated ? MatrixX(cfg.exaggeration * p_true - q) : MatrixX(p_true - q);
    const MatrixX m = diff.cwiseProduct(w);
    const VectorX row_sums = m.rowwise().sum();
    const MatrixX grad = 4.0 * (row_sums.asDiagonal() * y - m * y);

    gains = (grad.array() * inc.array() < 0.0)
                .select(gains.array() + 0.2, gains.array() * 0.8)
                .max(0.01)
                .matrix();
    inc = momentum * inc - cfg.learning_rate * gains.cwiseProduct(grad);
    y += inc;
    y.rowwise() -= y.colwise().mean();
  }

  refresh_q();
  result.kl_series.push_back(kl_against_true_p());
  result.points = y;
  return result;
}

}  // namespace gslab
