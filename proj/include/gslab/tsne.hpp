#pragma once

#include "gslab/core.hpp"

#include <cstdint>
#include <vector>

namespace gslab {

struct TsneConfig {
  Scalar perplexity = 30.0;
  int iterations = 1000;
  Scalar learning_rate = 200.0;
  Scalar exaggeration = 12.0;
  int exaggeration_iters = 250;
  std::uint64_t seed = 0;
};

struct TsneResult {
  MatrixX points;                 // N x 2 layout
  std::vector<Scalar> kl_series;  // KL(P||Q) sampled every 50 iterations plus the final state
};

// Row-stochastic conditional affinities: row i holds p_{j|i} from a Gaussian
// whose bandwidth is binary-searched until the row entropy matches
// log(perplexity) within 1e-5. Diagonal is zero.
MatrixX conditional_affinities(const MatrixX& x, Scalar perplexity);

// Symmetrized joint affinities p_ij = (p_{j|i} + p_{i|j}) / (2N), floored at
// 1e-12 off the diagonal so the KL objective stays finite.
MatrixX joint_affinities(const MatrixX& x, Scalar perplexity);

// Exact O(N^2) t-SNE: gradient descent on KL(P||Q) with the Student-t kernel
// in the plane, early exaggeration for the opening iterations, momentum 0.5
// switching to 0.8 at iteration 250, and per-coordinate adaptive gains.
// Requires N >= 3*perplexity + 1 and N <= 5000.
TsneResult tsne(const MatrixX& embeddings, const TsneConfig& cfg);

}  // namespace gslab
