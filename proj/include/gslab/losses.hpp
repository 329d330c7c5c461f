#pragma once

#include "gslab/core.hpp"

#include <vector>

namespace gslab {

struct LossValue {
  Scalar value = 0.0;
  MatrixX grad;  // with respect to the primary input, batch-mean scaling included
};

// Softmax cross-entropy, averaged over the batch. logits: N x K, labels in
// [0, K). grad is d(loss)/d(logits).
LossValue cross_entropy(const MatrixX& logits, const std::vector<int>& labels);

// Classification accuracy under argmax (ties resolve to the lowest index).
Scalar accuracy(const MatrixX& logits, const std::vector<int>& labels);

struct TripletLossValue {
  Scalar value = 0.0;
  MatrixX grad_anchor, grad_positive, grad_negative;
};

// Margin loss mean(max(0, d(a,p) - d(a,n) + margin)) with Euclidean d.
// Rows of the three matrices are aligned triplets.
TripletLossValue triplet_loss(const MatrixX& anchor, const MatrixX& positive,
                              const MatrixX& negative, Scalar margin = 1.0);

// Normalized-temperature cross entropy over an interleaved view batch
// [a0, b0, a1, b1, ...] (rows of z, partner of row i is row i^1). Cosine
// similarity; every row acts as an anchor once and the loss is averaged over
// all 2N anchors. grad is with respect to the raw (unnormalized) embeddings.
LossValue info_nce(const MatrixX& z, Scalar temperature);

}  // namespace gslab
