#include <doctest.h>

#include "gslab/rng.hpp"
#include "gslab/tsne.hpp"

#include "oracles.hpp"

#include <cmath>
#include <cstdlib>
#include <vector>

using namespace gslab;

namespace {

MatrixX gaussian_cloud(Index n, Index d, std::uint64_t seed) {
  Rng rng(seed);
  MatrixX x(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) x(i, j) = rng.normal();
  }
  return x;
}

// Rows of well-separated blobs with unit spread; labels follow block order.
MatrixX blob_cloud(Index per_blob, Index d, const std::vector<Scalar>& centers,
                   std::uint64_t seed, std::vector<int>* labels) {
  Rng rng(seed);
  MatrixX x(per_blob * static_cast<Index>(centers.size()), d);
  labels->clear();
  Index row = 0;
  for (std::size_t b = 0; b < centers.size(); ++b) {
    for (Index i = 0; i < per_blob; ++i, ++row) {
      for (Index j = 0; j < d; ++j) x(row, j) = centers[b] + rng.normal();
      labels->push_back(static_cast<int>(b));
    }
  }
  return x;
}

}  // namespace

TEST_CASE("conditional affinities hit the entropy target") {
  const MatrixX x = gaussian_cloud(100, 5, 7);
  const Scalar perplexity = 15.0;
  const MatrixX p = conditional_affinities(x, perplexity);

  REQUIRE(p.rows() == 100);
  REQUIRE(p.cols() == 100);
  for (Index i = 0; i < p.rows(); ++i) {
    CHECK(p(i, i) == 0.0);
    CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.row(i).minCoeff() >= 0.0);

    Scalar entropy = 0.0;
    for (Index j = 0; j < p.cols(); ++j) {
      if (p(i, j) > 0.0) entropy -= p(i, j) * std::log(p(i, j));
    }
    CHECK(std::abs(entropy - std::log(perplexity)) < 1e-5);
  }
}

TEST_CASE("joint affinities form a symmetric floored distribution") {
  const MatrixX x = gaussian_cloud(60, 3, 11);
  const MatrixX p = joint_affinities(x, 10.0);

  CHECK((p - p.transpose()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(p.diagonal().cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-6));
  for (Index i = 0; i < p.rows(); ++i) {
    for (Index j = 0; j < p.cols(); ++j) {
      if (i != j) CHECK(p(i, j) >= 1e-12);
    }
  }
}

TEST_CASE("tsne output shape, KL bookkeeping, and determinism") {
  const MatrixX x = gaussian_cloud(40, 4, 3);
  TsneConfig cfg;
  cfg.perplexity = 5.0;
  cfg.iterations = 60;
  cfg.seed = 12;

  const TsneResult a = tsne(x, cfg);
  CHECK(a.points.rows() == 40);
  CHECK(a.points.cols() == 2);
  // KL recorded at iterations 0 and 50 plus the final state.
  CHECK(a.kl_series.size() == 3);

  const TsneResult b = tsne(x, cfg);
  CHECK((a.points - b.points).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.kl_series == b.kl_series);

  cfg.seed = 13;
  const TsneResult c = tsne(x, cfg);
  CHECK((a.points - c.points).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("tsne separates two distant blobs") {
  std::vector<int> labels;
  const MatrixX x = blob_cloud(30, 5, {-20.0, 20.0}, 21, &labels);

  TsneConfig cfg;
  cfg.perplexity = 8.0;
  cfg.iterations = 350;
  cfg.seed = 4;
  const TsneResult r = tsne(x, cfg);

  CHECK(r.kl_series.back() < r.kl_series.front());
  CHECK(oracles::silhouette(r.points, labels) > 0.5);
}

TEST_CASE("tsne is invariant to the worker thread count") {
  const MatrixX x = gaussian_cloud(50, 3, 17);
  TsneConfig cfg;
  cfg.perplexity = 6.0;
  cfg.iterations = 40;
  cfg.seed = 2;

  setenv("GSLAB_THREADS", "1", 1);
  const TsneResult serial = tsne(x, cfg);
  setenv("GSLAB_THREADS", "4", 1);
  const TsneResult threaded = tsne(x, cfg);
  unsetenv("GSLAB_THREADS");

  CHECK((serial.points - threaded.points).cwiseAbs().maxCoeff() == 0.0);
  CHECK(serial.kl_series == threaded.kl_series);
}

TEST_CASE("tsne validates its inputs") {
  const MatrixX x = gaussian_cloud(50, 3, 1);

  TsneConfig cfg;
  cfg.perplexity = 20.0;  // needs 61 points
  CHECK_THROWS_AS(tsne(x, cfg), std::invalid_argument);

  cfg.perplexity = 1.0;
  CHECK_THROWS_AS(tsne(x, cfg), std::invalid_argument);

  cfg.perplexity = 5.0;
  cfg.iterations = 0;
  CHECK_THROWS_AS(tsne(x, cfg), std::invalid_argument);

  cfg.iterations = 10;
  const MatrixX huge = MatrixX::Zero(5001, 2);
  CHECK_THROWS_AS(tsne(huge, cfg), std::invalid_argument);

  CHECK_THROWS_AS(conditional_affinities(x, 17.0), std::invalid_argument);
}
