#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>

namespace gslab {

// All numerics run in double precision end to end.
using Scalar = double;
using Index = Eigen::Index;

using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorX = Eigen::Vector<Scalar, Eigen::Dynamic>;
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
using ArrayXX = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MapMatrix = Eigen::Map<MatrixX>;
using ConstMapMatrix = Eigen::Map<const MatrixX>;
using MapVector = Eigen::Map<VectorX>;
using ConstMapVector = Eigen::Map<const VectorX>;

// Worker cap for data-parallel loops. Reads GSLAB_THREADS (default 1,
// invalid or non-positive values fall back to 1).
int thread_count();

// Runs fn(i) for i in [0, n). Splits the range over thread_count() workers;
// fn must only write to state owned by index i. With a single worker this is
// a plain loop, so results never depend on the worker count.
void parallel_for(Index n, const std::function<void(Index)>& fn);

}  // namespace gslab
