#pragma once

#include <Eigen/Dense>
#include <vector>

namespace fused {

// Dense row-major matrices; row-major so serialized parameter blocks and flat
// adapter indices read in the natural order.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

// Class-index labels for a batch.
using Labels = std::vector<int>;

// a (m x k) times b (k x n). Throws DimensionError on inner mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

// Element-wise max(x, 0), usable on any dense expression.
template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

// Derivative mask of relu at the pre-activation: 1 where z > 0.
template <typename Derived>
auto relu_grad(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  return (z.array() > Scalar(0)).template cast<Scalar>().matrix();
}

struct SoftmaxXentResult {
  double loss = 0.0;  // mean negative log-likelihood over the batch
  Matrix grad;        // d loss / d logits, same shape as logits
};

// Mean softmax cross-entropy over a batch of logits (rows) with class-index
// labels. Labels must lie in [0, logits.cols()).
SoftmaxXentResult softmax_cross_entropy(const Matrix& logits, const Labels& labels);

// Row-wise softmax probabilities (numerically stabilized).
Matrix softmax(const Matrix& logits);

// params - lr * grads, element-wise. lr must be positive.
Matrix sgd_step(const Matrix& params, const Matrix& grads, double lr);

// True when every entry is finite.
bool all_finite(const Matrix& m);

}  // namespace fused
