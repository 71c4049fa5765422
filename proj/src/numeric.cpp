#include "fused/numeric.hpp"

#include <cmath>
#include <string>

#include "fused/errors.hpp"

namespace fused {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + ")");
  }
  return a * b;
}

Matrix softmax(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const double m = p.row(r).maxCoeff();
    p.row(r) = (p.row(r).array() - m).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

SoftmaxXentResult softmax_cross_entropy(const Matrix& logits, const Labels& labels) {
  const Eigen::Index rows = logits.rows();
  const Eigen::Index cols = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    throw DimensionError("softmax_cross_entropy: batch size " + std::to_string(rows) +
                         " but " + std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || y >= cols) {
      throw DomainError("softmax_cross_entropy: label " + std::to_string(y) +
                        " outside [0, " + std::to_string(cols) + ")");
    }
  }

  SoftmaxXentResult out;
  out.grad = Matrix::Zero(rows, cols);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double m = logits.row(r).maxCoeff();
    const Eigen::ArrayXd shifted = logits.row(r).transpose().array() - m;
    const Eigen::ArrayXd ex = shifted.exp();
    const double z = ex.sum();
    loss += std::log(z) - shifted(labels[r]);
    out.grad.row(r) = (ex / z).matrix().transpose();
    out.grad(r, labels[r]) -= 1.0;
  }
  const double inv = 1.0 / static_cast<double>(rows);
  out.loss = loss * inv;
  out.grad *= inv;
  return out;
}

Matrix sgd_step(const Matrix& params, const Matrix& grads, double lr) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols()) {
    throw DimensionError("sgd_step: parameter and gradient shapes differ");
  }
  if (!(lr > 0.0)) throw DomainError("sgd_step: learning rate must be positive");
  return params - lr * grads;
}

bool all_finite(const Matrix& m) {
  return m.allFinite();
}

}  // namespace fused
