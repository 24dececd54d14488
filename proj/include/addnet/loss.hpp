#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace addnet {

template <typename Scalar>
using Logits = Eigen::Matrix<Scalar, 2, 1>;

/// -log softmax(logits)[label] via log-sum-exp.
template <typename Scalar>
Scalar cross_entropy(const Logits<Scalar>& logits, int label) {
  const Scalar peak = logits.maxCoeff();
  const Scalar lse = peak + std::log((logits.array() - peak).exp().sum());
  return lse - logits(label);
}

template <typename Scalar>
Logits<Scalar> softmax(const Logits<Scalar>& logits) {
  const Logits<Scalar> e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

/// d cross_entropy / d logits = softmax - one_hot(label).
template <typename Scalar>
Logits<Scalar> cross_entropy_gradient(const Logits<Scalar>& logits, int label) {
  Logits<Scalar> g = softmax(logits);
  g(label) -= Scalar(1);
  return g;
}

/// Argmax with ties resolved to label 0.
template <typename Scalar>
int predict(const Logits<Scalar>& logits) {
  return logits(1) > logits(0) ? 1 : 0;
}

}  // namespace addnet
