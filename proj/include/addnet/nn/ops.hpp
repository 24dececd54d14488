#pragma once

#include <type_traits>

#include "addnet/nn/tensor.hpp"

namespace addnet::nn {

// Reference parameters take Scalar from the tensor arguments, so that maps and
// blocks bind without a deduction conflict.
template <typename Scalar>
using ConstMatrixRef = std::type_identity_t<Eigen::Ref<const Matrix<Scalar>>>;
template <typename Scalar>
using MatrixRef = std::type_identity_t<Eigen::Ref<Matrix<Scalar>>>;
template <typename Scalar>
using ConstVectorRef = std::type_identity_t<Eigen::Ref<const Vector<Scalar>>>;
template <typename Scalar>
using VectorRef = std::type_identity_t<Eigen::Ref<Vector<Scalar>>>;

/// Rows ordered (channel, tap); columns are output positions.
template <typename Scalar>
Matrix<Scalar> im2col(const Tensor<Scalar>& x, const GatherIndex& gather) {
  const int taps = int(gather.index.rows());
  const int positions = int(gather.index.cols());
  Matrix<Scalar> cols(x.shape.channels * taps, positions);
  for (int c = 0; c < x.shape.channels; ++c)
    for (int t = 0; t < taps; ++t) {
      auto dst = cols.row(c * taps + t);
      for (int o = 0; o < positions; ++o) {
        const int i = gather.index(t, o);
        dst(o) = i < 0 ? Scalar(0) : x.data(c, i);
      }
    }
  return cols;
}

template <typename Scalar>
void col2im_add(const Matrix<Scalar>& cols, const GatherIndex& gather, Tensor<Scalar>& dx) {
  const int taps = int(gather.index.rows());
  const int positions = int(gather.index.cols());
  for (int c = 0; c < dx.shape.channels; ++c)
    for (int t = 0; t < taps; ++t) {
      const auto src = cols.row(c * taps + t);
      for (int o = 0; o < positions; ++o) {
        const int i = gather.index(t, o);
        if (i >= 0) dx.data(c, i) += src(o);
      }
    }
}

/// Dense convolution: y = W * im2col(x) + b. `cols` receives the im2col matrix.
template <typename Scalar>
Tensor<Scalar> conv_forward(const Tensor<Scalar>& x, const GatherIndex& gather,
                            const ConstMatrixRef<Scalar>& weight,
                            const ConstVectorRef<Scalar>& bias, Matrix<Scalar>& cols) {
  cols = im2col(x, gather);
  Shape out = gather.output;
  out.channels = int(weight.rows());
  Tensor<Scalar> y(out, weight * cols);
  y.data.colwise() += bias;
  return y;
}

/// Accumulates weight/bias gradients and returns dL/dx.
template <typename Scalar>
Tensor<Scalar> conv_backward(const Tensor<Scalar>& dy, const GatherIndex& gather,
                             const Matrix<Scalar>& cols, const ConstMatrixRef<Scalar>& weight,
                             MatrixRef<Scalar> weight_grad, VectorRef<Scalar> bias_grad) {
  weight_grad.noalias() += dy.data * cols.transpose();
  bias_grad += dy.data.rowwise().sum();
  const Matrix<Scalar> dcols = weight.transpose() * dy.data;
  Tensor<Scalar> dx(gather.input);
  col2im_add(dcols, gather, dx);
  return dx;
}

/// Per-channel convolution without bias; weight is channels x taps.
template <typename Scalar>
Tensor<Scalar> depthwise_forward(const Tensor<Scalar>& x, const GatherIndex& gather,
                                 const ConstMatrixRef<Scalar>& weight) {
  Shape out = gather.output;
  out.channels = x.shape.channels;
  Tensor<Scalar> y(out);
  const int taps = int(gather.index.rows());
  const int positions = int(gather.index.cols());
  for (int c = 0; c < x.shape.channels; ++c) {
    auto yc = y.data.row(c);
    const auto xc = x.data.row(c);
    for (int t = 0; t < taps; ++t) {
      const Scalar w = weight(c, t);
      for (int o = 0; o < positions; ++o) {
        const int i = gather.index(t, o);
        if (i >= 0) yc(o) += w * xc(i);
      }
    }
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> depthwise_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& dy,
                                  const GatherIndex& gather,
                                  const ConstMatrixRef<Scalar>& weight,
                                  MatrixRef<Scalar> weight_grad) {
  Tensor<Scalar> dx(x.shape);
  const int taps = int(gather.index.rows());
  const int positions = int(gather.index.cols());
  for (int c = 0; c < x.shape.channels; ++c) {
    const auto xc = x.data.row(c);
    const auto dyc = dy.data.row(c);
    auto dxc = dx.data.row(c);
    for (int t = 0; t < taps; ++t) {
      const Scalar w = weight(c, t);
      Scalar acc(0);
      for (int o = 0; o < positions; ++o) {
        const int i = gather.index(t, o);
        if (i >= 0) {
          acc += dyc(o) * xc(i);
          dxc(i) += w * dyc(o);
        }
      }
      weight_grad(c, t) += acc;
    }
  }
  return dx;
}

/// Broadcasts a single-channel spatial mask over every channel.
template <typename Scalar>
void multiply_by_mask(Tensor<Scalar>& t, const Plane<Scalar>& mask) {
  const Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> m(mask.data(), mask.size());
  t.data.array().rowwise() *= m.array();
}

/// dL/dmask for y = x * mask (broadcast): sum over channels of dy * x.
template <typename Scalar>
Plane<Scalar> mask_gradient(const Tensor<Scalar>& dy, const Tensor<Scalar>& x, int height,
                            int width) {
  Plane<Scalar> g(height, width);
  Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(g.data(), g.size()) =
      (dy.data.array() * x.data.array()).colwise().sum();
  return g;
}

}  // namespace addnet::nn
