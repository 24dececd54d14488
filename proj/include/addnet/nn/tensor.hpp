#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>

#include "addnet/errors.hpp"
#include "addnet/image.hpp"

namespace addnet::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Channels x depth x height x width; 2D feature maps have depth 1.
struct Shape {
  int channels = 0;
  int depth = 1;
  int height = 0;
  int width = 0;

  int spatial() const { return depth * height * width; }
  std::string str() const {
    return std::to_string(channels) + "x" + std::to_string(depth) + "x" +
           std::to_string(height) + "x" + std::to_string(width);
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Feature map stored as a channels x spatial matrix, spatial index
/// (z * height + y) * width + x.
template <typename Scalar>
struct Tensor {
  Shape shape;
  Matrix<Scalar> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), data(Matrix<Scalar>::Zero(s.channels, s.spatial())) {}
  Tensor(Shape s, Matrix<Scalar> values) : shape(s), data(std::move(values)) {}

  static Tensor from_image(const Image<Scalar>& image) {
    Tensor t(Shape{image.num_channels(), 1, image.height(), image.width()});
    for (int c = 0; c < image.num_channels(); ++c)
      t.data.row(c) = Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(
          image.channels[std::size_t(c)].data(), t.shape.spatial());
    return t;
  }
};

/// Kernel, stride and zero padding per axis, ordered (depth, height, width).
struct ConvGeometry {
  std::array<int, 3> kernel{1, 1, 1};
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> padding{0, 0, 0};

  int taps() const { return kernel[0] * kernel[1] * kernel[2]; }

  Shape output(const Shape& in, int out_channels) const {
    auto out_dim = [&](int n, int axis) {
      return (n + 2 * padding[axis] - kernel[axis]) / stride[axis] + 1;
    };
    return Shape{out_channels, out_dim(in.depth, 0), out_dim(in.height, 1),
                 out_dim(in.width, 2)};
  }

  /// 2D "same"-style geometry: k x k kernel, padding k / 2.
  static ConvGeometry planar(int k, int stride) {
    return ConvGeometry{{1, k, k}, {1, stride, stride}, {0, k / 2, k / 2}};
  }
  static ConvGeometry volumetric(int k, int temporal_stride, int spatial_stride) {
    return ConvGeometry{{k, k, k}, {temporal_stride, spatial_stride, spatial_stride},
                        {k / 2, k / 2, k / 2}};
  }
};

/// For every kernel tap and output position, the input spatial index read
/// (or -1 for zero padding). Shared by dense and depthwise convolution.
struct GatherIndex {
  Shape input;
  Shape output;
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> index;  // taps x out

  GatherIndex(const Shape& in, const ConvGeometry& g) : input(in), output(g.output(in, 1)) {
    index.resize(g.taps(), output.spatial());
    int tap = 0;
    for (int kz = 0; kz < g.kernel[0]; ++kz)
      for (int ky = 0; ky < g.kernel[1]; ++ky)
        for (int kx = 0; kx < g.kernel[2]; ++kx, ++tap) {
          int o = 0;
          for (int z = 0; z < output.depth; ++z)
            for (int y = 0; y < output.height; ++y)
              for (int x = 0; x < output.width; ++x, ++o) {
                const int iz = z * g.stride[0] - g.padding[0] + kz;
                const int iy = y * g.stride[1] - g.padding[1] + ky;
                const int ix = x * g.stride[2] - g.padding[2] + kx;
                const bool inside = iz >= 0 && iz < in.depth && iy >= 0 && iy < in.height &&
                                    ix >= 0 && ix < in.width;
                index(tap, o) = inside ? (iz * in.height + iy) * in.width + ix : -1;
              }
        }
  }
};

}  // namespace addnet::nn
