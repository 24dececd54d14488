#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "addnet/errors.hpp"

namespace addnet {

/// Single-channel 2D array, rows = height, cols = width.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using PlaneXd = Plane<double>;
using PlaneXf = Plane<float>;

struct Size {
  int width = 0;
  int height = 0;

  friend bool operator==(const Size&, const Size&) = default;
};

/// Planar multi-channel image with intensities in [0,1].
template <typename Scalar>
struct Image {
  std::vector<Plane<Scalar>> channels;

  Image() = default;
  Image(int width, int height, int num_channels, Scalar fill = Scalar(0))
      : channels(num_channels, Plane<Scalar>::Constant(height, width, fill)) {}

  int width() const { return channels.empty() ? 0 : int(channels.front().cols()); }
  int height() const { return channels.empty() ? 0 : int(channels.front().rows()); }
  int num_channels() const { return int(channels.size()); }
  Size size() const { return {width(), height()}; }
  bool empty() const { return channels.empty() || channels.front().size() == 0; }

  template <typename Other>
  Image<Other> cast() const {
    Image<Other> out;
    out.channels.reserve(channels.size());
    for (const auto& c : channels) out.channels.push_back(c.template cast<Other>());
    return out;
  }

  friend bool operator==(const Image& a, const Image& b) {
    if (a.channels.size() != b.channels.size()) return false;
    for (std::size_t c = 0; c < a.channels.size(); ++c) {
      if (a.channels[c].rows() != b.channels[c].rows() ||
          a.channels[c].cols() != b.channels[c].cols())
        return false;
      if ((a.channels[c] != b.channels[c]).any()) return false;
    }
    return true;
  }
};

using ImageXf = Image<float>;
using ImageXd = Image<double>;

/// Rounds to the nearest of 256 levels, the precision of 8-bit storage.
template <typename Derived>
auto quantize8(const Eigen::ArrayBase<Derived>& values) {
  using Scalar = typename Derived::Scalar;
  return ((values.cwiseMax(Scalar(0)).cwiseMin(Scalar(1)) * Scalar(255)).round() /
          Scalar(255));
}

template <typename Scalar>
Image<Scalar> quantize8(const Image<Scalar>& image) {
  Image<Scalar> out = image;
  for (auto& c : out.channels) c = quantize8(c).eval();
  return out;
}

inline void require_same_size(Size a, Size b, const char* what) {
  if (!(a == b)) {
    throw ShapeMismatch(std::string(what) + ": " + std::to_string(a.width) + "x" +
                        std::to_string(a.height) + " vs " + std::to_string(b.width) +
                        "x" + std::to_string(b.height));
  }
}

}  // namespace addnet
