#pragma once

#include <optional>
#include <span>
#include <vector>

#include "addnet/errors.hpp"
#include "addnet/geometry.hpp"
#include "addnet/image.hpp"

namespace addnet::maskgen {

using geometry::Landmark68;
using geometry::Point;

/// Soft face/organ saliency in [0,1], same spatial size as the face it annotates.
struct AttentionMask {
  PlaneXd values;
  std::optional<Landmark68> source_landmarks;

  Size size() const { return {int(values.cols()), int(values.rows())}; }
};

/// levels[0] is the base mask at network input resolution; levels[k + 1] is the
/// mask for the k-th attention injection point.
template <typename Scalar>
struct BasicMaskPyramid {
  std::vector<Plane<Scalar>> levels;

  const Plane<Scalar>& base() const { return levels.front(); }
  const Plane<Scalar>& injection_level(std::size_t k) const { return levels.at(k + 1); }
  std::size_t num_injections() const { return levels.empty() ? 0 : levels.size() - 1; }

  template <typename Other>
  BasicMaskPyramid<Other> cast() const {
    BasicMaskPyramid<Other> out;
    for (const auto& l : levels) out.levels.push_back(l.template cast<Other>());
    return out;
  }
};

using MaskPyramid = BasicMaskPyramid<double>;

/// Pixels inside or on the convex hull of `points` are 1, the rest 0.
/// Throws DegenerateHull when the points are collinear (or fewer than 3 distinct).
PlaneXd rasterize_hull_mask(std::span<const Point> points, Size size);

/// Hull of all 68 points. Emits a warning when the result is empty.
PlaneXd make_face_mask(const Landmark68& landmarks, Size size, Warnings* warnings = nullptr);

/// Union of the eyes (36-47), nose (27-35) and mouth (48-67) hulls. A degenerate
/// organ contributes nothing and emits a warning.
PlaneXd make_organ_mask(const Landmark68& landmarks, Size size, Warnings* warnings = nullptr);

/// 0.02 * min(W, H).
double default_sigma(Size size);

/// ceil(3 * sigma).
int default_kernel_radius(double sigma);

/// Sampled Gaussian on [-radius, radius], normalized to sum to 1.
Eigen::VectorXd gaussian_kernel(double sigma, int radius);

/// Separable Gaussian blur with reflect-101 borders; output clamped to [0,1].
PlaneXd smooth_mask(const PlaneXd& mask, double sigma, int kernel_radius);

/// normalize(smooth(face) + smooth(organ)), dividing by the maximum.
AttentionMask generate_attention_mask(const Landmark68& landmarks, Size size, double sigma,
                                      Warnings* warnings = nullptr);

/// Mean over non-overlapping kx-by-ky tiles.
template <typename Scalar>
Plane<Scalar> average_pool(const Plane<Scalar>& input, int kx, int ky) {
  const int h = int(input.rows()) / ky;
  const int w = int(input.cols()) / kx;
  Plane<Scalar> out(h, w);
  const Scalar inv = Scalar(1) / Scalar(kx * ky);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(y, x) = input.block(y * ky, x * kx, ky, kx).sum() * inv;
  return out;
}

/// Adjoint of average_pool: spreads each pooled gradient evenly over its tile.
template <typename Scalar>
Plane<Scalar> average_pool_adjoint(const Plane<Scalar>& grad, int kx, int ky) {
  Plane<Scalar> out(grad.rows() * ky, grad.cols() * kx);
  const Scalar inv = Scalar(1) / Scalar(kx * ky);
  for (int y = 0; y < grad.rows(); ++y)
    for (int x = 0; x < grad.cols(); ++x)
      out.block(y * ky, x * kx, ky, kx).setConstant(grad(y, x) * inv);
  return out;
}

/// Average-pools the base mask to each target; targets must tile the base
/// exactly and be strictly decreasing. Throws IncompatibleResolution otherwise.
template <typename Scalar>
BasicMaskPyramid<Scalar> build_mask_pyramid(const Plane<Scalar>& base,
                                            std::span<const Size> targets) {
  BasicMaskPyramid<Scalar> pyramid;
  pyramid.levels.push_back(base);
  const int bw = int(base.cols());
  const int bh = int(base.rows());
  Size previous{bw, bh};
  for (const Size& t : targets) {
    if (t.width <= 0 || t.height <= 0 || bw % t.width != 0 || bh % t.height != 0) {
      throw IncompatibleResolution("mask pyramid: " + std::to_string(t.width) + "x" +
                                   std::to_string(t.height) + " does not tile " +
                                   std::to_string(bw) + "x" + std::to_string(bh));
    }
    if (t.width >= previous.width || t.height >= previous.height)
      throw IncompatibleResolution("mask pyramid: resolutions must strictly decrease");
    pyramid.levels.push_back(average_pool(base, bw / t.width, bh / t.height));
    previous = t;
  }
  return pyramid;
}

inline MaskPyramid build_mask_pyramid(const AttentionMask& mask, std::span<const Size> targets) {
  return build_mask_pyramid(mask.values, targets);
}

}  // namespace addnet::maskgen
