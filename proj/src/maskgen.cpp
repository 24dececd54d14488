#include "addnet/maskgen.hpp"

#include <algorithm>
#include <cmath>

namespace addnet::maskgen {

PlaneXd rasterize_hull_mask(std::span<const Point> points, Size size) {
  const auto hull = geometry::convex_hull(points);
  if (hull.size() < 3) throw DegenerateHull("rasterize_hull_mask: points are collinear");

  PlaneXd mask = PlaneXd::Zero(size.height, size.width);
  double min_x = hull[0].x(), max_x = min_x, min_y = hull[0].y(), max_y = min_y;
  for (const auto& p : hull) {
    min_x = std::min(min_x, p.x());
    max_x = std::max(max_x, p.x());
    min_y = std::min(min_y, p.y());
    max_y = std::max(max_y, p.y());
  }
  const int x0 = std::max(0, int(std::floor(min_x)));
  const int x1 = std::min(size.width - 1, int(std::ceil(max_x)));
  const int y0 = std::max(0, int(std::floor(min_y)));
  const int y1 = std::min(size.height - 1, int(std::ceil(max_y)));

  // Hull is counter-clockwise in the (x, y) plane: interior lies on the
  // non-negative side of every edge. Boundary pixels count as inside.
  const std::size_t n = hull.size();
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      bool inside = true;
      for (std::size_t i = 0; i < n && inside; ++i) {
        const Point& a = hull[i];
        const Point& b = hull[(i + 1) % n];
        const Point e = b - a;
        const double side = e.x() * (y - a.y()) - e.y() * (x - a.x());
        inside = side >= -1e-9 * e.norm();
      }
      if (inside) mask(y, x) = 1.0;
    }
  }
  return mask;
}

PlaneXd make_face_mask(const Landmark68& landmarks, Size size, Warnings* warnings) {
  PlaneXd mask = rasterize_hull_mask(landmarks.points(), size);
  if ((mask == 0.0).all()) warn(warnings, "face mask is empty (landmarks outside the image)");
  return mask;
}

PlaneXd make_organ_mask(const Landmark68& landmarks, Size size, Warnings* warnings) {
  struct Organ {
    const char* name;
    geometry::IndexRange range;
  };
  constexpr Organ organs[] = {{"eyes", geometry::landmark_range::eyes},
                              {"nose", geometry::landmark_range::nose},
                              {"mouth", geometry::landmark_range::mouth}};
  PlaneXd mask = PlaneXd::Zero(size.height, size.width);
  for (const auto& organ : organs) {
    try {
      mask = mask.max(rasterize_hull_mask(landmarks.group(organ.range), size));
    } catch (const DegenerateHull&) {
      warn(warnings, std::string("degenerate ") + organ.name + " hull skipped");
    }
  }
  return mask;
}

double default_sigma(Size size) { return 0.02 * double(std::min(size.width, size.height)); }

int default_kernel_radius(double sigma) { return int(std::ceil(3.0 * sigma)); }

Eigen::VectorXd gaussian_kernel(double sigma, int radius) {
  Eigen::VectorXd k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i)
    k(i + radius) = std::exp(-double(i) * double(i) / (2.0 * sigma * sigma));
  return k / k.sum();
}

namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = std::abs(i) % period;
  return i < n ? i : period - i;
}

}  // namespace

PlaneXd smooth_mask(const PlaneXd& mask, double sigma, int kernel_radius) {
  if (!(sigma > 0.0)) throw Error("smooth_mask: sigma must be positive");
  const int r = std::max(0, kernel_radius);
  const Eigen::VectorXd k = gaussian_kernel(sigma, r);
  const int h = int(mask.rows());
  const int w = int(mask.cols());

  PlaneXd horizontal(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int d = -r; d <= r; ++d) acc += k(d + r) * mask(y, reflect101(x + d, w));
      horizontal(y, x) = acc;
    }
  }
  PlaneXd out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int d = -r; d <= r; ++d) acc += k(d + r) * horizontal(reflect101(y + d, h), x);
      out(y, x) = acc;
    }
  }
  return out.cwiseMax(0.0).cwiseMin(1.0);
}

AttentionMask generate_attention_mask(const Landmark68& landmarks, Size size, double sigma,
                                      Warnings* warnings) {
  const int radius = default_kernel_radius(sigma);
  const PlaneXd face = make_face_mask(landmarks, size, warnings);
  const PlaneXd organ = make_organ_mask(landmarks, size, warnings);
  PlaneXd sum = smooth_mask(face, sigma, radius) + smooth_mask(organ, sigma, radius);
  const double peak = sum.maxCoeff();
  AttentionMask mask;
  mask.source_landmarks = landmarks;
  if (peak > 0.0) {
    mask.values = (sum / peak).cwiseMax(0.0).cwiseMin(1.0);
  } else {
    warn(warnings, "attention mask is empty");
    mask.values = PlaneXd::Zero(size.height, size.width);
  }
  return mask;
}

}  // namespace addnet::maskgen
