#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "addnet/image.hpp"

namespace addnet::geometry {

using Point = Eigen::Vector2d;

/// Half-open index range into the 68-point layout.
struct IndexRange {
  int begin;
  int end;
  int size() const { return end - begin; }
};

namespace landmark_range {
inline constexpr IndexRange jaw{0, 17};
inline constexpr IndexRange eyebrows{17, 27};
inline constexpr IndexRange nose{27, 36};
inline constexpr IndexRange right_eye{36, 42};
inline constexpr IndexRange left_eye{42, 48};
inline constexpr IndexRange eyes{36, 48};
inline constexpr IndexRange mouth{48, 68};
}  // namespace landmark_range

/// 68 facial landmarks in image-frame pixel coordinates (x right, y down).
/// Pixel (row i, col j) has its center at (j, i).
class Landmark68 {
 public:
  static constexpr int kCount = 68;

  /// Throws Error if any coordinate is non-finite.
  explicit Landmark68(const std::array<Point, kCount>& points);

  /// Interleaved x0 y0 x1 y1 ...; throws Error unless exactly 136 finite values.
  static Landmark68 from_xy(std::span<const double> xy);

  const Point& operator[](int i) const { return points_[std::size_t(i)]; }
  std::span<const Point> points() const { return points_; }
  std::span<const Point> group(IndexRange r) const {
    return std::span<const Point>(points_).subspan(std::size_t(r.begin), std::size_t(r.size()));
  }

  Point mean_of(IndexRange r) const;
  Point right_eye_center() const { return mean_of(landmark_range::right_eye); }
  Point left_eye_center() const { return mean_of(landmark_range::left_eye); }
  Point mouth_center() const { return mean_of(landmark_range::mouth); }
  Point centroid() const { return mean_of({0, kCount}); }

  friend bool operator==(const Landmark68& a, const Landmark68& b) {
    return a.points_ == b.points_;
  }

 private:
  std::array<Point, kCount> points_;
};

/// p' = scale * R(rotation) * p + translation.
struct SimilarityTransform {
  double scale = 1.0;
  double rotation = 0.0;
  Point translation = Point::Zero();

  static SimilarityTransform identity() { return {}; }

  Eigen::Matrix2d linear() const {
    const double c = std::cos(rotation);
    const double s = std::sin(rotation);
    Eigen::Matrix2d m;
    m << scale * c, -scale * s, scale * s, scale * c;
    return m;
  }

  Point apply(const Point& p) const { return linear() * p + translation; }

  SimilarityTransform inverse() const;

  /// this ∘ other: applies other first.
  SimilarityTransform compose(const SimilarityTransform& other) const;
};

/// Target anchor positions as fractions of the output size.
struct CanonicalLayout {
  Point right_eye{0.35, 0.40};
  Point left_eye{0.65, 0.40};
  Point mouth{0.50, 0.75};

  std::array<Point, 3> anchors(Size output) const;
};

/// Eye centers and mouth center, the three alignment anchors.
std::array<Point, 3> alignment_anchors(const Landmark68& landmarks);

/// Least-squares similarity (no reflection) mapping `from` onto `to`.
SimilarityTransform fit_similarity(std::span<const Point> from, std::span<const Point> to);

/// Maps the detected eye and mouth centers onto the canonical layout.
/// Throws DegenerateLandmarks for coincident eye centers or a zero-area hull.
SimilarityTransform estimate_alignment(const Landmark68& landmarks,
                                       const CanonicalLayout& canonical, Size output);

Landmark68 transform_landmarks(const Landmark68& landmarks, const SimilarityTransform& t);

/// Convex hull in counter-clockwise order (y-down frame), collinear points dropped.
std::vector<Point> convex_hull(std::span<const Point> points);

double polygon_area(std::span<const Point> polygon);

/// Bilinear resampling by inverse mapping; neighbours outside the source count as 0.
template <typename Scalar>
Plane<Scalar> warp_plane(const Plane<Scalar>& source, const SimilarityTransform& transform,
                         Size output) {
  const SimilarityTransform inv = transform.inverse();
  const Eigen::Matrix2d m = inv.linear();
  const int src_h = int(source.rows());
  const int src_w = int(source.cols());
  Plane<Scalar> out(output.height, output.width);
  auto fetch = [&](int y, int x) -> double {
    if (x < 0 || y < 0 || x >= src_w || y >= src_h) return 0.0;
    return double(source(y, x));
  };
  for (int v = 0; v < output.height; ++v) {
    for (int u = 0; u < output.width; ++u) {
      const Point p = m * Point(u, v) + inv.translation;
      const double fx = std::floor(p.x());
      const double fy = std::floor(p.y());
      const int x0 = int(fx);
      const int y0 = int(fy);
      const double ax = p.x() - fx;
      const double ay = p.y() - fy;
      double value = (1 - ax) * (1 - ay) * fetch(y0, x0);
      if (ax != 0.0) value += ax * (1 - ay) * fetch(y0, x0 + 1);
      if (ay != 0.0) value += (1 - ax) * ay * fetch(y0 + 1, x0);
      if (ax != 0.0 && ay != 0.0) value += ax * ay * fetch(y0 + 1, x0 + 1);
      out(v, u) = Scalar(value);
    }
  }
  return out;
}

template <typename Scalar>
Image<Scalar> warp_image(const Image<Scalar>& image, const SimilarityTransform& transform,
                         Size output) {
  Image<Scalar> out;
  out.channels.reserve(image.channels.size());
  for (const auto& c : image.channels) out.channels.push_back(warp_plane(c, transform, output));
  return out;
}

/// Resamples the face and carries its landmarks through the same transform.
template <typename Scalar>
std::pair<Image<Scalar>, Landmark68> warp_face(const Image<Scalar>& image,
                                               const Landmark68& landmarks,
                                               const SimilarityTransform& transform,
                                               Size output) {
  if (image.empty()) throw ShapeMismatch("warp_face: empty image");
  if (output.width <= 0 || output.height <= 0)
    throw ShapeMismatch("warp_face: output size must be positive");
  return {warp_image(image, transform, output), transform_landmarks(landmarks, transform)};
}

/// Source of landmarks for an image, e.g. an external detector.
class LandmarkProvider {
 public:
  virtual ~LandmarkProvider() = default;
  virtual std::optional<Landmark68> detect(const ImageXf& image) = 0;
};

/// Sidecar format: 68 "x y" pairs; whitespace and commas both separate numbers.
Landmark68 read_landmarks(const std::filesystem::path& path);
void write_landmarks(const std::filesystem::path& path, const Landmark68& landmarks);
Landmark68 parse_landmarks(const std::string& text);
std::string format_landmarks(const Landmark68& landmarks);

}  // namespace addnet::geometry
