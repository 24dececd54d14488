#include "addnet/geometry.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace addnet::geometry {

Landmark68::Landmark68(const std::array<Point, kCount>& points) : points_(points) {
  for (const auto& p : points_) {
    if (!std::isfinite(p.x()) || !std::isfinite(p.y()))
      throw Error("Landmark68: non-finite coordinate");
  }
}

Landmark68 Landmark68::from_xy(std::span<const double> xy) {
  if (xy.size() != 2 * kCount)
    throw Error("Landmark68: expected 136 values, got " + std::to_string(xy.size()));
  std::array<Point, kCount> pts;
  for (int i = 0; i < kCount; ++i) pts[std::size_t(i)] = Point(xy[2 * i], xy[2 * i + 1]);
  return Landmark68(pts);
}

Point Landmark68::mean_of(IndexRange r) const {
  Point sum = Point::Zero();
  for (int i = r.begin; i < r.end; ++i) sum += points_[std::size_t(i)];
  return sum / double(r.size());
}

SimilarityTransform SimilarityTransform::inverse() const {
  SimilarityTransform inv;
  inv.scale = 1.0 / scale;
  inv.rotation = -rotation;
  inv.translation = -(inv.linear() * translation);
  return inv;
}

SimilarityTransform SimilarityTransform::compose(const SimilarityTransform& other) const {
  SimilarityTransform out;
  out.scale = scale * other.scale;
  out.rotation = rotation + other.rotation;
  out.translation = linear() * other.translation + translation;
  return out;
}

std::array<Point, 3> CanonicalLayout::anchors(Size output) const {
  const Point s(output.width, output.height);
  return {right_eye.cwiseProduct(s), left_eye.cwiseProduct(s), mouth.cwiseProduct(s)};
}

std::array<Point, 3> alignment_anchors(const Landmark68& landmarks) {
  return {landmarks.right_eye_center(), landmarks.left_eye_center(), landmarks.mouth_center()};
}

SimilarityTransform fit_similarity(std::span<const Point> from, std::span<const Point> to) {
  if (from.size() != to.size() || from.empty())
    throw ShapeMismatch("fit_similarity: point sets must be non-empty and equal in size");
  const double n = double(from.size());
  Point mean_from = Point::Zero();
  Point mean_to = Point::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) {
    mean_from += from[i];
    mean_to += to[i];
  }
  mean_from /= n;
  mean_to /= n;

  // Closed-form least squares for x' = a x - b y + tx, y' = b x + a y + ty.
  double norm = 0.0, dot = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    const Point p = from[i] - mean_from;
    const Point q = to[i] - mean_to;
    norm += p.x() * p.x() + p.y() * p.y();
    dot += p.x() * q.x() + p.y() * q.y();
    cross += p.x() * q.y() - p.y() * q.x();
  }
  if (!(norm > 0.0)) throw DegenerateLandmarks("fit_similarity: source points coincide");
  const double a = dot / norm;
  const double b = cross / norm;
  SimilarityTransform t;
  t.scale = std::hypot(a, b);
  if (!(t.scale > 0.0)) throw DegenerateLandmarks("fit_similarity: zero scale");
  t.rotation = std::atan2(b, a);
  Eigen::Matrix2d m;
  m << a, -b, b, a;
  t.translation = mean_to - m * mean_from;
  return t;
}

SimilarityTransform estimate_alignment(const Landmark68& landmarks,
                                       const CanonicalLayout& canonical, Size output) {
  if (output.width <= 0 || output.height <= 0)
    throw ShapeMismatch("estimate_alignment: output size must be positive");
  const auto from = alignment_anchors(landmarks);
  if ((from[0] - from[1]).norm() == 0.0)
    throw DegenerateLandmarks("estimate_alignment: eye centers coincide");
  const auto hull = convex_hull(landmarks.points());
  if (hull.size() < 3 || polygon_area(hull) == 0.0)
    throw DegenerateLandmarks("estimate_alignment: landmark hull has zero area");
  const auto to = canonical.anchors(output);
  return fit_similarity(from, to);
}

Landmark68 transform_landmarks(const Landmark68& landmarks, const SimilarityTransform& t) {
  std::array<Point, Landmark68::kCount> out;
  const Eigen::Matrix2d m = t.linear();
  for (int i = 0; i < Landmark68::kCount; ++i)
    out[std::size_t(i)] = m * landmarks[i] + t.translation;
  return Landmark68(out);
}

namespace {

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

}  // namespace

std::vector<Point> convex_hull(std::span<const Point> points) {
  std::vector<Point> pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;

  // Andrew's monotone chain.
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

double polygon_area(std::span<const Point> polygon) {
  double twice = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const Point& a = polygon[i];
    const Point& b = polygon[(i + 1) % polygon.size()];
    twice += a.x() * b.y() - b.x() * a.y();
  }
  return std::abs(twice) / 2.0;
}

Landmark68 parse_landmarks(const std::string& text) {
  std::string cleaned = text;
  std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
  std::istringstream in(cleaned);
  std::vector<double> values;
  std::string token;
  while (in >> token) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      throw Error("landmarks: bad number '" + token + "'");
    }
    if (used != token.size()) throw Error("landmarks: bad number '" + token + "'");
    values.push_back(v);
  }
  return Landmark68::from_xy(values);
}

std::string format_landmarks(const Landmark68& landmarks) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const auto& p : landmarks.points()) out << p.x() << ' ' << p.y() << '\n';
  return out.str();
}

Landmark68 read_landmarks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open landmarks " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_landmarks(buffer.str());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void write_landmarks(const std::filesystem::path& path, const Landmark68& landmarks) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write landmarks " + path.string());
  out << format_landmarks(landmarks);
}

}  // namespace addnet::geometry
