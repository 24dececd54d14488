#include "addnet/synthetic_faces.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "addnet/hash.hpp"
#include "addnet/maskgen.hpp"

namespace addnet::synthetic {

using geometry::Landmark68;
using geometry::Point;
using geometry::SimilarityTransform;

namespace {

constexpr double kPi = std::numbers::pi;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Color random_color(std::mt19937_64& rng, float lo, float hi) {
  return Color(float(uniform(rng, lo, hi)), float(uniform(rng, lo, hi)),
               float(uniform(rng, lo, hi)));
}

void hexagon(std::array<Point, 68>& pts, int first, Point center, double dx, double dy) {
  const Point offsets[6] = {{-dx, 0.0},     {-dx / 2, -dy}, {dx / 2, -dy},
                            {dx, 0.0},      {dx / 2, dy},   {-dx / 2, dy}};
  for (int i = 0; i < 6; ++i) pts[std::size_t(first + i)] = center + offsets[i];
}

void ellipse(std::array<Point, 68>& pts, int first, int count, Point center, double rx,
             double ry) {
  for (int i = 0; i < count; ++i) {
    const double a = kPi - 2.0 * kPi * i / count;
    pts[std::size_t(first + i)] = center + Point(rx * std::cos(a), ry * std::sin(a));
  }
}

struct TemplateParams {
  double eye_spacing = 0.0;
  double mouth_width = 0.0;
  double jaw_width = 0.0;
  double nose_length = 0.0;
};

std::array<Point, 68> build_template(const TemplateParams& p) {
  std::array<Point, 68> pts;
  for (int k = 0; k <= 16; ++k) {
    const double a = kPi - k * kPi / 16.0;
    pts[std::size_t(k)] = Point(0.5 + (0.40 + p.jaw_width) * std::cos(a), 0.42 + 0.50 * std::sin(a));
  }
  for (int k = 0; k < 5; ++k) {
    const double t = k / 4.0;
    const double lift = 0.04 * std::sin(kPi * t);
    pts[std::size_t(17 + k)] = Point(0.20 - p.eye_spacing + 0.24 * t, 0.30 - lift);
    pts[std::size_t(22 + k)] = Point(0.56 + p.eye_spacing + 0.24 * t, 0.30 - lift);
  }
  const double nose_end = 0.61 + p.nose_length;
  for (int k = 0; k < 4; ++k) pts[std::size_t(27 + k)] = Point(0.5, 0.40 + (nose_end - 0.40) * k / 3.0);
  const double nostril_y[5] = {0.64, 0.655, 0.665, 0.655, 0.64};
  for (int k = 0; k < 5; ++k)
    pts[std::size_t(31 + k)] = Point(0.43 + 0.035 * k, nostril_y[k] + p.nose_length);
  hexagon(pts, 36, Point(0.35 - p.eye_spacing, 0.40), 0.07, 0.03);
  hexagon(pts, 42, Point(0.65 + p.eye_spacing, 0.40), 0.07, 0.03);
  ellipse(pts, 48, 12, Point(0.5, 0.75), 0.13 + p.mouth_width, 0.06);
  ellipse(pts, 60, 8, Point(0.5, 0.75), 0.08 + p.mouth_width, 0.025);
  return pts;
}

Landmark68 place(const std::array<Point, 68>& unit, Size size, const SimilarityTransform& pose) {
  std::array<Point, 68> pts;
  const Point scale(size.width, size.height);
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = pose.apply(unit[i].cwiseProduct(scale));
  return Landmark68(pts);
}

/// Paints `color` wherever `mask` is set, modulated by `shade`.
void paint(std::vector<PlaneXf>& canvas, const PlaneXd& mask, const Color& color,
           const PlaneXf* shade = nullptr) {
  for (int c = 0; c < 3; ++c) {
    PlaneXf fill = PlaneXf::Constant(mask.rows(), mask.cols(), color(c));
    if (shade) fill *= *shade;
    canvas[std::size_t(c)] = (mask > 0.0).select(fill, canvas[std::size_t(c)]);
  }
}

}  // namespace

FaceIdentity random_identity(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FaceIdentity id;
  const float r = float(uniform(rng, 0.40, 0.95));
  const float g = r * float(uniform(rng, 0.60, 0.85));
  const float b = g * float(uniform(rng, 0.65, 0.95));
  id.skin = Color(r, g, b);
  id.background = random_color(rng, 0.05f, 0.95f);
  id.lips = Color(float(uniform(rng, 0.5, 0.9)), float(uniform(rng, 0.15, 0.4)),
                  float(uniform(rng, 0.15, 0.4)));
  id.iris = random_color(rng, 0.05f, 0.5f);
  id.brows = id.skin * float(uniform(rng, 0.15, 0.5));
  id.grain = float(uniform(rng, 0.01, 0.04));
  id.light = float(uniform(rng, -0.3, 0.3));
  id.eye_spacing = uniform(rng, -0.02, 0.02);
  id.mouth_width = uniform(rng, -0.02, 0.03);
  id.jaw_width = uniform(rng, -0.04, 0.03);
  id.nose_length = uniform(rng, -0.02, 0.02);
  id.texture_seed = rng();
  return id;
}

std::array<Point, 68> unit_template() { return build_template({}); }

Landmark68 canonical_landmarks(Size size) {
  return place(unit_template(), size, SimilarityTransform::identity());
}

Landmark68 face_landmarks(const FaceIdentity& identity, Size size, const SimilarityTransform& pose) {
  TemplateParams p;
  p.eye_spacing = identity.eye_spacing;
  p.mouth_width = identity.mouth_width;
  p.jaw_width = identity.jaw_width;
  p.nose_length = identity.nose_length;
  return place(build_template(p), size, pose);
}

SimilarityTransform random_pose(std::uint64_t seed, Size size, double max_rotation,
                                double min_scale, double max_scale, double max_shift) {
  std::mt19937_64 rng(seed);
  const double angle = uniform(rng, -max_rotation, max_rotation);
  const double scale = uniform(rng, min_scale, max_scale);
  const Point shift(uniform(rng, -max_shift, max_shift) * size.width,
                    uniform(rng, -max_shift, max_shift) * size.height);
  const Point center(size.width / 2.0, size.height / 2.0);
  SimilarityTransform about_center;
  about_center.scale = scale;
  about_center.rotation = angle;
  about_center.translation = center - about_center.linear() * center + shift;
  return about_center;
}

ImageXf render_face(const FaceIdentity& id, const Landmark68& landmarks, Size size,
                    std::uint64_t noise_seed) {
  constexpr int ss = 4;
  const Size big{size.width * ss, size.height * ss};
  auto to_big = [&](const Point& p) { return Point((p.x() + 0.5) * ss - 0.5, (p.y() + 0.5) * ss - 0.5); };
  std::vector<Point> pts;
  for (const auto& p : landmarks.points()) pts.push_back(to_big(p));
  auto group = [&](int begin, int end) { return std::vector<Point>(pts.begin() + begin, pts.begin() + end); };

  std::vector<PlaneXf> canvas;
  for (int c = 0; c < 3; ++c) {
    PlaneXf bg(big.height, big.width);
    for (int y = 0; y < big.height; ++y)
      bg.row(y).setConstant(id.background(c) * (0.85f + 0.3f * float(y) / float(big.height)));
    canvas.push_back(bg);
  }

  auto hull = [&](const std::vector<Point>& p) {
    try {
      return maskgen::rasterize_hull_mask(p, big);
    } catch (const DegenerateHull&) {
      return PlaneXd::Zero(big.height, big.width).eval();
    }
  };

  // Skin with a horizontal lighting gradient centered on the face.
  const double cx = landmarks.centroid().x() * ss;
  const double face_w = std::max(1.0, (pts[16] - pts[0]).norm());
  PlaneXf shade(big.height, big.width);
  for (int x = 0; x < big.width; ++x)
    shade.col(x).setConstant(float(1.0 + id.light * (x - cx) / face_w));
  paint(canvas, hull(pts), id.skin, &shade);

  const double thickness = 0.012 * big.height;
  for (int first : {17, 22}) {
    std::vector<Point> brow;
    for (int k = first; k < first + 5; ++k) {
      brow.push_back(pts[std::size_t(k)] + Point(0, -thickness));
      brow.push_back(pts[std::size_t(k)] + Point(0, thickness));
    }
    paint(canvas, hull(brow), id.brows);
  }

  for (int first : {36, 42}) {
    const auto eye = group(first, first + 6);
    paint(canvas, hull(eye), Color(0.92f, 0.92f, 0.9f));
    Point c = Point::Zero();
    for (const auto& p : eye) c += p;
    c /= 6.0;
    const double radius = 0.45 * (eye[4] - eye[2]).norm();
    PlaneXd iris = PlaneXd::Zero(big.height, big.width);
    for (int y = 0; y < big.height; ++y)
      for (int x = 0; x < big.width; ++x)
        if ((Point(x, y) - c).norm() <= radius) iris(y, x) = 1.0;
    paint(canvas, iris * hull(eye), id.iris);
  }

  auto nostrils = group(31, 36);
  nostrils.push_back(pts[30]);
  paint(canvas, hull(nostrils), id.skin * 0.7f, &shade);
  paint(canvas, hull(group(48, 60)), id.lips);
  paint(canvas, hull(group(60, 68)), id.lips * 0.4f);

  ImageXf out(size.width, size.height, 3);
  std::mt19937_64 rng(mix_seed(id.texture_seed, noise_seed));
  std::normal_distribution<float> noise(0.0f, 1.0f);
  for (int c = 0; c < 3; ++c) {
    out.channels[std::size_t(c)] = maskgen::average_pool(canvas[std::size_t(c)], ss, ss);
  }
  for (int y = 0; y < size.height; ++y)
    for (int x = 0; x < size.width; ++x) {
      const float n = id.grain * noise(rng);
      for (int c = 0; c < 3; ++c) {
        float& v = out.channels[std::size_t(c)](y, x);
        v = std::clamp(v + n * (0.8f + 0.2f * float(c)), 0.0f, 1.0f);
      }
    }
  return out;
}

std::vector<FaceRecord> render_pool(int count, Size size, std::uint64_t seed) {
  std::vector<FaceRecord> pool;
  pool.reserve(std::size_t(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = mix_seed(seed, std::uint64_t(i));
    const FaceIdentity id = random_identity(s);
    const auto pose = random_pose(mix_seed(s, 1), size, 0.12, 0.85, 1.0, 0.04);
    const Landmark68 lm = face_landmarks(id, size, pose);
    char tag[16];
    std::snprintf(tag, sizeof(tag), "id%04d", i);
    pool.push_back({render_face(id, lm, size, mix_seed(s, 2)), lm, tag});
  }
  return pool;
}

}  // namespace addnet::synthetic
