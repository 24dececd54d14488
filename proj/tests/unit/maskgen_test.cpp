#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "addnet/maskgen.hpp"
#include "addnet/synthetic_faces.hpp"
#include "support/oracles.hpp"

using namespace addnet;
using namespace addnet::maskgen;
using geometry::Landmark68;
using geometry::Point;

namespace {

/// Random convex polygon: sorted random angles on a random ellipse.
std::vector<Point> random_convex(std::mt19937_64& rng, Size size) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 3 + int(u(rng) * 10);
  std::vector<double> angles;
  for (int i = 0; i < n; ++i) angles.push_back(2 * std::numbers::pi * u(rng));
  std::sort(angles.begin(), angles.end());
  const Point c(size.width * (0.2 + 0.6 * u(rng)), size.height * (0.2 + 0.6 * u(rng)));
  const double rx = size.width * (0.1 + 0.5 * u(rng));
  const double ry = size.height * (0.1 + 0.5 * u(rng));
  std::vector<Point> poly;
  for (double a : angles) poly.push_back(c + Point(rx * std::cos(a), ry * std::sin(a)));
  return poly;
}

Landmark68 with_group(Landmark68 lm, geometry::IndexRange r, const std::vector<Point>& pts) {
  std::array<Point, 68> all;
  for (int i = 0; i < 68; ++i) all[std::size_t(i)] = lm[i];
  for (int i = r.begin; i < r.end; ++i) all[std::size_t(i)] = pts[std::size_t(i - r.begin)];
  return Landmark68(all);
}

std::vector<Point> collinear(int n, Point start, Point step) {
  std::vector<Point> v;
  for (int i = 0; i < n; ++i) v.push_back(start + double(i) * step);
  return v;
}

}  // namespace

TEST(RasterizeHull, CenteredSquareMatchesOracle) {
  const Size size{100, 100};
  const std::vector<Point> square = {{25, 25}, {75, 25}, {75, 75}, {25, 75}};
  const PlaneXd mask = rasterize_hull_mask(square, size);
  const PlaneXd oracle = oracle::oracle_polygon_mask(square, size);
  EXPECT_EQ(mask.sum(), 51.0 * 51.0);
  EXPECT_TRUE((mask == oracle).all());
}

TEST(RasterizeHull, CollinearPointsAreDegenerate) {
  const std::vector<Point> line = {{0, 0}, {5, 5}, {10, 10}};
  EXPECT_THROW(rasterize_hull_mask(line, {20, 20}), DegenerateHull);
}

TEST(RasterizeHull, CoveringHullGivesAllOnes) {
  const std::vector<Point> big = {{-5, -5}, {50, -5}, {50, 40}, {-5, 40}};
  EXPECT_TRUE((rasterize_hull_mask(big, {30, 20}) == 1.0).all());
}

TEST(RasterizeHull, AgreesWithOracleOnRandomConvexShapes) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const Size size{40 + trial, 60 - trial / 2};
    const auto poly = random_convex(rng, size);
    const PlaneXd mask = rasterize_hull_mask(poly, size);
    const PlaneXd oracle = oracle::oracle_polygon_mask(poly, size);
    EXPECT_TRUE((mask == oracle).all()) << "trial " << trial;
  }
}

TEST(FaceMask, MatchesHullOracleAndCoversCentroid) {
  const Size size{120, 120};
  const auto lm = synthetic::canonical_landmarks(size);
  const PlaneXd face = make_face_mask(lm, size);
  EXPECT_TRUE((face == oracle::oracle_hull_mask(lm.points(), size)).all());
  const Point c = lm.centroid();
  EXPECT_EQ(face(int(std::lround(c.y())), int(std::lround(c.x()))), 1.0);
}

TEST(FaceMask, OutsideImageIsEmptyWithWarning) {
  std::array<Point, 68> pts;
  const auto unit = synthetic::unit_template();
  for (int i = 0; i < 68; ++i) pts[std::size_t(i)] = unit[std::size_t(i)] * 50.0 + Point(500, 500);
  Warnings w;
  const PlaneXd face = make_face_mask(Landmark68(pts), {64, 64}, &w);
  EXPECT_TRUE((face == 0.0).all());
  EXPECT_EQ(w.size(), 1u);
}

TEST(OrganMask, StrictSubsetOfFaceMask) {
  const Size size{128, 128};
  const auto lm = synthetic::canonical_landmarks(size);
  const PlaneXd face = oracle::oracle_hull_mask(lm.points(), size);
  const PlaneXd organ = make_organ_mask(lm, size);
  EXPECT_TRUE(((organ > 0) <= (face > 0)).all());
  EXPECT_LT(organ.sum(), face.sum());
  EXPECT_GT(organ.sum(), 0.0);

  PlaneXd oracle_union = PlaneXd::Zero(size.height, size.width);
  for (auto r : {geometry::landmark_range::eyes, geometry::landmark_range::nose,
                 geometry::landmark_range::mouth})
    oracle_union = oracle_union.max(oracle::oracle_hull_mask(lm.group(r), size));
  EXPECT_TRUE((organ == oracle_union).all());
}

TEST(OrganMask, CollinearOrgansGiveEmptyMaskAndThreeWarnings) {
  auto lm = synthetic::canonical_landmarks({64, 64});
  lm = with_group(lm, geometry::landmark_range::eyes, collinear(12, {10, 20}, {2, 0}));
  lm = with_group(lm, geometry::landmark_range::nose, collinear(9, {32, 20}, {0, 2}));
  lm = with_group(lm, geometry::landmark_range::mouth, collinear(20, {15, 50}, {1, 0}));
  Warnings w;
  const PlaneXd organ = make_organ_mask(lm, {64, 64}, &w);
  EXPECT_TRUE((organ == 0.0).all());
  EXPECT_EQ(w.size(), 3u);
}

TEST(OrganMask, OverlappingOrgansCountedOnce) {
  const Size size{64, 64};
  auto lm = synthetic::canonical_landmarks(size);
  // Stretch the nose down through the mouth.
  std::vector<Point> nose;
  for (int i = 27; i < 36; ++i) nose.push_back(lm[i] + Point(0, i >= 31 ? 16.0 : 0.0));
  lm = with_group(lm, geometry::landmark_range::nose, nose);
  const PlaneXd organ = make_organ_mask(lm, size);
  const PlaneXd nose_only = rasterize_hull_mask(lm.group(geometry::landmark_range::nose), size);
  const PlaneXd mouth_only = rasterize_hull_mask(lm.group(geometry::landmark_range::mouth), size);
  ASSERT_GT((nose_only * mouth_only).sum(), 0.0);
  EXPECT_EQ(organ.maxCoeff(), 1.0);
}

TEST(SmoothMask, ConstantsArePreserved) {
  const PlaneXd ones = PlaneXd::Ones(20, 30);
  EXPECT_LE((smooth_mask(ones, 1.7, 6) - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_TRUE((smooth_mask(PlaneXd::Zero(20, 30), 1.7, 6) == 0.0).all());
}

TEST(SmoothMask, ImpulseReproducesKernel) {
  PlaneXd impulse = PlaneXd::Zero(33, 33);
  impulse(16, 16) = 1.0;
  const double sigma = 2.0;
  const int radius = default_kernel_radius(sigma);
  EXPECT_EQ(radius, 6);
  const PlaneXd out = smooth_mask(impulse, sigma, radius);
  const PlaneXd oracle = oracle::naive_gaussian_blur(impulse, sigma, radius);
  EXPECT_LE((out - oracle).abs().maxCoeff(), 1e-14);
  EXPECT_NEAR(out.sum(), 1.0, 1e-12);
}

TEST(SmoothMask, AgreesWithNaiveConvolutionAtBorders) {
  std::mt19937_64 rng(8);
  std::bernoulli_distribution coin(0.3);
  PlaneXd m(17, 23);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = coin(rng) ? 1.0 : 0.0;
  const PlaneXd out = smooth_mask(m, 3.0, 9);
  EXPECT_LE((out - oracle::naive_gaussian_blur(m, 3.0, 9).cwiseMin(1.0)).abs().maxCoeff(), 1e-12);
}

TEST(SmoothMask, PreservesElementwiseOrder) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    PlaneXd lo(24, 24), hi(24, 24);
    for (int i = 0; i < lo.size(); ++i) {
      lo.data()[i] = u(rng) < 0.4 ? 1.0 : 0.0;
      hi.data()[i] = std::max(lo.data()[i], u(rng) < 0.3 ? 1.0 : 0.0);
    }
    EXPECT_TRUE((smooth_mask(hi, 1.5, 5) >= smooth_mask(lo, 1.5, 5)).all());
  }
}

TEST(SmoothMask, RejectsNonPositiveSigma) {
  EXPECT_THROW(smooth_mask(PlaneXd::Ones(4, 4), 0.0, 1), Error);
}

TEST(AttentionMask, RegionLevels) {
  const Size size{256, 256};
  const auto lm = synthetic::canonical_landmarks(size);
  const double sigma = 2.0;
  const int r = default_kernel_radius(sigma);
  const AttentionMask mask = generate_attention_mask(lm, size, sigma);
  const PlaneXd face = oracle::oracle_hull_mask(lm.points(), size);
  PlaneXd organ = PlaneXd::Zero(size.height, size.width);
  for (auto g : {geometry::landmark_range::eyes, geometry::landmark_range::nose,
                 geometry::landmark_range::mouth})
    organ = organ.max(oracle::oracle_hull_mask(lm.group(g), size));

  int deep_organ = 0, deep_face = 0, outside = 0;
  for (int y = 0; y < size.height; ++y)
    for (int x = 0; x < size.width; ++x) {
      const double v = mask.values(y, x);
      if (oracle::window_uniform(organ, x, y, r, 1.0) && oracle::window_uniform(face, x, y, r, 1.0)) {
        EXPECT_NEAR(v, 1.0, 1e-6);
        ++deep_organ;
      } else if (oracle::window_uniform(face, x, y, r, 1.0) &&
                 oracle::window_uniform(organ, x, y, r, 0.0)) {
        EXPECT_NEAR(v, 0.5, 1e-6);
        ++deep_face;
      } else if (oracle::window_uniform(face, x, y, r, 0.0)) {
        EXPECT_EQ(v, 0.0);
        ++outside;
      }
    }
  EXPECT_GT(deep_organ, 100);
  EXPECT_GT(deep_face, 1000);
  EXPECT_GT(outside, 1000);
  ASSERT_TRUE(mask.source_landmarks.has_value());
}

TEST(AttentionMask, EmptyMasksGiveZeros) {
  std::array<Point, 68> pts;
  const auto unit = synthetic::unit_template();
  for (int i = 0; i < 68; ++i) pts[std::size_t(i)] = unit[std::size_t(i)] * 40.0 - Point(200, 200);
  Warnings w;
  const auto mask = generate_attention_mask(Landmark68(pts), {32, 32}, 1.0, &w);
  EXPECT_TRUE((mask.values == 0.0).all());
  EXPECT_FALSE(w.empty());
}

TEST(AttentionMask, ValuesStayInUnitInterval) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const Size size{48, 48};
    const auto lm = oracle::random_landmarks(rng, size);
    const auto mask = generate_attention_mask(lm, size, default_sigma(size));
    EXPECT_GE(mask.values.minCoeff(), 0.0);
    EXPECT_LE(mask.values.maxCoeff(), 1.0);
  }
}

TEST(MaskPyramid, ConstantStaysConstant) {
  const PlaneXd base = PlaneXd::Constant(224, 224, 0.37);
  const std::vector<Size> targets = {{112, 112}, {56, 56}, {7, 7}};
  const auto p = build_mask_pyramid(base, targets);
  ASSERT_EQ(p.levels.size(), 4u);
  EXPECT_EQ(p.injection_level(0).rows(), 112);
  for (const auto& level : p.levels) EXPECT_LE((level - 0.37).abs().maxCoeff(), 1e-13);
}

TEST(MaskPyramid, CheckerboardAveragesToHalf) {
  PlaneXd base(224, 224);
  for (int y = 0; y < 224; ++y)
    for (int x = 0; x < 224; ++x) base(y, x) = double((x + y) % 2);
  const std::vector<Size> targets = {{112, 112}};
  const auto p = build_mask_pyramid(base, targets);
  EXPECT_TRUE((p.injection_level(0) == 0.5).all());
}

TEST(MaskPyramid, RejectsNonDividingTarget) {
  const std::vector<Size> targets = {{100, 100}};
  EXPECT_THROW(build_mask_pyramid(PlaneXd(PlaneXd::Ones(224, 224)), targets), IncompatibleResolution);
  const std::vector<Size> growing = {{56, 56}, {112, 112}};
  EXPECT_THROW(build_mask_pyramid(PlaneXd(PlaneXd::Ones(224, 224)), growing), IncompatibleResolution);
}

TEST(MaskPyramid, PoolingPreservesMean) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PlaneXd base(64, 96);
  for (int i = 0; i < base.size(); ++i) base.data()[i] = u(rng);
  const std::vector<Size> targets = {{48, 32}, {12, 8}, {3, 2}};
  const auto p = build_mask_pyramid(base, targets);
  for (const auto& level : p.levels) EXPECT_NEAR(level.mean(), base.mean(), 1e-12);
}
