#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "addnet/fusion.hpp"
#include "addnet/png_io.hpp"
#include "support/temp_dir.hpp"

using namespace addnet;
using namespace addnet::fusion;

namespace {

ImageXd random_image(std::mt19937_64& rng, int w, int h, int c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageXd img(w, h, c);
  for (auto& p : img.channels)
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  return img;
}

PlaneXd random_mask(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PlaneXd m(h, w);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

double max_abs_diff(const ImageXd& a, const ImageXd& b) {
  double d = 0;
  for (std::size_t c = 0; c < a.channels.size(); ++c)
    d = std::max(d, (a.channels[c] - b.channels[c]).abs().maxCoeff());
  return d;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Fuse, ZeroMaskReturnsSource) {
  std::mt19937_64 rng(1);
  const auto t = random_image(rng, 9, 7, 3);
  const auto g = random_image(rng, 9, 7, 3);
  EXPECT_EQ(fuse(t, g, PlaneXd(PlaneXd::Zero(7, 9))), t);
}

TEST(Fuse, OnesMaskReturnsGenerated) {
  std::mt19937_64 rng(2);
  const auto t = random_image(rng, 9, 7, 3);
  const auto g = random_image(rng, 9, 7, 3);
  EXPECT_EQ(fuse(t, g, PlaneXd(PlaneXd::Ones(7, 9))), g);
}

TEST(Fuse, HalfMaskIsMidpoint) {
  const ImageXd t(5, 5, 3, 0.2), g(5, 5, 3, 0.8);
  const auto o = fuse(t, g, PlaneXd(PlaneXd::Constant(5, 5, 0.5)));
  for (const auto& c : o.channels) EXPECT_LE((c - 0.5).abs().maxCoeff(), 1e-15);
}

TEST(Fuse, ComplementarityConvexityAndLinearity) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = random_image(rng, 12, 10, 3);
    const auto g = random_image(rng, 12, 10, 3);
    const auto g2 = random_image(rng, 12, 10, 3);
    const PlaneXd a = random_mask(rng, 12, 10);
    const auto tg = fuse(t, g, a);
    const auto gt = fuse(g, t, a);
    const double alpha = u(rng);
    ImageXd mix = g;
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_LE((tg.channels[c] + gt.channels[c] - t.channels[c] - g.channels[c]).abs().maxCoeff(), 1e-6);
      EXPECT_TRUE((tg.channels[c] >= t.channels[c].min(g.channels[c])).all());
      EXPECT_TRUE((tg.channels[c] <= t.channels[c].max(g.channels[c])).all());
      mix.channels[c] = alpha * g.channels[c] + (1 - alpha) * g2.channels[c];
    }
    const auto lhs = fuse(t, mix, a);
    const auto r1 = fuse(t, g, a);
    const auto r2 = fuse(t, g2, a);
    ImageXd rhs = r1;
    for (std::size_t c = 0; c < 3; ++c) rhs.channels[c] = alpha * r1.channels[c] + (1 - alpha) * r2.channels[c];
    EXPECT_LE(max_abs_diff(lhs, rhs), 1e-6);
  }
}

TEST(Fuse, RejectsMismatchedShapes) {
  const ImageXf t(8, 8, 3), g(8, 7, 3);
  EXPECT_THROW(fuse(t, g, PlaneXf(PlaneXf::Zero(8, 8))), ShapeMismatch);
  EXPECT_THROW(fuse(t, t, PlaneXf(PlaneXf::Zero(4, 8))), ShapeMismatch);
  EXPECT_THROW(fuse(t, ImageXf(8, 8, 1), PlaneXf(PlaneXf::Zero(8, 8))), ShapeMismatch);
}

TEST(SynthFake, SelfFusionReproducesSource) {
  const auto pool = synthetic::render_pool(1, {48, 48}, 4);
  const auto face = align_face(pool[0], {48, 48});
  const auto fused = synth_fake(face, face, 1.0, 11);
  for (std::size_t c = 0; c < 3; ++c)
    EXPECT_LE((fused.image.channels[c] - face.image.channels[c]).abs().maxCoeff(), 1.0f / 255.0f);
  EXPECT_EQ(fused.label, 1);
}

TEST(SynthFake, DeterministicForFixedSeed) {
  const auto pool = synthetic::render_pool(2, {40, 40}, 5);
  const auto a = synth_fake(pool[0], pool[1], 1.0, 99);
  const auto b = synth_fake(pool[0], pool[1], 1.0, 99);
  EXPECT_EQ(a.image, b.image);
  EXPECT_TRUE((a.mask.values == b.mask.values).all());
}

TEST(SynthFake, ChangesOnlyMaskedPixels) {
  const auto pool = synthetic::render_pool(2, {64, 64}, 6);
  const auto src = align_face(pool[0], {64, 64});
  const auto donor = align_face(pool[1], {64, 64});
  const auto fused = synth_fake(src, donor, 1.0, 3);
  const PlaneXd& a = fused.mask.values;
  ASSERT_GT((a == 0.0).count(), 0);
  ASSERT_GT((a > 0.0).count(), 0);
  int changed_inside = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    const PlaneXf& o = fused.image.channels[c];
    const PlaneXf& t = src.image.channels[c];
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        if (a(y, x) == 0.0) {
          EXPECT_EQ(o(y, x), t(y, x));
        } else if (o(y, x) != t(y, x)) {
          ++changed_inside;
        }
      }
  }
  EXPECT_GT(changed_inside, 0);
}

TEST(SyntheticCorpus, CountsLabelsAndDisjointIdentities) {
  oracle::TempDir dir("corpus");
  const auto pool = synthetic::render_pool(10, {32, 32}, 7);
  const auto m = build_synthetic_corpus(pool, 100, 100, 7, dir.path());
  ASSERT_EQ(m.sequences.size(), 200u);
  int fakes = 0;
  std::set<std::string> train_ids, test_ids;
  for (const auto& s : m.sequences) {
    fakes += s.label;
    auto& ids = s.split == data::Split::train ? train_ids : test_ids;
    const auto arrow = s.source_tag.find("<-");
    ids.insert(s.source_tag.substr(0, arrow));
    if (arrow != std::string::npos) ids.insert(s.source_tag.substr(arrow + 2));
  }
  EXPECT_EQ(fakes, 100);
  EXPECT_FALSE(train_ids.empty());
  EXPECT_FALSE(test_ids.empty());
  for (const auto& id : test_ids) EXPECT_EQ(train_ids.count(id), 0u) << id;
}

TEST(SyntheticCorpus, AllRealWhenNoFakes) {
  oracle::TempDir dir("corpus");
  const auto pool = synthetic::render_pool(3, {32, 32}, 8);
  const auto m = build_synthetic_corpus(pool, 12, 0, 1, dir.path());
  for (const auto& s : m.sequences) EXPECT_EQ(s.label, 0);
  EXPECT_EQ(m.sequences.size(), 12u);
}

TEST(SyntheticCorpus, SameSeedSameManifestAndPixels) {
  oracle::TempDir a("corpus"), b("corpus");
  const auto pool = synthetic::render_pool(10, {32, 32}, 9);
  const auto ma = build_synthetic_corpus(pool, 10, 10, 5, a.path());
  const auto mb = build_synthetic_corpus(pool, 10, 10, 5, b.path());
  data::save_manifest(ma, a / "manifest.jsonl");
  data::save_manifest(mb, b / "manifest.jsonl");
  EXPECT_EQ(slurp(a / "manifest.jsonl"), slurp(b / "manifest.jsonl"));
  for (const auto& s : ma.sequences)
    for (const auto& f : s.frames)
      EXPECT_EQ(slurp(a.path() / f.image_path), slurp(b.path() / f.image_path));
}

TEST(SyntheticCorpus, MultiFrameSequencesAreSequenceMode) {
  oracle::TempDir dir("corpus");
  const auto pool = synthetic::render_pool(4, {32, 32}, 10);
  CorpusOptions opt;
  opt.frames_per_sequence = 3;
  opt.test_fraction = 0.5;
  const auto m = build_synthetic_corpus(pool, 2, 2, 1, dir.path(), opt);
  EXPECT_EQ(m.mode, Mode::sequence);
  for (const auto& s : m.sequences) EXPECT_EQ(s.frames.size(), 3u);
  const auto loaded = data::load_manifest([&] {
    data::save_manifest(m, dir / "manifest.jsonl");
    return dir / "manifest.jsonl";
  }());
  EXPECT_EQ(loaded.sequences.size(), 4u);
}

TEST(SyntheticCorpus, RejectsTinyPool) {
  oracle::TempDir dir("corpus");
  const auto pool = synthetic::render_pool(1, {32, 32}, 1);
  EXPECT_THROW(build_synthetic_corpus(pool, 1, 1, 1, dir.path()), InsufficientPool);
}
