#include "addnet/fusion.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>

#include "addnet/hash.hpp"
#include "addnet/png_io.hpp"

namespace addnet::fusion {

namespace fs = std::filesystem;
using geometry::SimilarityTransform;

FusedFace synth_fake(const FaceRecord& source, const FaceRecord& donor, double sigma,
                     std::uint64_t seed) {
  const Size size = source.image.size();
  const auto from = geometry::alignment_anchors(donor.landmarks);
  const auto to = geometry::alignment_anchors(source.landmarks);
  const SimilarityTransform onto_source = geometry::fit_similarity(from, to);
  const ImageXf g = geometry::warp_image(donor.image, onto_source, size);

  std::mt19937_64 rng(seed);
  const double scaled = sigma * std::uniform_real_distribution<double>(0.8, 1.2)(rng);
  FusedFace out{{}, source.landmarks,
                maskgen::generate_attention_mask(source.landmarks, size, scaled), 1};
  out.image = fuse<float>(source.image, g, out.mask.values.cast<float>());
  return out;
}

FaceRecord align_face(const FaceRecord& face, Size size) {
  const auto t = geometry::estimate_alignment(face.landmarks, geometry::CanonicalLayout{}, size);
  auto [image, landmarks] = geometry::warp_face(face.image, face.landmarks, t, size);
  return {std::move(image), landmarks, face.identity};
}

namespace {

/// Small per-frame wobble so multi-frame sequences are not still images.
FaceRecord jitter(const FaceRecord& face, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Size size = face.image.size();
  const geometry::Point center(size.width / 2.0, size.height / 2.0);
  SimilarityTransform t;
  t.rotation = 0.03 * u(rng);
  t.scale = 1.0 + 0.02 * u(rng);
  t.translation = center - t.linear() * center + geometry::Point(0.5 * u(rng), 0.5 * u(rng));
  auto [image, landmarks] = geometry::warp_face(face.image, face.landmarks, t, size);
  return {std::move(image), landmarks, face.identity};
}

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%05d", prefix, i);
  return buf;
}

}  // namespace

data::DatasetManifest build_synthetic_corpus(std::span<const FaceRecord> pool, int n_real,
                                             int n_fake, std::uint64_t seed,
                                             const fs::path& out_dir, const CorpusOptions& options) {
  if (pool.size() < 2)
    throw InsufficientPool("face pool needs at least 2 faces, got " + std::to_string(pool.size()));
  if (n_real < 0 || n_fake < 0) throw ConfigError("sample counts must be non-negative");
  if (options.frames_per_sequence < 1) throw ConfigError("frames_per_sequence must be at least 1");
  const Size size = options.size.value_or(pool.front().image.size());
  const double sigma = options.sigma.value_or(maskgen::default_sigma(size));

  std::vector<FaceRecord> aligned;
  aligned.reserve(pool.size());
  for (const auto& face : pool) aligned.push_back(align_face(face, size));

  // Identity split: a shuffled prefix of the pool becomes the test side.
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 split_rng(mix_seed(seed, ~std::uint64_t(0)));
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n_test = std::size_t(std::llround(options.test_fraction * double(pool.size())));
  std::vector<std::size_t> members[2];
  for (std::size_t k = 0; k < order.size(); ++k) members[k < n_test ? 1 : 0].push_back(order[k]);
  if (n_fake > 0)
    for (const auto& side : members)
      if (side.size() == 1)
        throw InsufficientPool("each split needs at least 2 identities to form fused pairs");

  data::DatasetManifest manifest;
  manifest.mode = options.frames_per_sequence > 1 ? Mode::sequence : Mode::image;
  manifest.root = out_dir;
  fs::create_directories(out_dir);

  const int total = n_real + n_fake;
  for (int i = 0; i < total; ++i) {
    const bool fake = i >= n_real;
    std::mt19937_64 rng(mix_seed(seed, std::uint64_t(i)));
    const std::size_t source = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
    const bool in_test = std::find(members[1].begin(), members[1].end(), source) != members[1].end();
    const auto& side = members[in_test ? 1 : 0];

    data::FaceSequence seq;
    seq.sequence_id = numbered(fake ? "fake" : "real", fake ? i - n_real : i);
    seq.split = in_test ? data::Split::test : data::Split::train;
    seq.label = fake ? 1 : 0;
    std::size_t donor = source;
    if (fake) {
      std::uniform_int_distribution<std::size_t> pick(0, side.size() - 2);
      const std::size_t k = pick(rng);
      const auto src_pos = std::size_t(std::find(side.begin(), side.end(), source) - side.begin());
      donor = side[k >= src_pos ? k + 1 : k];
      seq.source_tag = aligned[source].identity + "<-" + aligned[donor].identity;
    } else {
      seq.source_tag = aligned[source].identity;
    }

    const fs::path dir = out_dir / seq.sequence_id;
    fs::create_directories(dir);
    for (int f = 0; f < options.frames_per_sequence; ++f) {
      FaceRecord t = aligned[source];
      FaceRecord g = aligned[donor];
      if (f > 0) {
        std::mt19937_64 frame_rng(mix_seed(mix_seed(seed, std::uint64_t(i)), std::uint64_t(f)));
        t = jitter(t, frame_rng);
        g = jitter(g, frame_rng);
      }
      ImageXf image = t.image;
      if (fake) image = synth_fake(t, g, sigma, rng()).image;

      data::FaceSample sample;
      sample.sequence_id = seq.sequence_id;
      sample.label = seq.label;
      sample.frame_index = f;
      sample.image_path = fs::path(seq.sequence_id) / (std::to_string(f) + ".png");
      sample.landmarks_path = fs::path(seq.sequence_id) / (std::to_string(f) + ".landmarks.txt");
      sample.landmarks = t.landmarks;
      io::write_png(out_dir / sample.image_path, image);
      geometry::write_landmarks(out_dir / *sample.landmarks_path, t.landmarks);
      seq.frames.push_back(std::move(sample));
    }
    manifest.sequences.push_back(std::move(seq));
  }
  return manifest;
}

}  // namespace addnet::fusion
