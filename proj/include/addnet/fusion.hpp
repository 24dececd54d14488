#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>

#include "addnet/data.hpp"
#include "addnet/image.hpp"
#include "addnet/maskgen.hpp"
#include "addnet/synthetic_faces.hpp"

namespace addnet::fusion {

/// Per-pixel blend O = t * (1 - A) + g * A, applied to every channel.
/// A must lie in [0,1]; the result is clamped to [0,1] against round-off.
template <typename Scalar>
Image<Scalar> fuse(const Image<Scalar>& t, const Image<Scalar>& g, const Plane<Scalar>& A) {
  require_same_size(t.size(), g.size(), "fuse: source vs generated");
  require_same_size(t.size(), {int(A.cols()), int(A.rows())}, "fuse: image vs mask");
  if (t.num_channels() != g.num_channels())
    throw ShapeMismatch("fuse: source has " + std::to_string(t.num_channels()) +
                        " channels, generated has " + std::to_string(g.num_channels()));
  Image<Scalar> out;
  out.channels.reserve(t.channels.size());
  for (std::size_t c = 0; c < t.channels.size(); ++c)
    out.channels.push_back((t.channels[c] * (Scalar(1) - A) + g.channels[c] * A)
                               .cwiseMax(Scalar(0))
                               .cwiseMin(Scalar(1)));
  return out;
}

/// A fused face: the source geometry carrying donor content inside the mask.
struct FusedFace {
  ImageXf image;
  geometry::Landmark68 landmarks;
  maskgen::AttentionMask mask;
  int label = 1;
};

/// Warps `donor` onto the source's eye and mouth anchors, builds the source's
/// attention mask with sigma scaled by a seeded factor in [0.8, 1.2], and fuses.
FusedFace synth_fake(const FaceRecord& source, const FaceRecord& donor, double sigma,
                     std::uint64_t seed);

/// Aligns a face to the canonical layout at `size`.
FaceRecord align_face(const FaceRecord& face, Size size);

struct CorpusOptions {
  std::optional<Size> size;   // defaults to the size of the first pool image
  double test_fraction = 0.2; // share of identities reserved for the test split
  int frames_per_sequence = 1;
  std::optional<double> sigma;  // defaults to maskgen::default_sigma(size)
};

/// Renders `n_real` aligned pool faces (label 0) and `n_fake` fused pairs
/// (label 1) under `out_dir`, as `<sequence>/<frame>.png` plus landmark
/// sidecars. Identities are split once, and a fake only uses a source and a
/// donor from the same split. Per-sample randomness derives from (seed, index).
data::DatasetManifest build_synthetic_corpus(std::span<const FaceRecord> pool, int n_real,
                                             int n_fake, std::uint64_t seed,
                                             const std::filesystem::path& out_dir,
                                             const CorpusOptions& options = {});

}  // namespace addnet::fusion
