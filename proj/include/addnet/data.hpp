#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "addnet/geometry.hpp"
#include "addnet/image.hpp"
#include "addnet/model.hpp"
#include "addnet/model_spec.hpp"

namespace addnet::data {

namespace fs = std::filesystem;
using geometry::Landmark68;
using model::ModelSpec;

enum class Split { train, test };

std::string to_string(Split split);
Split split_from_string(const std::string& text);

inline constexpr int kSchemaVersion = 1;

/// One labeled face frame. `image_path` and `landmarks_path` are stored
/// relative to the manifest directory.
struct FaceSample {
  fs::path image_path;
  int label = 0;
  std::optional<Landmark68> landmarks;
  std::optional<fs::path> landmarks_path;
  std::string sequence_id;
  int frame_index = 0;
};

/// An ordered run of frames sharing one label and one split.
struct FaceSequence {
  std::string sequence_id;
  Split split = Split::train;
  int label = 0;
  std::string source_tag;
  std::vector<FaceSample> frames;
};

struct DatasetManifest {
  int schema_version = kSchemaVersion;
  Mode mode = Mode::image;
  fs::path root;  // directory relative paths resolve against
  std::vector<FaceSequence> sequences;

  std::vector<const FaceSequence*> split(Split s) const;
  std::size_t frame_count(Split s) const;
  fs::path resolve(const fs::path& relative) const { return root / relative; }
};

/// Checks label, frame-order and split invariants; throws SchemaError.
void validate(const DatasetManifest& manifest);

/// Parses a line-delimited manifest: one header record, then one record per
/// sequence. Validates eagerly and lists every missing file at once.
DatasetManifest load_manifest(const fs::path& path);

/// Writes `manifest` at `path`; relative paths are kept as they are.
void save_manifest(const DatasetManifest& manifest, const fs::path& path);

/// Decoded frame ready for the network: image plus 8-bit-quantized mask.
struct LoadedFrame {
  ImageXf image;
  PlaneXf mask;
  bool has_landmarks = false;
};

struct FrameOptions {
  Size size{32, 32};                   // network input resolution
  std::optional<double> sigma;         // defaults to maskgen::default_sigma(size)
  std::optional<fs::path> mask_cache;  // mirrors the corpus layout with .mask.png files
  bool memoize = true;                 // keep every decoded frame in memory
};

/// Decodes frames and produces their masks. Frames whose size differs from
/// the target are aligned to the canonical layout first; a frame without
/// landmarks gets an all-zero mask.
class FrameLoader {
 public:
  FrameLoader(const DatasetManifest& manifest, FrameOptions options);

  /// The reference stays valid until the next call when memoization is off.
  const LoadedFrame& load(const FaceSample& sample);
  const FrameOptions& options() const { return options_; }

 private:
  LoadedFrame decode(const FaceSample& sample) const;

  const DatasetManifest* manifest_;
  FrameOptions options_;
  std::unordered_map<std::string, LoadedFrame> memo_;
};

/// Quantizes a [0,1] mask to the 256 levels an 8-bit mask file can hold.
PlaneXf quantize_mask(const PlaneXd& mask);

fs::path mask_cache_path(const fs::path& cache_root, const FaceSample& sample);

struct SamplerOptions {
  bool shuffle = true;
  bool balanced = false;  // alternate labels within each batch
};

/// Batches of frame references drawn epoch by epoch. Epoch plans depend only
/// on (seed, epoch), so two samplers with the same seed agree.
class ImageSampler {
 public:
  ImageSampler(const DatasetManifest& manifest, Split split, int batch_size,
               std::uint64_t seed, SamplerOptions options = {}, Warnings* warnings = nullptr);

  /// Frames of the split, in manifest order; frames without landmarks are skipped.
  const std::vector<const FaceSample*>& frames() const { return frames_; }

  std::vector<std::vector<const FaceSample*>> epoch(std::uint64_t index) const;

  /// Next batch of an endless stream that walks consecutive epochs.
  std::vector<const FaceSample*> next();

 private:
  std::vector<const FaceSample*> frames_;
  int batch_size_;
  std::uint64_t seed_;
  SamplerOptions options_;
  std::uint64_t epoch_index_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::vector<const FaceSample*>> current_;
};

/// A contiguous window of `length` frames from one sequence.
struct ClipRef {
  const FaceSequence* sequence = nullptr;
  int start = 0;
  int length = 0;
  int label() const { return sequence->label; }
};

/// Random clips: sequence uniform over eligible ones, start uniform over
/// valid starts. Sequences shorter than L are skipped with one warning.
class ClipSampler {
 public:
  ClipSampler(const DatasetManifest& manifest, Split split, int length, int batch_size,
              std::uint64_t seed, Warnings* warnings = nullptr);

  std::vector<ClipRef> next();
  int skipped() const { return skipped_; }
  const std::vector<const FaceSequence*>& eligible() const { return eligible_; }

 private:
  std::vector<const FaceSequence*> eligible_;
  int length_;
  int batch_size_;
  std::mt19937_64 rng_;
  int skipped_ = 0;
};

/// Non-overlapping windows covering every eligible sequence, for evaluation.
std::vector<ClipRef> enumerate_clips(const DatasetManifest& manifest, Split split, int length,
                                     Warnings* warnings = nullptr);

/// Appends one loaded frame and its mask pyramid to `example`.
template <typename Scalar>
void append_frame(model::Example<Scalar>& example, const LoadedFrame& frame, const ModelSpec& spec) {
  example.frames.push_back(frame.image.template cast<Scalar>());
  example.pyramids.push_back(maskgen::build_mask_pyramid(
      Plane<Scalar>(frame.mask.template cast<Scalar>()), spec.injection_resolutions()));
}

template <typename Scalar>
model::Example<Scalar> make_example(FrameLoader& loader, const FaceSample& sample,
                                    const ModelSpec& spec) {
  model::Example<Scalar> ex;
  ex.label = sample.label;
  append_frame(ex, loader.load(sample), spec);
  return ex;
}

template <typename Scalar>
model::Example<Scalar> make_example(FrameLoader& loader, const ClipRef& clip,
                                    const ModelSpec& spec) {
  model::Example<Scalar> ex;
  ex.label = clip.label();
  for (int i = 0; i < clip.length; ++i)
    append_frame(ex, loader.load(clip.sequence->frames[std::size_t(clip.start + i)]), spec);
  return ex;
}

/// Feature vector describing a sequence, compared with L1 distance.
using SequenceDescriptor = std::function<Eigen::VectorXd(const FaceSequence&)>;

/// Mean per-channel intensity histogram (`bins` per channel) over the frames.
Eigen::VectorXd histogram_descriptor(const DatasetManifest& manifest, const FaceSequence& sequence,
                                     int bins = 16);

/// Greedy clustering of descriptors: each item joins the first cluster whose
/// founder lies within `threshold` (L1), else founds a new one. Clusters are
/// shuffled and moved to test until the test share reaches the target.
std::vector<Split> split_by_similarity(const std::vector<Eigen::VectorXd>& descriptors,
                                       double test_fraction, std::uint64_t seed,
                                       double threshold = 0.05);

/// Reassigns the splits of every sequence in `manifest` using `descriptor`.
void resplit_by_similarity(DatasetManifest& manifest, double test_fraction, std::uint64_t seed,
                           const SequenceDescriptor& descriptor, double threshold = 0.05);

}  // namespace addnet::data
