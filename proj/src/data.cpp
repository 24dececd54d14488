#include "addnet/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"

#include "addnet/hash.hpp"
#include "addnet/maskgen.hpp"
#include "addnet/png_io.hpp"

namespace addnet::data {

using nlohmann::json;

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw SchemaError("unknown split '" + text + "'");
}

std::vector<const FaceSequence*> DatasetManifest::split(Split s) const {
  std::vector<const FaceSequence*> out;
  for (const auto& seq : sequences)
    if (seq.split == s) out.push_back(&seq);
  return out;
}

std::size_t DatasetManifest::frame_count(Split s) const {
  std::size_t n = 0;
  for (const auto* seq : split(s)) n += seq->frames.size();
  return n;
}

void validate(const DatasetManifest& manifest) {
  if (manifest.schema_version != kSchemaVersion)
    throw SchemaError("unsupported schema_version " + std::to_string(manifest.schema_version));
  std::set<std::string> seen;
  for (const auto& seq : manifest.sequences) {
    if (seq.sequence_id.empty()) throw SchemaError("sequence with empty sequence_id");
    if (!seen.insert(seq.sequence_id).second)
      throw SchemaError("sequence_id '" + seq.sequence_id + "' appears more than once");
    if (seq.label != 0 && seq.label != 1)
      throw SchemaError("sequence '" + seq.sequence_id + "' has label " +
                        std::to_string(seq.label) + "; expected 0 or 1");
    if (seq.frames.empty()) throw SchemaError("sequence '" + seq.sequence_id + "' has no frames");
    int previous = -1;
    for (const auto& f : seq.frames) {
      if (f.frame_index < 0 || f.frame_index <= previous)
        throw SchemaError("sequence '" + seq.sequence_id +
                          "': frame indices must be non-negative and strictly increasing");
      if (f.label != seq.label || f.sequence_id != seq.sequence_id)
        throw SchemaError("sequence '" + seq.sequence_id + "': frame disagrees with its sequence");
      previous = f.frame_index;
    }
  }
}

namespace {

template <typename T>
T field(const json& record, const char* key, int line) {
  const auto it = record.find(key);
  if (it == record.end())
    throw SchemaError("line " + std::to_string(line) + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError("line " + std::to_string(line) + ": field '" + key + "' has the wrong type");
  }
}

FaceSequence parse_sequence(const json& record, int line) {
  if (!record.is_object()) throw SchemaError("line " + std::to_string(line) + ": not an object");
  FaceSequence seq;
  seq.sequence_id = field<std::string>(record, "sequence_id", line);
  seq.split = split_from_string(field<std::string>(record, "split", line));
  seq.label = field<int>(record, "label", line);
  seq.source_tag = record.value("source_tag", std::string{});
  const json frames = field<json>(record, "frames", line);
  if (!frames.is_array()) throw SchemaError("line " + std::to_string(line) + ": frames must be a list");
  for (const auto& fr : frames) {
    FaceSample s;
    s.sequence_id = seq.sequence_id;
    s.label = seq.label;
    s.frame_index = field<int>(fr, "frame_index", line);
    s.image_path = field<std::string>(fr, "image", line);
    if (fr.contains("landmarks_file")) s.landmarks_path = field<std::string>(fr, "landmarks_file", line);
    if (fr.contains("landmarks")) {
      const auto xy = field<std::vector<double>>(fr, "landmarks", line);
      try {
        s.landmarks = Landmark68::from_xy(xy);
      } catch (const Error& e) {
        throw SchemaError("line " + std::to_string(line) + ": " + e.what());
      }
    }
    seq.frames.push_back(std::move(s));
  }
  return seq;
}

json to_json(const FaceSequence& seq) {
  json frames = json::array();
  for (const auto& f : seq.frames) {
    json fr = {{"frame_index", f.frame_index}, {"image", f.image_path.generic_string()}};
    if (f.landmarks_path) {
      fr["landmarks_file"] = f.landmarks_path->generic_string();
    } else if (f.landmarks) {
      std::vector<double> xy;
      for (const auto& p : f.landmarks->points()) {
        xy.push_back(p.x());
        xy.push_back(p.y());
      }
      fr["landmarks"] = xy;
    }
    frames.push_back(std::move(fr));
  }
  return {{"sequence_id", seq.sequence_id}, {"split", to_string(seq.split)},
          {"label", seq.label},             {"source_tag", seq.source_tag},
          {"frames", std::move(frames)}};
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile({path.string()});
  DatasetManifest manifest;
  manifest.root = path.parent_path();
  std::string text;
  int line = 0;
  bool header = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(text);
    } catch (const json::parse_error& e) {
      throw SchemaError("line " + std::to_string(line) + ": " + e.what());
    }
    if (!header) {
      if (field<std::string>(record, "kind", line) != "addnet-manifest")
        throw SchemaError("line " + std::to_string(line) + ": not an addnet manifest header");
      manifest.schema_version = field<int>(record, "schema_version", line);
      try {
        manifest.mode = mode_from_string(field<std::string>(record, "mode", line));
      } catch (const ConfigError& e) {
        throw SchemaError("line " + std::to_string(line) + ": " + e.what());
      }
      header = true;
      continue;
    }
    manifest.sequences.push_back(parse_sequence(record, line));
  }
  if (!header) throw SchemaError(path.string() + ": empty manifest");
  validate(manifest);

  std::vector<std::string> missing;
  for (const auto& seq : manifest.sequences)
    for (const auto& f : seq.frames) {
      if (!fs::exists(manifest.resolve(f.image_path)))
        missing.push_back(manifest.resolve(f.image_path).string());
      if (f.landmarks_path && !fs::exists(manifest.resolve(*f.landmarks_path)))
        missing.push_back(manifest.resolve(*f.landmarks_path).string());
    }
  if (!missing.empty()) throw MissingFile(std::move(missing));

  for (auto& seq : manifest.sequences)
    for (auto& f : seq.frames)
      if (f.landmarks_path && !f.landmarks) {
        try {
          f.landmarks = geometry::read_landmarks(manifest.resolve(*f.landmarks_path));
        } catch (const Error& e) {
          throw SchemaError(manifest.resolve(*f.landmarks_path).string() + ": " + e.what());
        }
      }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  validate(manifest);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << json{{"schema_version", manifest.schema_version},
              {"kind", "addnet-manifest"},
              {"mode", to_string(manifest.mode)}}
             .dump()
      << '\n';
  for (const auto& seq : manifest.sequences) out << to_json(seq).dump() << '\n';
}

PlaneXf quantize_mask(const PlaneXd& mask) {
  PlaneXf out(mask.rows(), mask.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    out.data()[i] = float(std::lround(255.0 * std::clamp(mask.data()[i], 0.0, 1.0))) / 255.0f;
  return out;
}

fs::path mask_cache_path(const fs::path& cache_root, const FaceSample& sample) {
  return cache_root / sample.sequence_id / (std::to_string(sample.frame_index) + ".mask.png");
}

FrameLoader::FrameLoader(const DatasetManifest& manifest, FrameOptions options)
    : manifest_(&manifest), options_(std::move(options)) {}

const LoadedFrame& FrameLoader::load(const FaceSample& sample) {
  const std::string key = sample.image_path.generic_string();
  if (options_.memoize) {
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    return memo_.emplace(key, decode(sample)).first->second;
  }
  memo_.clear();
  return memo_.emplace(key, decode(sample)).first->second;
}

LoadedFrame FrameLoader::decode(const FaceSample& sample) const {
  const Size size = options_.size;
  LoadedFrame frame;
  frame.image = io::read_png(manifest_->resolve(sample.image_path));
  std::optional<Landmark68> landmarks = sample.landmarks;
  if (!(frame.image.size() == size)) {
    if (!landmarks)
      throw ShapeMismatch(sample.image_path.string() + " needs landmarks to be aligned to " +
                          std::to_string(size.width) + "x" + std::to_string(size.height));
    const auto t = geometry::estimate_alignment(*landmarks, geometry::CanonicalLayout{}, size);
    auto [img, lm] = geometry::warp_face(frame.image, *landmarks, t, size);
    frame.image = std::move(img);
    landmarks = lm;
  }
  frame.has_landmarks = landmarks.has_value();
  if (!landmarks) {
    frame.mask = PlaneXf::Zero(size.height, size.width);
    return frame;
  }
  if (options_.mask_cache) {
    const fs::path cached = mask_cache_path(*options_.mask_cache, sample);
    if (fs::exists(cached)) {
      frame.mask = io::read_png(cached).channels.at(0);
      require_same_size({int(frame.mask.cols()), int(frame.mask.rows())}, size, "cached mask");
      return frame;
    }
    const auto mask = maskgen::generate_attention_mask(
        *landmarks, size, options_.sigma.value_or(maskgen::default_sigma(size)));
    fs::create_directories(cached.parent_path());
    io::write_png(cached, mask.values);
    frame.mask = quantize_mask(mask.values);
    return frame;
  }
  const auto mask = maskgen::generate_attention_mask(
      *landmarks, size, options_.sigma.value_or(maskgen::default_sigma(size)));
  frame.mask = quantize_mask(mask.values);
  return frame;
}

ImageSampler::ImageSampler(const DatasetManifest& manifest, Split split, int batch_size,
                           std::uint64_t seed, SamplerOptions options, Warnings* warnings)
    : batch_size_(batch_size), seed_(seed), options_(options) {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  int skipped = 0;
  for (const auto* seq : manifest.split(split))
    for (const auto& f : seq->frames) {
      if (f.landmarks) {
        frames_.push_back(&f);
      } else {
        ++skipped;
      }
    }
  if (skipped > 0) warn(warnings, std::to_string(skipped) + " frame(s) without landmarks skipped");
  if (frames_.empty()) throw EmptySplit("split '" + to_string(split) + "' has no usable frames");
}

std::vector<std::vector<const FaceSample*>> ImageSampler::epoch(std::uint64_t index) const {
  std::vector<const FaceSample*> order = frames_;
  std::mt19937_64 rng(mix_seed(seed_, index));
  if (options_.shuffle) std::shuffle(order.begin(), order.end(), rng);
  if (options_.balanced) {
    std::vector<const FaceSample*> by_label[2];
    for (const auto* f : order) by_label[f->label].push_back(f);
    std::vector<const FaceSample*> interleaved;
    std::size_t i = 0, j = 0;
    while (i < by_label[0].size() || j < by_label[1].size()) {
      if (i < by_label[0].size()) interleaved.push_back(by_label[0][i++]);
      if (j < by_label[1].size()) interleaved.push_back(by_label[1][j++]);
    }
    order = std::move(interleaved);
  }
  std::vector<std::vector<const FaceSample*>> batches;
  for (std::size_t b = 0; b < order.size(); b += std::size_t(batch_size_))
    batches.emplace_back(order.begin() + std::ptrdiff_t(b),
                         order.begin() + std::ptrdiff_t(std::min(order.size(), b + std::size_t(batch_size_))));
  return batches;
}

std::vector<const FaceSample*> ImageSampler::next() {
  if (cursor_ >= current_.size()) {
    current_ = epoch(epoch_index_++);
    cursor_ = 0;
  }
  return current_[cursor_++];
}

namespace {

std::vector<const FaceSequence*> eligible_sequences(const DatasetManifest& manifest, Split split,
                                                    int length, Warnings* warnings, int* skipped) {
  if (length < 1) throw BadClipLength("clip length must be at least 1");
  std::vector<const FaceSequence*> out;
  int short_count = 0;
  for (const auto* seq : manifest.split(split)) {
    if (int(seq->frames.size()) >= length) {
      out.push_back(seq);
    } else {
      ++short_count;
    }
  }
  if (skipped) *skipped = short_count;
  if (short_count > 0)
    warn(warnings, std::to_string(short_count) + " sequence(s) shorter than " +
                       std::to_string(length) + " frames skipped");
  if (out.empty())
    throw NoEligibleSequence("no sequence in split '" + to_string(split) + "' has " +
                             std::to_string(length) + " frames");
  return out;
}

}  // namespace

ClipSampler::ClipSampler(const DatasetManifest& manifest, Split split, int length, int batch_size,
                         std::uint64_t seed, Warnings* warnings)
    : length_(length), batch_size_(batch_size), rng_(seed) {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  eligible_ = eligible_sequences(manifest, split, length, warnings, &skipped_);
}

std::vector<ClipRef> ClipSampler::next() {
  std::vector<ClipRef> batch;
  for (int i = 0; i < batch_size_; ++i) {
    const auto* seq = eligible_[std::uniform_int_distribution<std::size_t>(0, eligible_.size() - 1)(rng_)];
    const int starts = int(seq->frames.size()) - length_ + 1;
    batch.push_back({seq, std::uniform_int_distribution<int>(0, starts - 1)(rng_), length_});
  }
  return batch;
}

std::vector<ClipRef> enumerate_clips(const DatasetManifest& manifest, Split split, int length,
                                     Warnings* warnings) {
  std::vector<ClipRef> clips;
  for (const auto* seq : eligible_sequences(manifest, split, length, warnings, nullptr))
    for (int start = 0; start + length <= int(seq->frames.size()); start += length)
      clips.push_back({seq, start, length});
  return clips;
}

Eigen::VectorXd histogram_descriptor(const DatasetManifest& manifest, const FaceSequence& sequence,
                                     int bins) {
  Eigen::VectorXd total;
  for (const auto& f : sequence.frames) {
    const ImageXf img = io::read_png(manifest.resolve(f.image_path));
    Eigen::VectorXd h = Eigen::VectorXd::Zero(img.num_channels() * bins);
    for (int c = 0; c < img.num_channels(); ++c) {
      const auto& plane = img.channels[std::size_t(c)];
      for (Eigen::Index i = 0; i < plane.size(); ++i) {
        const int b = std::min(bins - 1, int(plane.data()[i] * float(bins)));
        h(c * bins + b) += 1.0;
      }
    }
    h /= double(img.width() * img.height());
    if (total.size() == 0) total = Eigen::VectorXd::Zero(h.size());
    if (total.size() != h.size()) throw ShapeMismatch("histogram_descriptor: channel count varies");
    total += h;
  }
  return total / double(sequence.frames.size());
}

std::vector<Split> split_by_similarity(const std::vector<Eigen::VectorXd>& descriptors,
                                       double test_fraction, std::uint64_t seed, double threshold) {
  if (test_fraction < 0.0 || test_fraction > 1.0)
    throw ConfigError("test_fraction must lie in [0, 1]");
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < descriptors.size(); ++i) {
    bool placed = false;
    for (auto& cluster : clusters) {
      const auto& founder = descriptors[cluster.front()];
      if (founder.size() == descriptors[i].size() &&
          (founder - descriptors[i]).lpNorm<1>() <= threshold) {
        cluster.push_back(i);
        placed = true;
        break;
      }
    }
    if (!placed) clusters.push_back({i});
  }
  std::mt19937_64 rng(seed);
  std::shuffle(clusters.begin(), clusters.end(), rng);
  const auto target = std::size_t(std::llround(test_fraction * double(descriptors.size())));
  std::vector<Split> out(descriptors.size(), Split::train);
  std::size_t in_test = 0;
  for (const auto& cluster : clusters) {
    if (in_test >= target) break;
    for (std::size_t i : cluster) out[i] = Split::test;
    in_test += cluster.size();
  }
  return out;
}

void resplit_by_similarity(DatasetManifest& manifest, double test_fraction, std::uint64_t seed,
                           const SequenceDescriptor& descriptor, double threshold) {
  std::vector<Eigen::VectorXd> d;
  for (const auto& seq : manifest.sequences) d.push_back(descriptor(seq));
  const auto splits = split_by_similarity(d, test_fraction, seed, threshold);
  for (std::size_t i = 0; i < splits.size(); ++i) manifest.sequences[i].split = splits[i];
}

}  // namespace addnet::data
