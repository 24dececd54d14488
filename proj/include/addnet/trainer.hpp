#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "addnet/data.hpp"
#include "addnet/model.hpp"

namespace addnet::trainer {

namespace fs = std::filesystem;
using model::Detector;
using model::Example;

struct TrainConfig {
  Mode mode = Mode::image;
  int batch_size = 32;
  double base_lr = 1e-4;
  double decay_factor = 0.9;
  long decay_every = 3000;
  long total_steps = 40000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  int log_every = 100;
  double holdout_fraction = 0.1;  // share of train sequences kept for model selection
  bool balanced = false;

  /// Throws ConfigError naming the first bad field.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::json to_json(const TrainConfig& config);
/// Fields absent from `j` keep their value in `base`; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Staircase schedule: base_lr * decay_factor ^ floor(step / decay_every).
double lr_at(long step, const TrainConfig& config);

/// Adaptive-moment optimizer with bias correction.
template <typename Scalar>
class Adam {
 public:
  Adam(Eigen::Index size, const TrainConfig& config);

  void step(model::Vector<Scalar>& parameters, const model::Vector<Scalar>& grad, double lr);
  long steps_taken() const { return t_; }

 private:
  model::Vector<Scalar> m_, v_;
  double beta1_, beta2_, epsilon_;
  long t_ = 0;
};

template <typename Scalar>
using Batch = std::vector<Example<Scalar>>;

template <typename Scalar>
class BatchStream {
 public:
  virtual ~BatchStream() = default;
  virtual Mode mode() const = 0;
  virtual Batch<Scalar> next() = 0;
};

/// Yields the same batch forever.
template <typename Scalar>
class FixedBatchStream final : public BatchStream<Scalar> {
 public:
  FixedBatchStream(Mode mode, Batch<Scalar> batch) : mode_(mode), batch_(std::move(batch)) {}
  Mode mode() const override { return mode_; }
  Batch<Scalar> next() override { return batch_; }

 private:
  Mode mode_;
  Batch<Scalar> batch_;
};

/// Shuffled frames (image mode) or random clips (sequence mode) of one split.
template <typename Scalar>
class ManifestBatchStream final : public BatchStream<Scalar> {
 public:
  ManifestBatchStream(data::DatasetManifest manifest, data::Split split,
                      const model::ModelSpec& spec, data::FrameOptions frames, int batch_size,
                      std::uint64_t seed, data::SamplerOptions sampling = {},
                      Warnings* warnings = nullptr);

  Mode mode() const override { return manifest_->mode; }
  Batch<Scalar> next() override;

 private:
  std::unique_ptr<data::DatasetManifest> manifest_;
  model::ModelSpec spec_;
  data::FrameLoader loader_;
  std::optional<data::ImageSampler> images_;
  std::optional<data::ClipSampler> clips_;
};

/// Moves a seeded `fraction` of the train sequences out of `manifest`. The
/// carved sequences keep split = train inside the returned holdout manifest.
struct HoldoutSplit {
  data::DatasetManifest training;
  data::DatasetManifest holdout;
};
HoldoutSplit carve_holdout(const data::DatasetManifest& manifest, double fraction,
                           std::uint64_t seed);

/// Every frame (image mode) or non-overlapping clip (sequence mode) of a split.
template <typename Scalar>
std::vector<Example<Scalar>> load_examples(const data::DatasetManifest& manifest, data::Split split,
                                           const model::ModelSpec& spec,
                                           data::FrameOptions frames, Warnings* warnings = nullptr);

struct LogRecord {
  long step = 0;
  double loss = 0;
  double lr = 0;
  double accuracy = 0;             // on the batch of this step
  std::optional<double> holdout;   // held-out accuracy when a holdout set is given

  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};
nlohmann::json to_json(const LogRecord& record);

template <typename Scalar>
struct TrainOptions {
  std::optional<fs::path> out_dir;        // checkpoints/ and train_log.jsonl go here
  const std::vector<Example<Scalar>>* holdout = nullptr;
  nlohmann::json run_config = nlohmann::json::object();  // stored in every checkpoint
  std::ostream* progress = nullptr;       // receives each log line as it is written
};

template <typename Scalar>
struct TrainResult {
  Detector<Scalar> final_model;
  Detector<Scalar> best_model;   // equals final_model when there is no holdout
  long best_step = 0;
  double best_holdout_accuracy = std::numeric_limits<double>::quiet_NaN();
  std::vector<LogRecord> log;
};

/// Mean cross-entropy of `batch` and its gradient with respect to the parameters.
template <typename Scalar>
Scalar batch_loss_and_gradient(const Detector<Scalar>& net, const Batch<Scalar>& batch,
                               model::Vector<Scalar>& grad, int* correct = nullptr);

/// Runs `config.total_steps` optimizer updates. Throws ModeMismatch when the
/// model, data and config disagree, and DivergenceDetected on a non-finite
/// loss after writing checkpoints/last_good.json (when out_dir is set).
template <typename Scalar>
TrainResult<Scalar> train(Detector<Scalar> model, BatchStream<Scalar>& data,
                          const TrainConfig& config, const TrainOptions<Scalar>& options = {});

struct EvalReport {
  std::string dataset;
  long total = 0;
  long tp = 0, tn = 0, fp = 0, fn = 0;  // label 1 (fake) is the positive class
  double accuracy = 0;
  std::string config_fingerprint;
  std::string checkpoint_id;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};
nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);

/// Tallies predictions against labels; throws EmptySplit when there are none.
EvalReport tally(std::span<const int> predictions, std::span<const int> labels);

/// Hash of the ModelSpec a detector was built from.
std::string config_fingerprint(const model::ModelSpec& spec);

template <typename Scalar>
EvalReport evaluate(const Detector<Scalar>& net, const std::vector<Example<Scalar>>& examples);

/// Streams a manifest split through the network one example at a time.
template <typename Scalar>
EvalReport evaluate(const Detector<Scalar>& net, const data::DatasetManifest& manifest,
                    data::Split split, data::FrameOptions frames, Warnings* warnings = nullptr);

}  // namespace addnet::trainer
