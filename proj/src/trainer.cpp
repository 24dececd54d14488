#include "addnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "addnet/checkpoint.hpp"
#include "addnet/errors.hpp"
#include "addnet/hash.hpp"

namespace addnet::trainer {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("train config: " + what); };
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (!(base_lr > 0)) fail("base_lr must be positive");
  if (!(decay_factor > 0 && decay_factor <= 1)) fail("decay_factor must lie in (0, 1]");
  if (decay_every < 1) fail("decay_every must be at least 1");
  if (total_steps < 0) fail("total_steps must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail("betas must lie in [0, 1)");
  if (!(epsilon > 0)) fail("epsilon must be positive");
  if (log_every < 1) fail("log_every must be at least 1");
  if (!(holdout_fraction >= 0 && holdout_fraction < 1))
    fail("holdout_fraction must lie in [0, 1)");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"mode", to_string(c.mode)},       {"batch_size", c.batch_size},
          {"base_lr", c.base_lr},            {"decay_factor", c.decay_factor},
          {"decay_every", c.decay_every},    {"total_steps", c.total_steps},
          {"beta1", c.beta1},                {"beta2", c.beta2},
          {"epsilon", c.epsilon},            {"seed", c.seed},
          {"log_every", c.log_every},        {"holdout_fraction", c.holdout_fraction},
          {"balanced", c.balanced}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("train config must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "mode") c.mode = mode_from_string(value.get<std::string>());
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "base_lr") c.base_lr = value.get<double>();
      else if (key == "decay_factor") c.decay_factor = value.get<double>();
      else if (key == "decay_every") c.decay_every = value.get<long>();
      else if (key == "total_steps") c.total_steps = value.get<long>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "epsilon") c.epsilon = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "log_every") c.log_every = value.get<int>();
      else if (key == "holdout_fraction") c.holdout_fraction = value.get<double>();
      else if (key == "balanced") c.balanced = value.get<bool>();
      else throw ConfigError("train config: unknown key \"" + key + "\"");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("train config: bad value for \"" + key + "\": " + e.what());
    }
  }
  c.validate();
  return c;
}

double lr_at(long step, const TrainConfig& config) {
  return config.base_lr * std::pow(config.decay_factor, double(step / config.decay_every));
}

template <typename Scalar>
Adam<Scalar>::Adam(Eigen::Index size, const TrainConfig& config)
    : m_(model::Vector<Scalar>::Zero(size)),
      v_(model::Vector<Scalar>::Zero(size)),
      beta1_(config.beta1),
      beta2_(config.beta2),
      epsilon_(config.epsilon) {}

template <typename Scalar>
void Adam<Scalar>::step(model::Vector<Scalar>& parameters, const model::Vector<Scalar>& grad,
                        double lr) {
  ++t_;
  const Scalar b1 = Scalar(beta1_), b2 = Scalar(beta2_);
  m_ = b1 * m_ + (1 - b1) * grad;
  v_ = b2 * v_ + (1 - b2) * grad.cwiseAbs2();
  const Scalar c1 = Scalar(1 - std::pow(beta1_, double(t_)));
  const Scalar c2 = Scalar(1 - std::pow(beta2_, double(t_)));
  parameters.array() -=
      Scalar(lr) * (m_.array() / c1) / ((v_.array() / c2).sqrt() + Scalar(epsilon_));
}

template <typename Scalar>
ManifestBatchStream<Scalar>::ManifestBatchStream(data::DatasetManifest manifest, data::Split split,
                                                 const model::ModelSpec& spec,
                                                 data::FrameOptions frames, int batch_size,
                                                 std::uint64_t seed, data::SamplerOptions sampling,
                                                 Warnings* warnings)
    : manifest_(std::make_unique<data::DatasetManifest>(std::move(manifest))),
      spec_(spec),
      loader_(*manifest_, std::move(frames)) {
  if (manifest_->mode != spec.mode)
    throw ModeMismatch("mode mismatch: manifest is " + to_string(manifest_->mode) +
                       ", model is " + to_string(spec.mode));
  if (spec.mode == Mode::image)
    images_.emplace(*manifest_, split, batch_size, seed, sampling, warnings);
  else
    clips_.emplace(*manifest_, split, spec.sequence_length, batch_size, seed, warnings);
}

template <typename Scalar>
Batch<Scalar> ManifestBatchStream<Scalar>::next() {
  Batch<Scalar> batch;
  if (images_) {
    for (const data::FaceSample* s : images_->next())
      batch.push_back(data::make_example<Scalar>(loader_, *s, spec_));
  } else {
    for (const data::ClipRef& c : clips_->next())
      batch.push_back(data::make_example<Scalar>(loader_, c, spec_));
  }
  return batch;
}

HoldoutSplit carve_holdout(const data::DatasetManifest& manifest, double fraction,
                           std::uint64_t seed) {
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < manifest.sequences.size(); ++i)
    if (manifest.sequences[i].split == data::Split::train) train.push_back(i);
  std::mt19937_64 rng(mix_seed(seed, 0x401d));
  std::shuffle(train.begin(), train.end(), rng);
  const auto count = std::size_t(std::ceil(fraction * double(train.size())));
  std::vector<bool> held(manifest.sequences.size(), false);
  for (std::size_t k = 0; k < count && k < train.size(); ++k) held[train[k]] = true;

  HoldoutSplit out{manifest, manifest};
  out.training.sequences.clear();
  out.holdout.sequences.clear();
  for (std::size_t i = 0; i < manifest.sequences.size(); ++i)
    (held[i] ? out.holdout : out.training).sequences.push_back(manifest.sequences[i]);
  return out;
}

namespace {

/// Calls `visit` with every example of a split, one at a time.
template <typename Scalar, typename Visit>
void for_each_example(const data::DatasetManifest& manifest, data::Split split,
                      const model::ModelSpec& spec, data::FrameOptions frames, Warnings* warnings,
                      Visit&& visit) {
  if (manifest.mode != spec.mode)
    throw ModeMismatch("mode mismatch: manifest is " + to_string(manifest.mode) + ", model is " +
                       to_string(spec.mode));
  frames.memoize = false;
  data::FrameLoader loader(manifest, std::move(frames));
  if (spec.mode == Mode::image) {
    for (const data::FaceSequence* s : manifest.split(split))
      for (const data::FaceSample& f : s->frames) {
        if (!f.landmarks) {
          warn(warnings, "skipping " + f.image_path.string() + ": no landmarks");
          continue;
        }
        visit(data::make_example<Scalar>(loader, f, spec));
      }
  } else {
    for (const data::ClipRef& c : data::enumerate_clips(manifest, split, spec.sequence_length, warnings))
      visit(data::make_example<Scalar>(loader, c, spec));
  }
}

}  // namespace

template <typename Scalar>
std::vector<Example<Scalar>> load_examples(const data::DatasetManifest& manifest, data::Split split,
                                           const model::ModelSpec& spec,
                                           data::FrameOptions frames, Warnings* warnings) {
  std::vector<Example<Scalar>> out;
  for_each_example<Scalar>(manifest, split, spec, std::move(frames), warnings,
                           [&](Example<Scalar>&& e) { out.push_back(std::move(e)); });
  return out;
}

nlohmann::json to_json(const LogRecord& r) {
  nlohmann::json j{{"step", r.step}, {"loss", r.loss}, {"lr", r.lr}, {"acc", r.accuracy}};
  if (r.holdout) j["holdout_acc"] = *r.holdout;
  return j;
}

template <typename Scalar>
Scalar batch_loss_and_gradient(const Detector<Scalar>& net, const Batch<Scalar>& batch,
                               model::Vector<Scalar>& grad, int* correct) {
  grad = model::Vector<Scalar>::Zero(net.parameter_count());
  Scalar loss = 0;
  int hits = 0;
  for (const auto& ex : batch) {
    Logits<Scalar> logits;
    loss += model::loss_and_gradient(net, ex, grad, nullptr, &logits);
    hits += predict(logits) == ex.label;
  }
  const Scalar n = Scalar(std::max<std::size_t>(batch.size(), 1));
  grad /= n;
  if (correct) *correct = hits;
  return loss / n;
}

template <typename Scalar>
TrainResult<Scalar> train(Detector<Scalar> model, BatchStream<Scalar>& data,
                          const TrainConfig& config, const TrainOptions<Scalar>& options) {
  config.validate();
  if (model.spec().mode != config.mode || data.mode() != config.mode)
    throw ModeMismatch("mode mismatch: model " + to_string(model.spec().mode) + ", data " +
                       to_string(data.mode()) + ", config " + to_string(config.mode));

  std::ofstream log_file;
  fs::path ckpt_dir;
  if (options.out_dir) {
    ckpt_dir = *options.out_dir / "checkpoints";
    fs::create_directories(ckpt_dir);
    log_file.open(*options.out_dir / "train_log.jsonl", std::ios::trunc);
    if (!log_file) throw Error("cannot write training log under " + options.out_dir->string());
  }
  auto save = [&](const Detector<Scalar>& d, long step, const std::string& name) {
    if (options.out_dir)
      save_checkpoint(ckpt_dir / name, d.template cast<float>(), step, options.run_config);
  };

  TrainResult<Scalar> result{model, model, 0, std::numeric_limits<double>::quiet_NaN(), {}};
  if (options.holdout && !options.holdout->empty())
    result.best_holdout_accuracy = evaluate(model, *options.holdout).accuracy;

  Adam<Scalar> adam(model.parameter_count(), config);
  model::Vector<Scalar> grad;
  for (long step = 0; step < config.total_steps; ++step) {
    const Batch<Scalar> batch = data.next();
    int correct = 0;
    const Scalar loss = batch_loss_and_gradient(model, batch, grad, &correct);
    if (!std::isfinite(double(loss)) || !grad.allFinite()) {
      save(model, step, "last_good.json");
      save(result.best_model, result.best_step, "best.json");
      throw DivergenceDetected(step, "non-finite loss at step " + std::to_string(step));
    }
    const double lr = lr_at(step, config);
    adam.step(model.parameters(), grad, lr);

    const long done = step + 1;
    if (done % config.log_every == 0 || done == config.total_steps) {
      LogRecord rec{done, double(loss), lr, double(correct) / double(batch.size()), std::nullopt};
      if (options.holdout && !options.holdout->empty()) {
        rec.holdout = evaluate(model, *options.holdout).accuracy;
        if (*rec.holdout > result.best_holdout_accuracy) {
          result.best_holdout_accuracy = *rec.holdout;
          result.best_model = model;
          result.best_step = done;
        }
      }
      result.log.push_back(rec);
      const std::string line = to_json(rec).dump();
      if (log_file.is_open()) log_file << line << std::endl;
      if (options.progress) *options.progress << line << std::endl;
    }
    if (done % config.decay_every == 0 && done != config.total_steps)
      save(model, done, "step-" + std::to_string(done) + ".json");
  }

  const bool selecting = options.holdout && !options.holdout->empty();
  if (!selecting) {
    result.best_model = model;
    result.best_step = config.total_steps;
  }
  save(model, config.total_steps, "step-" + std::to_string(config.total_steps) + ".json");
  save(result.best_model, result.best_step, "best.json");
  result.final_model = std::move(model);
  return result;
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"dataset", r.dataset},
          {"total", r.total},
          {"tp", r.tp},
          {"tn", r.tn},
          {"fp", r.fp},
          {"fn", r.fn},
          {"accuracy", r.accuracy},
          {"config_fingerprint", r.config_fingerprint},
          {"checkpoint_id", r.checkpoint_id}};
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.dataset = j.at("dataset").get<std::string>();
  r.total = j.at("total").get<long>();
  r.tp = j.at("tp").get<long>();
  r.tn = j.at("tn").get<long>();
  r.fp = j.at("fp").get<long>();
  r.fn = j.at("fn").get<long>();
  r.accuracy = j.at("accuracy").get<double>();
  r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
  r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
  return r;
}

EvalReport tally(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw ShapeMismatch("tally: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(labels.size()) + " labels");
  if (labels.empty()) throw EmptySplit("nothing to evaluate");
  EvalReport r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool fake = labels[i] == 1, said_fake = predictions[i] == 1;
    (fake ? (said_fake ? r.tp : r.fn) : (said_fake ? r.fp : r.tn)) += 1;
  }
  r.total = long(labels.size());
  r.accuracy = double(r.tp + r.tn) / double(r.total);
  return r;
}

std::string config_fingerprint(const model::ModelSpec& spec) {
  Fnv1a h;
  h.update(model::to_json(spec).dump());
  return h.hex();
}

template <typename Scalar>
EvalReport evaluate(const Detector<Scalar>& net, const std::vector<Example<Scalar>>& examples) {
  std::vector<int> predictions, labels;
  for (const auto& ex : examples) {
    predictions.push_back(predict(model::forward(net, ex)));
    labels.push_back(ex.label);
  }
  EvalReport r = tally(predictions, labels);
  r.config_fingerprint = config_fingerprint(net.spec());
  return r;
}

template <typename Scalar>
EvalReport evaluate(const Detector<Scalar>& net, const data::DatasetManifest& manifest,
                    data::Split split, data::FrameOptions frames, Warnings* warnings) {
  std::vector<int> predictions, labels;
  for_each_example<Scalar>(manifest, split, net.spec(), std::move(frames), warnings,
                           [&](Example<Scalar>&& ex) {
                             predictions.push_back(predict(model::forward(net, ex)));
                             labels.push_back(ex.label);
                           });
  if (labels.empty()) throw EmptySplit("split " + data::to_string(split) + " has no usable samples");
  EvalReport r = tally(predictions, labels);
  r.config_fingerprint = config_fingerprint(net.spec());
  return r;
}

#define ADDNET_INSTANTIATE(S)                                                                      \
  template class Adam<S>;                                                                          \
  template class ManifestBatchStream<S>;                                                           \
  template std::vector<Example<S>> load_examples<S>(const data::DatasetManifest&, data::Split,     \
                                                    const model::ModelSpec&, data::FrameOptions,   \
                                                    Warnings*);                                    \
  template S batch_loss_and_gradient<S>(const Detector<S>&, const Batch<S>&, model::Vector<S>&,    \
                                        int*);                                                     \
  template TrainResult<S> train<S>(Detector<S>, BatchStream<S>&, const TrainConfig&,               \
                                   const TrainOptions<S>&);                                        \
  template EvalReport evaluate<S>(const Detector<S>&, const std::vector<Example<S>>&);             \
  template EvalReport evaluate<S>(const Detector<S>&, const data::DatasetManifest&, data::Split,   \
                                  data::FrameOptions, Warnings*);

ADDNET_INSTANTIATE(float)
ADDNET_INSTANTIATE(double)

#undef ADDNET_INSTANTIATE

}  // namespace addnet::trainer
