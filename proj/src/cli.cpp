#include "addnet/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"

#include "addnet/checkpoint.hpp"
#include "addnet/errors.hpp"
#include "addnet/fusion.hpp"
#include "addnet/hash.hpp"
#include "addnet/png_io.hpp"

namespace addnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

nlohmann::json RunConfig::to_json() const {
  json d{{"manifest", manifest.string()}};
  d["mask_cache"] = mask_cache ? json(mask_cache->string()) : json(nullptr);
  d["sigma"] = sigma ? json(*sigma) : json(nullptr);
  return {{"model", model::to_json(model)}, {"train", trainer::to_json(train)}, {"data", d}};
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override \"" + assignment + "\" is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &config;
  std::stringstream path(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(path, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError("override \"" + key + "\" descends into a non-object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError("override \"" + key + "\" descends into a non-object");
  (*node)[parts.back()] = std::move(value);
}

RunConfig resolve_run_config(const json& raw, const fs::path& base_dir) {
  if (!raw.is_object()) throw ConfigError("run config must be an object");
  for (const auto& [key, _] : raw.items())
    if (key != "model" && key != "train" && key != "data")
      throw ConfigError("run config: unknown key \"" + key + "\"");
  RunConfig rc;
  rc.model = model::spec_from_json(raw.value("model", json{{"preset", "miniature_image"}}));
  json train = raw.value("train", json::object());
  if (!train.contains("mode")) train["mode"] = to_string(rc.model.mode);
  rc.train = trainer::train_config_from_json(train);

  const json d = raw.value("data", json::object());
  for (const auto& [key, _] : d.items())
    if (key != "manifest" && key != "mask_cache" && key != "sigma")
      throw ConfigError("data config: unknown key \"" + key + "\"");
  auto absolute = [&](const std::string& p) { return fs::absolute(base_dir / p).lexically_normal(); };
  try {
    if (!d.contains("manifest") || !d["manifest"].is_string())
      throw ConfigError("data config: \"manifest\" must name the corpus manifest");
    rc.manifest = absolute(d["manifest"].get<std::string>());
    if (d.contains("mask_cache") && !d["mask_cache"].is_null())
      rc.mask_cache = absolute(d["mask_cache"].get<std::string>());
    if (d.contains("sigma") && !d["sigma"].is_null()) {
      rc.sigma = d["sigma"].get<double>();
      if (!(*rc.sigma > 0)) throw ConfigError("data config: \"sigma\" must be positive");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("data config: ") + e.what());
  }
  return rc;
}

namespace {

/// Prefixes a config error with the first line of `text` mentioning the
/// quoted key it names, when there is one.
std::string anchor(const std::string& message, const fs::path& file, const std::string& text) {
  const auto open = message.find('"');
  const auto close = open == std::string::npos ? open : message.find('"', open + 1);
  if (close != std::string::npos) {
    const std::string quoted = message.substr(open, close - open + 1);
    std::istringstream lines(text);
    int n = 0;
    for (std::string line; std::getline(lines, line);) {
      ++n;
      if (line.find(quoted) != std::string::npos)
        return file.string() + ":" + std::to_string(n) + ": " + message;
    }
  }
  return file.string() + ": " + message;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

fs::path default_out(const std::string& subcommand) {
  const char* root = std::getenv(kOutRootVariable);
  return fs::path(root && *root ? root : "runs") / subcommand;
}

/// Refuses a non-empty output directory unless forced, then creates it and
/// echoes the resolved options into it.
fs::path prepare_out(const std::string& requested, const std::string& subcommand, bool force,
                     const json& resolved) {
  const fs::path out = requested.empty() ? default_out(subcommand) : fs::path(requested);
  if (fs::exists(out) && !fs::is_empty(out) && !force)
    throw ConfigError("output directory " + out.string() +
                      " is not empty; pass --force to write into it");
  fs::create_directories(out);
  write_json(out / "resolved_config.json", resolved);
  return out;
}

Size parse_size(const std::string& text) {
  int w = 0, h = 0;
  char x = 0;
  std::istringstream in(text);
  if (in >> w) {
    if (in >> x >> h) {
      if (x != 'x') w = 0;
    } else {
      h = w;
    }
  }
  if (w <= 0 || h <= 0) throw ConfigError("size \"" + text + "\" is not N or WxH");
  return {w, h};
}

std::string size_text(Size s) { return std::to_string(s.width) + "x" + std::to_string(s.height); }

struct Common {
  std::string out;
  bool force = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--out", c.out, std::string("Output directory (default: $") + kOutRootVariable +
                                      "/<subcommand>)");
  cmd->add_flag("--force", c.force, "Write into a non-empty output directory");
}

// maskgen ------------------------------------------------------------------

struct MaskgenArgs {
  Common common;
  std::string images, landmarks;
  std::optional<double> sigma;
};

int cmd_maskgen(const MaskgenArgs& a, std::ostream& out, std::ostream& err) {
  if (!fs::is_directory(a.images)) throw ConfigError("images directory " + a.images + " does not exist");
  const fs::path marks = a.landmarks.empty() ? fs::path(a.images) : fs::path(a.landmarks);
  json resolved{{"subcommand", "maskgen"}, {"images", a.images}, {"landmarks", marks.string()}};
  resolved["sigma"] = a.sigma ? json(*a.sigma) : json(nullptr);
  const fs::path dir = prepare_out(a.common.out, "maskgen", a.common.force, resolved);

  std::vector<fs::path> inputs;
  for (const auto& e : fs::directory_iterator(a.images)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && e.path().extension() == ".png" && !name.ends_with(".mask.png"))
      inputs.push_back(e.path());
  }
  std::sort(inputs.begin(), inputs.end());

  int ok = 0, failed = 0;
  for (const auto& image_path : inputs) {
    const std::string stem = image_path.stem().string();
    try {
      const ImageXf image = io::read_png(image_path);
      const fs::path lm = marks / (stem + ".landmarks.txt");
      if (!fs::exists(lm)) throw MissingFile({lm.string()});
      const auto landmarks = geometry::read_landmarks(lm);
      Warnings warnings;
      const double sigma = a.sigma.value_or(maskgen::default_sigma(image.size()));
      const auto mask = maskgen::generate_attention_mask(landmarks, image.size(), sigma, &warnings);
      for (const auto& w : warnings) err << "warning: " << image_path.filename().string() << ": " << w << '\n';
      io::write_png(dir / (stem + ".mask.png"), mask.values);
      ++ok;
    } catch (const std::exception& e) {
      err << "warning: " << image_path.filename().string() << ": " << e.what() << '\n';
      ++failed;
    }
  }
  out << ok << " ok / " << failed << " failed\n";
  return failed > 0 ? kFailure : kOk;
}

// pool ---------------------------------------------------------------------

struct PoolArgs {
  Common common;
  int count = 8;
  std::string size = "64";
  std::uint64_t seed = 0;
};

int cmd_pool(const PoolArgs& a, std::ostream& out) {
  const Size size = parse_size(a.size);
  if (a.count < 1) throw ConfigError("--count must be at least 1");
  const fs::path dir = prepare_out(a.common.out, "pool", a.common.force,
                                   {{"subcommand", "pool"}, {"count", a.count},
                                    {"size", size_text(size)}, {"seed", a.seed}});
  for (const auto& face : synthetic::render_pool(a.count, size, a.seed)) {
    io::write_png(dir / (face.identity + ".png"), face.image);
    geometry::write_landmarks(dir / (face.identity + ".landmarks.txt"), face.landmarks);
  }
  out << "wrote " << a.count << " faces to " << dir.string() << '\n';
  return kOk;
}

// synth --------------------------------------------------------------------

struct SynthArgs {
  Common common;
  int pool_size = 400;
  std::string render_size = "64";
  std::string size = "32";
  int real = 1000, fake = 1000;
  std::uint64_t seed = 0;
  int frames = 1;
  double test_fraction = 0.2;
  std::optional<double> sigma;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const Size render = parse_size(a.render_size), size = parse_size(a.size);
  if (a.real < 0 || a.fake < 0 || a.real + a.fake == 0)
    throw ConfigError("--real and --fake must be non-negative and not both zero");
  if (a.frames < 1) throw ConfigError("--frames must be at least 1");
  json resolved{{"subcommand", "synth"}, {"pool_size", a.pool_size},
                {"render_size", size_text(render)}, {"size", size_text(size)},
                {"real", a.real}, {"fake", a.fake}, {"seed", a.seed}, {"frames", a.frames},
                {"test_fraction", a.test_fraction}};
  resolved["sigma"] = a.sigma ? json(*a.sigma) : json(nullptr);
  const fs::path dir = prepare_out(a.common.out, "synth", a.common.force, resolved);

  const auto pool = synthetic::render_pool(a.pool_size, render, mix_seed(a.seed, 0x9001));
  fusion::CorpusOptions opt;
  opt.size = size;
  opt.test_fraction = a.test_fraction;
  opt.frames_per_sequence = a.frames;
  opt.sigma = a.sigma;
  const auto m = fusion::build_synthetic_corpus(pool, a.real, a.fake, a.seed, dir, opt);
  data::save_manifest(m, dir / "manifest.jsonl");
  out << "wrote " << m.sequences.size() << " sequences (" << m.frame_count(data::Split::train)
      << " train frames, " << m.frame_count(data::Split::test) << " test frames) to "
      << (dir / "manifest.jsonl").string() << '\n';
  return kOk;
}

// train --------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string config;
  std::vector<std::string> overrides;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  {
    json raw;
    std::string text;
    const fs::path base = a.config.empty() ? fs::current_path() : fs::path(a.config).parent_path();
    if (!a.config.empty()) {
      text = read_text(a.config);
      try {
        raw = json::parse(text);
      } catch (const json::parse_error& e) {
        throw ConfigError(a.config + ": " + e.what());
      }
    } else {
      raw = json::object();
    }
    for (const auto& o : a.overrides) apply_override(raw, o);
    try {
      rc = resolve_run_config(raw, base.empty() ? fs::path(".") : base);
    } catch (const ConfigError& e) {
      throw ConfigError(a.config.empty() ? std::string(e.what()) : anchor(e.what(), a.config, text));
    }
  }
  const json resolved = rc.to_json();
  const fs::path dir = prepare_out(a.common.out, "train", a.common.force, resolved);

  trainer::TrainResult<float> result{model::Detector<float>(rc.model), model::Detector<float>(rc.model)};
  try {
    const auto manifest = data::load_manifest(rc.manifest);
    const auto split = trainer::carve_holdout(manifest, rc.train.holdout_fraction, rc.train.seed);
    data::FrameOptions frames;
    frames.size = rc.model.input_size;
    frames.sigma = rc.sigma;
    frames.mask_cache = rc.mask_cache;
    Warnings warnings;
    const auto holdout = split.holdout.sequences.empty()
                             ? std::vector<model::Example<float>>{}
                             : trainer::load_examples<float>(split.holdout, data::Split::train,
                                                             rc.model, frames, &warnings);
    trainer::ManifestBatchStream<float> stream(split.training, data::Split::train, rc.model, frames,
                                               rc.train.batch_size, rc.train.seed,
                                               {true, rc.train.balanced}, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << '\n';
    trainer::TrainOptions<float> opt;
    opt.out_dir = dir;
    opt.holdout = &holdout;
    opt.run_config = resolved;
    opt.progress = &out;
    result = trainer::train(model::Detector<float>(rc.model, rc.train.seed), stream, rc.train, opt);
  } catch (const DivergenceDetected& e) {
    err << "error: " << e.what() << "; last good parameters kept in "
        << (dir / "checkpoints/last_good.json").string() << '\n';
    return kDiverged;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }

  json summary{{"final_checkpoint", checkpoint_id(result.final_model, rc.train.total_steps)},
               {"best_checkpoint", checkpoint_id(result.best_model, result.best_step)},
               {"best_step", result.best_step}};
  summary["best_holdout_accuracy"] = std::isnan(result.best_holdout_accuracy)
                                         ? json(nullptr)
                                         : json(result.best_holdout_accuracy);
  write_json(dir / "train_summary.json", summary);
  out << "done: best step " << result.best_step << ", checkpoints in "
      << (dir / "checkpoints").string() << '\n';
  return kOk;
}

// eval ---------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::vector<std::string> checkpoints;
  std::vector<std::string> datasets;
  std::string split = "test";
};

std::string percent(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * v << '%';
  return s.str();
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const data::Split split = data::split_from_string(a.split);
  std::vector<std::pair<std::string, fs::path>> datasets;
  for (const auto& d : a.datasets) {
    const auto eq = d.find('=');
    if (eq != std::string::npos) {
      datasets.emplace_back(d.substr(0, eq), d.substr(eq + 1));
    } else {
      const fs::path p(d);
      const fs::path parent = fs::absolute(p).parent_path();
      datasets.emplace_back(parent.filename().string(), p);
    }
  }
  const fs::path dir = prepare_out(a.common.out, "eval", a.common.force,
                                   {{"subcommand", "eval"}, {"checkpoints", a.checkpoints},
                                    {"manifests", a.datasets}, {"split", a.split}});

  std::vector<data::DatasetManifest> manifests;
  for (const auto& [name, path] : datasets) manifests.push_back(data::load_manifest(path));

  std::vector<std::string> rows;
  std::vector<std::vector<trainer::EvalReport>> table;
  json reports = json::array();
  for (const auto& path : a.checkpoints) {
    const Checkpoint c = load_checkpoint(path);
    const std::string kind = c.detector.spec().mode == Mode::image ? "2D" : "3D";
    rows.push_back(fs::path(path).stem().string() + " [" + kind + "]");
    auto& row = table.emplace_back();
    for (std::size_t k = 0; k < datasets.size(); ++k) {
      data::FrameOptions frames;
      frames.size = c.detector.spec().input_size;
      const json& d = c.extra.contains("data") ? c.extra["data"] : json::object();
      if (d.contains("sigma") && d["sigma"].is_number()) frames.sigma = d["sigma"].get<double>();
      Warnings warnings;
      trainer::EvalReport r;
      try {
        r = trainer::evaluate(c.detector, manifests[k], split, frames, &warnings);
      } catch (const ModeMismatch& e) {
        err << "error: " << path << " on " << datasets[k].first << ": " << e.what() << '\n';
        return kFailure;
      }
      for (const auto& w : warnings) err << "warning: " << w << '\n';
      r.dataset = datasets[k].first;
      r.checkpoint_id = c.id;
      reports.push_back(trainer::to_json(r));
      row.push_back(r);
    }
  }
  write_json(dir / "eval_report.json", {{"split", a.split}, {"reports", reports}});

  std::size_t name_w = std::string("network").size();
  for (const auto& r : rows) name_w = std::max(name_w, r.size());
  std::vector<std::size_t> col_w;
  for (const auto& [name, _] : datasets) col_w.push_back(std::max<std::size_t>(name.size(), 8));
  out << std::left << std::setw(int(name_w)) << "network";
  for (std::size_t k = 0; k < datasets.size(); ++k)
    out << "  " << std::right << std::setw(int(col_w[k])) << datasets[k].first;
  out << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << std::left << std::setw(int(name_w)) << rows[i];
    for (std::size_t k = 0; k < datasets.size(); ++k)
      out << "  " << std::right << std::setw(int(col_w[k])) << percent(table[i][k].accuracy);
    out << '\n';
  }
  return kOk;
}

// visualize ----------------------------------------------------------------

struct VisualizeArgs {
  Common common;
  std::string image, landmarks;
  std::optional<double> sigma;
};

int cmd_visualize(const VisualizeArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path image_path(a.image);
  const fs::path lm = a.landmarks.empty()
                          ? image_path.parent_path() / (image_path.stem().string() + ".landmarks.txt")
                          : fs::path(a.landmarks);
  json resolved{{"subcommand", "visualize"}, {"image", a.image}, {"landmarks", lm.string()}};
  resolved["sigma"] = a.sigma ? json(*a.sigma) : json(nullptr);
  const fs::path dir = prepare_out(a.common.out, "visualize", a.common.force, resolved);

  const ImageXf image = io::read_png(image_path);
  if (image.num_channels() != 3) throw ShapeMismatch("visualize expects an RGB image");
  const auto landmarks = geometry::read_landmarks(lm);
  Warnings warnings;
  const double sigma = a.sigma.value_or(maskgen::default_sigma(image.size()));
  const auto mask = maskgen::generate_attention_mask(landmarks, image.size(), sigma, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << '\n';

  ImageXf tint(image.width(), image.height(), 3, 0.0f);
  tint.channels[0].setOnes();
  const PlaneXf alpha = (0.6 * mask.values).cast<float>();
  const std::string stem = image_path.stem().string();
  io::write_png(dir / (stem + ".mask.png"), mask.values);
  io::write_png(dir / (stem + ".overlay.png"), fusion::fuse(image, tint, alpha));
  out << "wrote " << (dir / (stem + ".mask.png")).string() << " and "
      << (dir / (stem + ".overlay.png")).string() << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attention-guided deepfake detection toolkit", "addnet"};
  app.require_subcommand(1);

  MaskgenArgs mg;
  auto* maskgen = app.add_subcommand("maskgen", "Write an attention mask for every PNG with landmarks");
  maskgen->add_option("--images", mg.images, "Directory of PNG faces")->required();
  maskgen->add_option("--landmarks", mg.landmarks,
                      "Directory of <stem>.landmarks.txt files (default: the images directory)");
  maskgen->add_option("--sigma", mg.sigma, "Blur standard deviation in pixels");
  add_common(maskgen, mg.common);

  PoolArgs pl;
  auto* pool = app.add_subcommand("pool", "Render procedural faces with landmark sidecars");
  pool->add_option("--count", pl.count, "Number of identities");
  pool->add_option("--size", pl.size, "N or WxH");
  pool->add_option("--seed", pl.seed);
  add_common(pool, pl.common);

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "Build a labeled corpus of real and fused faces");
  synth->add_option("--pool-size", sy.pool_size, "Identities rendered for the corpus");
  synth->add_option("--render-size", sy.render_size, "Pool rendering size, N or WxH");
  synth->add_option("--size", sy.size, "Corpus frame size, N or WxH");
  synth->add_option("--real", sy.real);
  synth->add_option("--fake", sy.fake);
  synth->add_option("--seed", sy.seed);
  synth->add_option("--frames", sy.frames, "Frames per sequence");
  synth->add_option("--test-fraction", sy.test_fraction, "Share of identities in the test split");
  synth->add_option("--sigma", sy.sigma);
  add_common(synth, sy.common);

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a detector from a run config");
  train->add_option("--config", tr.config, "JSON run config with model, train and data sections");
  train->add_option("--set", tr.overrides, "Override a dotted key, e.g. train.total_steps=500");
  add_common(train, tr.common);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score checkpoints on manifest splits");
  eval->add_option("--checkpoint", ev.checkpoints, "Checkpoint file (repeatable)")->required();
  eval->add_option("--manifest", ev.datasets, "[name=]manifest path (repeatable)")->required();
  eval->add_option("--split", ev.split)->check(CLI::IsMember({"train", "test"}));
  add_common(eval, ev.common);

  VisualizeArgs vz;
  auto* visualize = app.add_subcommand("visualize", "Write the mask and an overlay for one face");
  visualize->add_option("--image", vz.image)->required();
  visualize->add_option("--landmarks", vz.landmarks, "Sidecar file (default: <stem>.landmarks.txt)");
  visualize->add_option("--sigma", vz.sigma);
  add_common(visualize, vz.common);

  std::vector<const char*> argv{"addnet"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kFailure;
  }

  try {
    if (*maskgen) return cmd_maskgen(mg, out, err);
    if (*pool) return cmd_pool(pl, out);
    if (*synth) return cmd_synth(sy, out);
    if (*train) return cmd_train(tr, out, err);
    if (*eval) return cmd_eval(ev, out, err);
    if (*visualize) return cmd_visualize(vz, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace addnet::cli
