#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "addnet/checkpoint.hpp"
#include "addnet/cli.hpp"
#include "addnet/errors.hpp"
#include "support/temp_dir.hpp"

using namespace addnet;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::size_t count_files(const fs::path& dir, const std::string& suffix) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().string().ends_with(suffix);
  return n;
}

/// One small image corpus and one clip corpus shared by the suite.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new oracle::TempDir("cli");
    ASSERT_EQ(run({"synth", "--pool-size", "20", "--real", "40", "--fake", "40", "--seed", "2",
                   "--out", (*dir_ / "corpus").string()})
                  .code,
              0);
    ASSERT_EQ(run({"synth", "--pool-size", "6", "--real", "4", "--fake", "4", "--frames", "5",
                   "--test-fraction", "0.5", "--out", (*dir_ / "clips").string()})
                  .code,
              0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static fs::path path(const std::string& rel) { return *dir_ / rel; }

  static fs::path desk_config(const std::string& name, long steps = 40) {
    const fs::path p = path(name);
    write(p, "{\n  \"model\": {\"preset\": \"miniature_image\"},\n"
             "  \"train\": {\"total_steps\": " + std::to_string(steps) +
                 ", \"base_lr\": 0.001, \"decay_every\": 20, \"log_every\": 10, \"seed\": 4},\n"
                 "  \"data\": {\"manifest\": \"corpus/manifest.jsonl\"}\n}\n");
    return p;
  }

  static inline oracle::TempDir* dir_ = nullptr;
};

}  // namespace

TEST(Overrides, DottedKeysAndValueTypes) {
  nlohmann::json j{{"train", {{"total_steps", 5}}}};
  cli::apply_override(j, "train.total_steps=500");
  cli::apply_override(j, "data.manifest=corpus/manifest.jsonl");
  cli::apply_override(j, "model.attention_enabled=false");
  EXPECT_EQ(j["train"]["total_steps"], 500);
  EXPECT_EQ(j["data"]["manifest"], "corpus/manifest.jsonl");
  EXPECT_EQ(j["model"]["attention_enabled"], false);
  EXPECT_THROW(cli::apply_override(j, "novalue"), ConfigError);
  EXPECT_THROW(cli::apply_override(j, "train.total_steps.x=1"), ConfigError);
}

TEST(RunConfigTest, ResolvesDefaultsAndRejectsUnknownKeys) {
  const auto rc = cli::resolve_run_config({{"data", {{"manifest", "m.jsonl"}}}}, "/base");
  EXPECT_EQ(rc.manifest, fs::path("/base/m.jsonl"));
  EXPECT_EQ(rc.model, model::ModelSpec::miniature_image());
  EXPECT_EQ(rc.train.mode, Mode::image);
  EXPECT_EQ(cli::resolve_run_config(rc.to_json(), "/elsewhere").to_json(), rc.to_json());
  EXPECT_THROW(cli::resolve_run_config({{"data", {{"manifest", "m"}}}, {"extra", 1}}, "/"), ConfigError);
  EXPECT_THROW(cli::resolve_run_config(nlohmann::json::object(), "/"), ConfigError);
}

TEST_F(CliTest, MaskgenWritesOneMaskPerFace) {
  const auto pool = path("pool3"), out = path("masks3");
  ASSERT_EQ(run({"pool", "--count", "3", "--size", "48", "--out", pool.string()}).code, 0);
  const auto r = run({"maskgen", "--images", pool.string(), "--out", out.string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("3 ok / 0 failed"), std::string::npos);
  EXPECT_EQ(count_files(out, ".mask.png"), 3u);
}

TEST_F(CliTest, MaskgenReportsMissingLandmarks) {
  const auto pool = path("pool_missing"), out = path("masks_missing");
  ASSERT_EQ(run({"pool", "--count", "3", "--size", "48", "--out", pool.string()}).code, 0);
  fs::remove(pool / "id0001.landmarks.txt");
  const auto r = run({"maskgen", "--images", pool.string(), "--out", out.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("2 ok / 1 failed"), std::string::npos);
  EXPECT_NE(r.err.find("warning: id0001.png"), std::string::npos);
  EXPECT_EQ(count_files(out, ".mask.png"), 2u);
}

TEST_F(CliTest, MaskgenOnEmptyDirectoryIsVacuousSuccess) {
  fs::create_directories(path("empty_in"));
  const auto r = run({"maskgen", "--images", path("empty_in").string(), "--out",
                      path("empty_out").string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("0 ok / 0 failed"), std::string::npos);
}

TEST_F(CliTest, TrainWritesCheckpointsLogAndResolvedConfig) {
  const auto cfg = desk_config("train_ok.json");
  const auto out = path("train_ok");
  const auto r = run({"train", "--config", cfg.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "resolved_config.json"));
  EXPECT_TRUE(fs::exists(out / "train_summary.json"));
  EXPECT_TRUE(fs::exists(out / "checkpoints/best.json"));
  EXPECT_TRUE(fs::exists(out / "checkpoints/step-20.json"));
  EXPECT_TRUE(fs::exists(out / "checkpoints/step-40.json"));
  std::istringstream log(slurp(out / "train_log.jsonl"));
  int lines = 0;
  for (std::string line; std::getline(log, line); ++lines) {
    const auto j = nlohmann::json::parse(line);
    for (const char* k : {"step", "loss", "lr", "acc"}) EXPECT_TRUE(j.contains(k)) << k;
  }
  EXPECT_EQ(lines, 4);
}

TEST_F(CliTest, ResolvedConfigReproducesTheRun) {
  const auto cfg = desk_config("echo.json", 30);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", path("echo_a").string()}).code, 0);
  ASSERT_EQ(run({"train", "--config", (path("echo_a") / "resolved_config.json").string(), "--out",
                 path("echo_b").string()})
                .code,
            0);
  EXPECT_EQ(slurp(path("echo_a/train_log.jsonl")), slurp(path("echo_b/train_log.jsonl")));
  EXPECT_EQ(slurp(path("echo_a/resolved_config.json")), slurp(path("echo_b/resolved_config.json")));
}

TEST_F(CliTest, OverridesBeatFileValues) {
  const auto cfg = desk_config("override.json");
  const auto out = path("override");
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--set", "train.total_steps=10", "--out",
                 out.string()})
                .code,
            0);
  const auto resolved = nlohmann::json::parse(slurp(out / "resolved_config.json"));
  EXPECT_EQ(resolved["train"]["total_steps"], 10);
  EXPECT_TRUE(fs::exists(out / "checkpoints/step-10.json"));
}

TEST_F(CliTest, MalformedConfigExitsOneWithLine) {
  write(path("bad.json"), "{\n  \"train\": {\n    \"total_steps\": ,\n  }\n}\n");
  auto r = run({"train", "--config", path("bad.json").string(), "--out", path("bad").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;

  write(path("unknown.json"), "{\n  \"data\": {\"manifest\": \"corpus/manifest.jsonl\"},\n"
                              "  \"train\": {\n    \"learning_rate\": 1\n  }\n}\n");
  r = run({"train", "--config", path("unknown.json").string(), "--out", path("unknown").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("unknown.json:4:"), std::string::npos) << r.err;
}

TEST_F(CliTest, MissingFilesExitThreeListingPaths) {
  const auto copy = path("broken_corpus");
  fs::copy(path("corpus"), copy, fs::copy_options::recursive);
  fs::remove(copy / "real00000/0.png");
  fs::remove(copy / "fake00001/0.png");
  const auto r = run({"train", "--config", desk_config("broken.json").string(), "--set",
                      "data.manifest=broken_corpus/manifest.jsonl", "--out", path("broken").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("real00000/0.png"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("fake00001/0.png"), std::string::npos) << r.err;
}

TEST_F(CliTest, DivergenceExitsTwoAndKeepsLastGood) {
  const auto out = path("diverge");
  const auto r = run({"train", "--config", desk_config("diverge.json").string(), "--set",
                      "train.base_lr=1e30", "--out", out.string()});
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_TRUE(fs::exists(out / "checkpoints/last_good.json"));
}

TEST_F(CliTest, RefusesToOverwriteWithoutForce) {
  const auto cfg = desk_config("force.json", 10);
  const auto out = path("force");
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", out.string()}).code, 0);
  const auto again = run({"train", "--config", cfg.string(), "--out", out.string()});
  EXPECT_EQ(again.code, 1);
  EXPECT_NE(again.err.find("--force"), std::string::npos);
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--out", out.string(), "--force"}).code, 0);
}

TEST_F(CliTest, OutputRootComesFromEnvironment) {
  const auto root = path("env_root");
  ::setenv(cli::kOutRootVariable, root.c_str(), 1);
  const auto r = run({"pool", "--count", "1", "--size", "32"});
  ::unsetenv(cli::kOutRootVariable);
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(fs::exists(root / "pool/id0000.png"));
}

TEST_F(CliTest, EvalPrintsTableAndWritesReport) {
  const auto train_out = path("for_eval");
  ASSERT_EQ(run({"train", "--config", desk_config("for_eval.json").string(), "--out",
                 train_out.string()})
                .code,
            0);
  const auto ckpt = train_out / "checkpoints/best.json";
  const auto out = path("eval");
  const auto r = run({"eval", "--checkpoint", ckpt.string(), "--checkpoint",
                      (train_out / "checkpoints/step-20.json").string(), "--manifest",
                      "synthetic=" + (path("corpus") / "manifest.jsonl").string(), "--out",
                      out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("network", 0), 0u);
  EXPECT_NE(r.out.find("synthetic"), std::string::npos);
  EXPECT_NE(r.out.find("best [2D]"), std::string::npos);
  EXPECT_NE(r.out.find("step-20 [2D]"), std::string::npos);
  const auto report = nlohmann::json::parse(slurp(out / "eval_report.json"));
  ASSERT_EQ(report["reports"].size(), 2u);
  const auto& first = report["reports"][0];
  EXPECT_GE(first["accuracy"].get<double>(), 0.0);
  EXPECT_EQ(first["checkpoint_id"], load_checkpoint(ckpt).id);
  EXPECT_EQ(first["tp"].get<long>() + first["tn"].get<long>() + first["fp"].get<long>() +
                first["fn"].get<long>(),
            first["total"].get<long>());
}

TEST_F(CliTest, EvalModeMismatchAndEmptySplitExitOne) {
  const auto train_out = path("for_mismatch");
  ASSERT_EQ(run({"train", "--config", desk_config("for_mismatch.json", 10).string(), "--out",
                 train_out.string()})
                .code,
            0);
  const auto ckpt = (train_out / "checkpoints/best.json").string();
  auto r = run({"eval", "--checkpoint", ckpt, "--manifest",
                (path("clips") / "manifest.jsonl").string(), "--out", path("mm").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("mode mismatch"), std::string::npos) << r.err;

  const auto manifest = path("corpus") / "manifest.jsonl";
  std::string text = slurp(manifest);
  for (auto pos = text.find("\"test\""); pos != std::string::npos; pos = text.find("\"test\""))
    text.replace(pos, 6, "\"train\"");
  fs::create_directories(path("no_test"));
  write(path("no_test/manifest.jsonl"), text);
  for (const auto& e : fs::directory_iterator(path("corpus")))
    if (e.is_directory()) fs::create_directory_symlink(e.path(), path("no_test") / e.path().filename());
  r = run({"eval", "--checkpoint", ckpt, "--manifest", path("no_test/manifest.jsonl").string(),
           "--out", path("empty_eval").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("no usable samples"), std::string::npos) << r.err;
}

TEST_F(CliTest, VisualizeWritesMaskAndOverlay) {
  const auto pool = path("pool_vis");
  ASSERT_EQ(run({"pool", "--count", "1", "--size", "64", "--out", pool.string()}).code, 0);
  const auto out = path("vis");
  const auto r = run({"visualize", "--image", (pool / "id0000.png").string(), "--out", out.string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "id0000.mask.png"));
  EXPECT_TRUE(fs::exists(out / "id0000.overlay.png"));
}

TEST(CliParse, UnknownSubcommandOrFlagExitsOne) {
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"eval", "--checkpoint"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}
