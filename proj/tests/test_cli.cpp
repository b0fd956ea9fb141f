#include <filesystem>
#include <fstream>
#include <iterator>
#include <unistd.h>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cli.hpp"
#include "reskin/config.hpp"
#include "reskin/datagen.hpp"

namespace fs = std::filesystem;
using reskin::cli::run;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("reskin_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run_quiet(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr) {
  args.insert(args.begin(), "reskin");
  testing::internal::CaptureStdout();
  testing::internal::CaptureStderr();
  const int rc = run(args);
  const auto o = testing::internal::GetCapturedStdout();
  const auto e = testing::internal::GetCapturedStderr();
  if (out) *out = o;
  if (err) *err = e;
  return rc;
}

}  // namespace

TEST(Cli, HelpListsEveryKeyAndExitCodes) {
  std::string out;
  EXPECT_EQ(run_quiet({"--help"}, &out), 0);
  for (const auto& k : reskin::cfg::registry()) EXPECT_NE(out.find(k.key), std::string::npos) << k.key;
  EXPECT_NE(out.find("simulate"), std::string::npos);
  EXPECT_NE(out.find("stream"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("codes");
  EXPECT_EQ(run_quiet({"simulate", "--run-dir", dir.string(), "--set", "train.epoch=3"}), 2);
  EXPECT_EQ(run_quiet({"simulate", "--run-dir", dir.string(), "--set", "train.epochs=lots"}), 2);
  EXPECT_EQ(run_quiet({"simulate", "--run-dir", dir.string(), "--preset", "table9"}), 2);
  EXPECT_EQ(run_quiet({"simulate", "--bogus-flag"}), 2);
  EXPECT_EQ(run_quiet({"simulate", "--run-dir", dir.string(), "-c", "/nonexistent/c.json"}), 3);
  EXPECT_EQ(run_quiet({"train", "--run-dir", dir.string(), "-d", "/nonexistent/a.rskd"}), 3);
  fs::create_directories(dir);
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_EQ(run_quiet({"simulate", "--run-dir", dir.string(), "-c", (dir / "bad.json").string()}), 2);
}

TEST(Cli, SimulateCreatesRunDirAndSamples) {
  const auto dir = scratch("sim") / "nested" / "deeper";
  std::string out;
  ASSERT_EQ(run_quiet({"simulate", "--passes", "1", "--run-dir", dir.string()}, &out), 0);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "config.json"));
  EXPECT_NE(out.find("manifest.json"), std::string::npos);
  const auto ds = reskin::data::read_dataset((dir / "sensor.rskd").string());
  EXPECT_EQ(ds.samples.size(), 390u);
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  const auto cfg = reskin::cfg::RunConfig::from_file((dir / "config.json").string());
  EXPECT_EQ(manifest.at("config_hash"), cfg.hash());
}

TEST(Cli, DefaultRunDirIsHashUnderOutputRoot) {
  const auto root = scratch("root");
  ASSERT_EQ(run_quiet({"simulate", "--passes", "1", "--set", "output.root=" + root.string()}), 0);
  reskin::cfg::RunConfig c;
  c.set("data.passes", "1");
  EXPECT_TRUE(fs::exists(root / c.hash() / "sensor.rskd"));
}

TEST(Cli, FleetPresetWritesEverySensor) {
  const auto dir = scratch("fleet");
  ASSERT_EQ(run_quiet({"simulate", "-p", "table2", "--passes", "1", "--set", "lines.count=1",
                       "--run-dir", dir.string()}),
            0);
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  int datasets = 0, lines = 0;
  for (const auto& f : manifest.at("files")) {
    const auto name = f.dump();
    datasets += name.find(".rskd") != std::string::npos;
    lines += name.find(".rskl") != std::string::npos;
  }
  EXPECT_EQ(datasets, 18);
  EXPECT_EQ(lines, 18);
}

TEST(Cli, RerunIsByteIdentical) {
  const auto a = scratch("rerun_a"), b = scratch("rerun_b");
  for (const auto& d : {a, b})
    ASSERT_EQ(run_quiet({"simulate", "--passes", "1", "--run-dir", d.string()}), 0);
  for (const auto* f : {"sensor.rskd", "sensor.rskl", "manifest.json", "config.json"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Cli, TrainAdaptEval) {
  const auto dir = scratch("pipeline");
  const auto d = dir.string();
  ASSERT_EQ(run_quiet({"simulate", "--passes", "1", "--run-dir", d}), 0);
  ASSERT_EQ(run_quiet({"train", "-d", d + "/sensor.rskd", "--test-samples", "90", "--set",
                       "train.epochs=3", "--run-dir", d}),
            0);
  EXPECT_TRUE(fs::exists(dir / "model.rskm"));
  EXPECT_TRUE(fs::exists(dir / "test.rskd"));
  EXPECT_TRUE(fs::exists(dir / "train_log.csv"));

  ASSERT_EQ(run_quiet({"adapt", "-m", d + "/model.rskm", "--set", "adapt.budget=0", "-o",
                       d + "/same.rskm", "--run-dir", d}),
            0);
  EXPECT_EQ(slurp(dir / "model.rskm"), slurp(dir / "same.rskm"));

  ASSERT_EQ(run_quiet({"adapt", "-m", d + "/model.rskm", "-l", d + "/sensor.rskl", "--source",
                       d + "/sensor.rskd", "--set", "adapt.budget=65", "--set", "adapt.epochs=1",
                       "-o", d + "/adapted.rskm", "--run-dir", d}),
            0);
  EXPECT_NE(slurp(dir / "model.rskm"), slurp(dir / "adapted.rskm"));

  std::string out;
  ASSERT_EQ(run_quiet({"eval", "-m", d + "/model.rskm", "-d", d + "/test.rskd", "-f", "json",
                       "--name", "probe", "--run-dir", d},
                      &out),
            0);
  const auto report = nlohmann::json::parse(out);
  EXPECT_NE(report.dump().find("probe"), std::string::npos);
  for (const auto* f : {"report.json", "report.csv", "report.md"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
}

TEST(Cli, LabelDimensionMismatchIsConfigError) {
  const auto dir = scratch("dims");
  const auto d = dir.string();
  ASSERT_EQ(run_quiet({"simulate", "--passes", "1", "--run-dir", d}), 0);
  ASSERT_EQ(run_quiet({"train", "-d", d + "/sensor.rskd", "--set", "train.epochs=1", "--run-dir", d}), 0);
  const auto shear = dir / "shear";
  ASSERT_EQ(run_quiet({"simulate", "--set", "data.protocol=shear_drag", "--set", "shear.span=4",
                       "--run-dir", shear.string()}),
            0);
  ASSERT_EQ(reskin::data::read_dataset((shear / "sensor.rskd").string()).meta.label_dim, 5);
  EXPECT_EQ(run_quiet({"eval", "-m", d + "/model.rskm", "-d", (shear / "sensor.rskd").string(),
                       "--run-dir", d}),
            2);
}

TEST(Cli, StreamRecordDecode) {
  const auto dir = scratch("stream");
  const auto d = dir.string();
  ASSERT_EQ(run_quiet({"stream", "record", "--interactions", "40", "--run-dir", d}), 0);
  const auto bin = dir / "stream.bin";
  ASSERT_TRUE(fs::exists(bin));
  const auto bytes = slurp(bin);
  ASSERT_EQ(bytes.size() % 92, 0u);
  const auto frames = bytes.size() / 92;

  std::string csv1, csv2, err;
  ASSERT_EQ(run_quiet({"stream", "decode", "-i", bin.string(), "--run-dir", d}, &csv1, &err), 0);
  ASSERT_EQ(run_quiet({"stream", "decode", "-i", bin.string(), "--run-dir", d}, &csv2), 0);
  EXPECT_EQ(csv1, csv2);
  EXPECT_NE(err.find("frames=" + std::to_string(frames)), std::string::npos) << err;
  EXPECT_NE(err.find("crc_failures=0"), std::string::npos) << err;

  auto bad = bytes;
  bad[92 * 3 + 20] ^= 0x10;
  bad[92 * 7 + 50] ^= 0x01;
  std::ofstream(dir / "bad.bin", std::ios::binary) << bad;
  ASSERT_EQ(run_quiet({"stream", "decode", "-i", (dir / "bad.bin").string(), "--run-dir", d}, nullptr, &err), 0);
  EXPECT_NE(err.find("frames=" + std::to_string(frames - 2)), std::string::npos) << err;
  EXPECT_NE(err.find("crc_failures=2"), std::string::npos) << err;

  std::string replay_err;
  ASSERT_EQ(run_quiet({"stream", "replay", "-i", bin.string(), "--dry-run", "--run-dir", d}, nullptr,
                      &replay_err),
            0);
  EXPECT_NE(replay_err.find("frames=" + std::to_string(frames)), std::string::npos) << replay_err;
}

TEST(Cli, PresetsListsAll) {
  std::string out;
  ASSERT_EQ(run_quiet({"presets"}, &out), 0);
  for (const auto* p : {"same_sensor", "table2", "fig5a_budget_sweep", "fig5b_sensor_sweep",
                        "flex_transfer", "manual_adapt", "drift"})
    EXPECT_NE(out.find(p), std::string::npos) << p;
}

TEST(Cli, SavedConfigReproducesRun) {
  const auto a = scratch("saved_a"), b = scratch("saved_b");
  ASSERT_EQ(run_quiet({"simulate", "--passes", "1", "--set", "seed=17", "--run-dir", a.string()}), 0);
  ASSERT_EQ(run_quiet({"simulate", "-c", (a / "config.json").string(), "--run-dir", b.string()}), 0);
  EXPECT_EQ(slurp(a / "sensor.rskd"), slurp(b / "sensor.rskd"));
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
}
