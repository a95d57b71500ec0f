#include <gtest/gtest.h>

#include <json.hpp>
#include <sstream>

#include "iclv/cli.hpp"
#include "iclv/lvd.hpp"
#include "iclv/panel.hpp"
#include "iclv/text.hpp"
#include "support.hpp"

using namespace iclv;
using iclv::testing::data_path;
using iclv::testing::scratch_dir;
using iclv::testing::spec_path;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "iclv");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) { return text::read_file(p.string()); }

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"estimate", "--spec", "/nonexistent.spec", "--data", "/nonexistent.csv", "--out", "/tmp/x"}).code, 2);
  EXPECT_EQ(run({"estimate", "--spec", spec_path("mnl.spec")}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, SimulateEstimateIsDeterministic) {
  const auto dir = scratch_dir("cli_det");
  const auto spec = data_path("tiny_hm.spec");
  const auto panel = (dir / "panel.csv").string();
  auto r = run({"simulate", "--spec", spec, "--params", data_path("tiny_hm_truth.txt"), "--config",
                data_path("tiny_hm.gen"), "--out", panel, "--seed", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto first_panel = slurp(panel);
  r = run({"simulate", "--spec", spec, "--params", data_path("tiny_hm_truth.txt"), "--config",
           data_path("tiny_hm.gen"), "--out", panel, "--seed", "4"});
  EXPECT_EQ(slurp(panel), first_panel);

  std::vector<std::string> results;
  for (const std::string threads : {"1", "1", "3"}) {
    const auto out = (dir / ("fit_" + threads + std::to_string(results.size()))).string();
    r = run({"estimate", "--spec", spec, "--data", panel, "--out", out, "--draws", "50", "--threads", threads,
             "--truth", data_path("tiny_hm_truth.txt"), "--draws-cache", (dir / "cache").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    results.push_back(slurp(std::filesystem::path(out) / "results.txt"));
    EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(out) / "recovery.csv"));
    EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(out) / "covariance.csv"));
  }
  EXPECT_EQ(results[0], results[1]);
  EXPECT_EQ(results[0], results[2]);
}

TEST(Cli, ManifestRecordsDigestsAndSettings) {
  const auto dir = scratch_dir("cli_manifest");
  const auto panel = (dir / "panel.csv").string();
  auto gen = text::read_file(data_path("mnl.gen"));
  text::write_file((dir / "small.gen").string(), gen + "n_individuals = 5\nt_per_individual = 40\n");
  auto r = run({"simulate", "--spec", spec_path("mnl.spec"), "--params", data_path("mnl_truth.txt"), "--config",
                (dir / "small.gen").string(), "--out", panel});
  ASSERT_EQ(r.code, 0) << r.err;
  text::write_file((dir / "est.cfg").string(), "max_iterations = 3\ngtol = 1e-4\n");
  r = run({"estimate", "--spec", spec_path("mnl.spec"), "--data", panel, "--out", (dir / "fit").string(), "--config",
           (dir / "est.cfg").string(), "--gtol", "1e-3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = nlohmann::json::parse(slurp(dir / "fit" / "manifest.json"));
  EXPECT_EQ(m["command"], "estimate");
  EXPECT_EQ(m["settings"]["max_iterations"]["source"], "config");
  EXPECT_EQ(m["settings"]["max_iterations"]["value"], 3);
  EXPECT_EQ(m["settings"]["gtol"]["source"], "flag");
  EXPECT_EQ(m["settings"]["threads"]["source"], "default");
  ASSERT_FALSE(m["outputs"].empty());
  for (const auto& o : m["outputs"]) EXPECT_EQ(o["sha256"], cli::sha256_file(o["path"])) << o["path"];
  for (const auto& i : m["inputs"]) EXPECT_EQ(i["sha256"], cli::sha256_file(i["path"])) << i["path"];
  EXPECT_NE(slurp(dir / "fit" / "report.txt").find("Converged: no"), std::string::npos);

  text::write_file((dir / "bad.cfg").string(), "max_iteration = 3\n");
  r = run({"estimate", "--spec", spec_path("mnl.spec"), "--data", panel, "--out", (dir / "fit2").string(), "--config",
           (dir / "bad.cfg").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("max_iteration"), std::string::npos);

  r = run({"report", "--spec", spec_path("mnl.spec"), "--results", (dir / "fit" / "results.txt").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("[utility accelerate]"), std::string::npos);
}

TEST(Cli, Sha256KnownVectors) {
  EXPECT_EQ(cli::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Cli, VideoPipelineWithMockTransport) {
  const auto dir = scratch_dir("cli_video");
  std::string index = "path,timestamp,lat,lon\n";
  for (int i = 0; i < 20; ++i) {
    const auto name = "f" + std::to_string(i) + ".jpg";
    text::write_file((dir / name).string(), std::string("\xff\xd8jpeg") + std::to_string(i));
    index += name + "," + std::to_string(i) + "," + std::to_string(-33.45 + 1e-4 * i) + "," +
             std::to_string(-70.65 + 1e-4 * i) + "\n";
  }
  text::write_file((dir / "frames.csv").string(), index);
  const auto table = (dir / "lvd.csv").string();
  auto r = run({"describe-video", "--frames", (dir / "frames.csv").string(), "--individual", "p1", "--out", table,
                "--mock", data_path("lvd/valid"), "--frames-per-window", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto recs = lvd::records_from_csv(slurp(table));
  ASSERT_EQ(recs.size(), 4u);
  for (std::size_t k = 0; k < recs.size(); ++k) {
    EXPECT_EQ(recs[k].individual_id, "p1");
    EXPECT_EQ(recs[k].window, static_cast<long long>(k));
    EXPECT_EQ(recs[k].sequence_id, "p1_w" + std::to_string(k));
    ASSERT_TRUE(recs[k].lat);
    EXPECT_NEAR(*recs[k].lat, -33.45 + 1e-4 * (5.0 * k + 2.0), 1e-9);
  }
  // Same inputs give the same table.
  const auto first = slurp(table);
  r = run({"describe-video", "--frames", (dir / "frames.csv").string(), "--individual", "p1", "--out", table,
           "--mock", data_path("lvd/valid"), "--frames-per-window", "3", "--max-in-flight", "1"});
  EXPECT_EQ(slurp(table), first);

  // Speeds sampled once per second for the same 20 s.
  std::string speeds = "individual_id,timestamp,speed\n";
  for (int i = 0; i < 20; ++i) speeds += "p1," + std::to_string(i) + "," + std::to_string(10 + (i % 7)) + "\n";
  text::write_file((dir / "speed.csv").string(), speeds);
  r = run({"impute", "--speed", (dir / "speed.csv").string(), "--out", (dir / "windows.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;

  std::vector<ObservationRow> rows;
  for (long long t = 0; t < 4; ++t) {
    ObservationRow row;
    row.individual_id = "p1";
    row.t = t;
    row.travel_time = static_cast<double>(t + 1);
    row.speed = 12;
    rows.push_back(row);
  }
  write_panel(PanelDataset(rows), (dir / "panel.csv").string());
  r = run({"join", "--panel", (dir / "panel.csv").string(), "--actions", (dir / "windows.csv").string(),
           "--covariates", table, "--out", (dir / "joined.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto joined = load_panel((dir / "joined.csv").string());
  ASSERT_EQ(joined.size(), 4u);
  for (const auto& row : joined.rows()) {
    EXPECT_TRUE(row.action.has_value());
    EXPECT_EQ(row.gpt.count("red_light"), 1u);
  }

  r = run({"heatmap", "--records", table, "--variable", "cloudy", "--cell-size", "10", "--out",
           (dir / "cloudy").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "cloudy.asc"));
  EXPECT_TRUE(std::filesystem::exists(dir / "cloudy.json"));
  r = run({"heatmap", "--records", table, "--variable", "nope", "--out", (dir / "x").string()});
  EXPECT_EQ(r.code, 1);
}
