#include <gtest/gtest.h>

#include <filesystem>

#include "ctlfm/error.hpp"
#include "ctlfm/io.hpp"
#include "ctlfm/pipeline.hpp"
#include "ctlfm/scaling.hpp"

using namespace ctlfm;
namespace fs = std::filesystem;

namespace {

const char* kSmallConfig = R"({
  "simulation": {"blocks": {"sizes": [3, 3], "loading": 0.7}, "mu": 2.0, "b": 1.0, "seed": 3,
                 "t_end": 40.0},
  "delta": 0.01,
  "factors": 2,
  "optimizer": {"restarts": 1, "seed": 5},
  "k": 2
})";

}  // namespace

TEST(Config, ParsesAndEchoes) {
  const PipelineConfig c = parse_pipeline_config(kSmallConfig);
  ASSERT_TRUE(c.simulation.has_value());
  EXPECT_EQ(c.simulation->lambda.rows(), 6);
  EXPECT_EQ(c.factors, 2u);
  EXPECT_EQ(c.restarts, 1);
  const std::string echo = config_to_json(c);
  EXPECT_EQ(config_to_json(parse_pipeline_config(echo)), echo);
}

TEST(Config, OverlappingWindowsNamed) {
  try {
    parse_pipeline_config(R"({"input": "x.json", "windows": [[0, 2], [3, 4], [1.5, 2.5]]})");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string w = e.what();
    EXPECT_NE(w.find("windows[0]"), std::string::npos) << w;
    EXPECT_NE(w.find("windows[2]"), std::string::npos) << w;
  }
}

TEST(Config, FieldDiagnostics) {
  auto message = [](const std::string& text) {
    try {
      parse_pipeline_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message(R"({"input": "x", "delta": -1})").find("config.delta"), std::string::npos);
  EXPECT_NE(message(R"({"input": "x", "factors": 0})").find("config.factors"), std::string::npos);
  EXPECT_NE(message(R"({"input": "x", "bogus": 1})").find("bogus"), std::string::npos);
  EXPECT_NE(message(R"({"delta": 0.1})").find("exactly one"), std::string::npos);
  EXPECT_NE(message("{").find("config"), std::string::npos);
}

TEST(Simulation, SegmentsConcatenate) {
  SimulationConfig sim = parse_simulation_config(
      R"({"blocks": {"sizes": [2, 2]}, "mu": 2.0, "b": 1.0, "segments": [{"duration": 10}, {"duration": 5, "lambda_scale": 0}]})");
  EXPECT_DOUBLE_EQ(sim.t_end(), 15.0);
  const SpikeData a = simulate_recording(sim);
  const SpikeData b = simulate_recording(sim);
  EXPECT_EQ(a, b);
  EXPECT_DOUBLE_EQ(a.t_end(), 15.0);
  EXPECT_GT(a.total_spikes(), 80u);
}

TEST(Pipeline, WritesBundleDeterministically) {
  const fs::path base = fs::temp_directory_path() / "ctlfm_pipeline_test";
  fs::remove_all(base);
  PipelineConfig c = parse_pipeline_config(kSmallConfig);
  c.output_dir = base / "a";
  const PipelineReport ra = run_pipeline(c);
  c.output_dir = base / "b";
  const PipelineReport rb = run_pipeline(c);
  EXPECT_EQ(ra.exit_code, 0);
  ASSERT_EQ(ra.windows.size(), 1u);
  EXPECT_EQ(ra.windows[0].status, "ok");
  for (const char* f : {"params.csv", "loadings.csv", "corr.csv", "corr_masked.csv", "labels.csv",
                        "comembership.csv", "corr.svg", "corr_masked.svg", "comembership.svg", "fit.json"}) {
    const fs::path pa = base / "a" / "window_1" / f;
    ASSERT_TRUE(fs::exists(pa)) << f;
    EXPECT_EQ(read_text(pa), read_text(base / "b" / "window_1" / f)) << f;
  }
  EXPECT_TRUE(fs::exists(ra.manifest));
  // The manifest reproduces the run.
  const PipelineConfig again = parse_pipeline_config(read_text(ra.manifest));
  EXPECT_EQ(config_to_json(again), config_to_json([&] {
              PipelineConfig x = c;
              x.output_dir = base / "a";
              return x;
            }()));
}

TEST(Scaling, ReportsRowsPerSize) {
  ScalingOptions o;
  o.neurons = {4, 8};
  o.bins = 200;
  o.iterations = 2;
  const auto rows = run_scaling(o);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].neurons, 8u);
  EXPECT_GT(rows[0].median_seconds, 0.0);
  EXPECT_NE(rows[0].backend, HessianBackend::automatic);
  const std::string table = format_scaling_table(rows);
  EXPECT_NE(table.find("ratio"), std::string::npos);
  EXPECT_EQ(format_scaling_csv(rows).rfind("q,backend", 0), 0u);
}
