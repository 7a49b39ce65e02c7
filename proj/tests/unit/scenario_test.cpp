#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "shipcps/scenario/config.hpp"
#include "shipcps/scenario/testbed.hpp"

using namespace shipcps;
using namespace shipcps::scenario;

namespace {

const std::string kHeader = "schema_version: 1\nname: t\nduration_s: 60\n";

std::vector<Diagnostic> diagnostics_of(const std::string& text) {
  try {
    const auto config = parse_scenario(text, "t.yaml");
    return cross_check(config);
  } catch (const ValidationError& e) {
    return e.diagnostics();
  }
}

bool mentions(const std::vector<Diagnostic>& ds, const std::string& needle) {
  for (const auto& d : ds) {
    if (d.message.find(needle) != std::string::npos) return true;
  }
  return false;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("shipcps_scenario_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST(ScenarioParse, MinimalFileTakesDefaults) {
  const auto c = parse_scenario(kHeader, "t.yaml");
  EXPECT_EQ(c.name, "t");
  EXPECT_EQ(c.seed, 1u);
  EXPECT_DOUBLE_EQ(c.duration_s, 60.0);
  EXPECT_TRUE(c.faults.empty());
  EXPECT_TRUE(cross_check(c).empty());
}

TEST(ScenarioParse, ReversedWindowReportsLineAndColumn) {
  const auto ds = diagnostics_of(kHeader +
                                 "attacks:\n"
                                 "  - {kind: dos, target: controller, window: [370, 295]}\n");
  ASSERT_FALSE(ds.empty());
  EXPECT_TRUE(mentions(ds, "window end before start"));
  EXPECT_EQ(ds.front().where.line, 5);
  EXPECT_NE(ds.front().str().find("t.yaml:5:"), std::string::npos);
}

TEST(ScenarioParse, UnknownKeyIsRejected) {
  const auto ds = diagnostics_of(kHeader + "controler:\n  period_s: 1\n");
  EXPECT_TRUE(mentions(ds, "unknown key 'controler'"));
}

TEST(ScenarioParse, UnsupportedSchemaVersion) {
  EXPECT_TRUE(mentions(diagnostics_of("schema_version: 2\nname: t\n"), "unsupported schema_version"));
  EXPECT_TRUE(mentions(diagnostics_of("name: t\n"), "missing 'schema_version'"));
}

TEST(ScenarioParse, UnknownLinkAndDevice) {
  auto ds = diagnostics_of(kHeader + "faults:\n  - {kind: loss, links: [\"uplink:zone9\"], probability: 0.1, window: [1, 2]}\n");
  EXPECT_TRUE(mentions(ds, "unknown link"));
  ds = diagnostics_of(kHeader + "attacks:\n  - {kind: mitm, victim: PMM9, window: [1, 2]}\n");
  EXPECT_TRUE(mentions(ds, "unknown device"));
}

TEST(ScenarioParse, PhaseMustEndInsideRun) {
  const auto ds = diagnostics_of(kHeader + "phases:\n  - {name: late, window: [10, 90]}\n");
  EXPECT_TRUE(mentions(ds, "ends after the run"));
}

TEST(ScenarioParse, ProfileAndTripsReachPlant) {
  const auto c = parse_scenario(kHeader +
                                    "plant:\n"
                                    "  propulsion_profile: [[0, 0.5], [10, 1.0]]\n"
                                    "  trips:\n"
                                    "    - {generator: ATG1, time_s: 30, available: false}\n"
                                    "    - {generator: MTG1, time_s: 20, available: false}\n",
                                "t.yaml");
  const auto plant = build_plant_config(c);
  for (const auto& g : plant.generators) {
    if (g.id == "MTG1" || g.id == "ATG1") {
      ASSERT_EQ(g.trip_events.size(), 1u) << g.id;
      EXPECT_DOUBLE_EQ(g.trip_events[0].time, g.id == "MTG1" ? 20.0 : 30.0);
    } else {
      EXPECT_TRUE(g.trip_events.empty()) << g.id;
    }
  }
  for (const auto& l : plant.loads) {
    if (l.category != plant::LoadCategory::kPropulsion) continue;
    EXPECT_DOUBLE_EQ(l.demand.at(0.0), 0.5 * l.rated_mw);
    EXPECT_DOUBLE_EQ(l.demand.at(20.0), l.rated_mw);
  }
}

TEST(ScenarioFiles, BundledScenariosValidate) {
  std::size_t n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(SHIPCPS_SCENARIO_DIR)) {
    if (entry.path().extension() != ".yaml") continue;
    ++n;
    const auto ds = validate_file(entry.path().string());
    for (const auto& d : ds) ADD_FAILURE() << d.str();
  }
  EXPECT_GE(n, 8u);
}

TEST(ScenarioFiles, MissingFileIsADiagnostic) {
  EXPECT_FALSE(validate_file("/nonexistent/scenario.yaml").empty());
}

namespace {

const std::string kLossy = kHeader +
                           "mode: asynchronous\n"
                           "faults:\n"
                           "  - {kind: loss, links: [\"access:PMM1\"], probability: 0.2, window: [5, 40]}\n";

std::string hash_of(const std::string& text, std::uint64_t seed) {
  auto config = parse_scenario(text, "t.yaml");
  config.seed = seed;
  Testbed bed(std::move(config));
  bed.run(30.0);
  return summarize(bed)["trace_hash"].get<std::string>();
}

}  // namespace

TEST(ScenarioRun, SameSeedSameHash) {
  EXPECT_EQ(hash_of(kLossy, 7), hash_of(kLossy, 7));
}

TEST(ScenarioRun, SeedChangesHashOfStochasticRun) {
  EXPECT_NE(hash_of(kLossy, 7), hash_of(kLossy, 8));
}

TEST(ScenarioRun, ArtifactsAndReport) {
  const auto dir = temp_dir("artifacts");
  RunOptions options;
  options.out_dir = dir.string();
  const auto result = run_scenario(parse_scenario(kLossy, "t.yaml"), options);
  for (const char* f : {"trace.jsonl", "timeseries.csv", "decisions.jsonl", "summary.json", "manifest.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    EXPECT_NE(entry.path().extension(), ".tmp");
  }
  EXPECT_DOUBLE_EQ(result.summary["operability"].get<double>(), 1.0);

  std::ostringstream out;
  report(dir, out);
  EXPECT_NE(out.str().find("O = 1.0000"), std::string::npos) << out.str();

  std::ostringstream cols;
  report(dir, cols, {"t", "served_mw"});
  std::istringstream lines(cols.str());
  std::string first;
  std::getline(lines, first);
  EXPECT_EQ(first, "t,served_mw");
}

TEST(ScenarioRun, SummaryHasNoWallClock) {
  const auto dir = temp_dir("wall");
  RunOptions options;
  options.out_dir = dir.string();
  run_scenario(parse_scenario(kLossy, "t.yaml"), options);
  std::ifstream in(dir / "summary.json");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(text.find("wall"), std::string::npos);
  std::ifstream manifest(dir / "manifest.json");
  const auto m = nlohmann::json::parse(manifest);
  EXPECT_TRUE(m.contains("wall_seconds"));
}

TEST(ScenarioRun, ReportOnEmptyDirectoryThrows) {
  const auto dir = temp_dir("empty");
  std::filesystem::create_directories(dir);
  std::ostringstream out;
  EXPECT_THROW(report(dir, out), std::runtime_error);
}

TEST(ScenarioRun, UntilStopsEarly) {
  Testbed bed(parse_scenario(kLossy, "t.yaml"));
  bed.run(10.0);
  EXPECT_DOUBLE_EQ(bed.ran_until(), 10.0);
  EXPECT_LE(bed.plant_log().back().t, 10.0);
}
