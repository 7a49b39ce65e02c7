// shipcps: validate, run and report ship testbed scenarios.
//
// Exit status: 0 success (a run that detected a plant violation still
// succeeds), 1 validation error, 2 runtime error.

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "shipcps/scenario/testbed.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

void print(const std::vector<shipcps::scenario::Diagnostic>& diagnostics) {
  for (const auto& d : diagnostics) std::cerr << d.str() << '\n';
}

int do_validate(const std::string& file) {
  const auto diagnostics = shipcps::scenario::validate_file(file);
  if (!diagnostics.empty()) {
    print(diagnostics);
    return kInvalid;
  }
  std::cout << file << ": ok\n";
  return kOk;
}

int do_run(const std::string& file, const shipcps::scenario::RunOptions& options) {
  using namespace shipcps::scenario;
  ScenarioConfig config;
  try {
    config = load_scenario(file);
    if (auto d = cross_check(config); !d.empty()) throw ValidationError(std::move(d));
  } catch (const ValidationError& e) {
    print(e.diagnostics());
    return kInvalid;
  }
  try {
    const auto result = run_scenario(std::move(config), options);
    const auto& s = result.summary;
    std::cout << s["scenario"].get<std::string>() << ": " << result.out_dir.string() << '\n';
    std::cout << "  trace hash " << s["trace_hash"].get<std::string>() << '\n';
    if (s["operability"].is_null()) {
      std::cout << "  operability n/a\n";
    } else {
      std::cout << "  operability " << s["operability"].get<double>() << '\n';
    }
    if (result.violation) {
      std::cout << "  violation detected, total " << s["violation"]["total_s"].get<double>() << " s\n";
    }
    return kOk;
  } catch (const ValidationError& e) {
    print(e.diagnostics());
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

int do_report(const std::string& dir, const std::vector<std::string>& columns) {
  try {
    shipcps::scenario::report(dir, std::cout, columns);
    return kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ship power and network testbed scenarios"};
  app.require_subcommand(1);

  std::string file;
  auto* validate = app.add_subcommand("validate", "Check a scenario file");
  validate->add_option("file", file, "Scenario file")->required();

  auto* run = app.add_subcommand("run", "Run a scenario and write its artifacts");
  run->add_option("file", file, "Scenario file")->required();
  std::uint64_t seed = 0;
  std::string out_dir;
  double until = 0.0;
  auto* seed_opt = run->add_option("--seed", seed, "Override the scenario seed");
  auto* out_opt = run->add_option("--out", out_dir,
                                  std::string("Output directory (default: $") + shipcps::scenario::kOutDirEnv +
                                      "/<name> or runs/<name>)");
  auto* until_opt = run->add_option("--until", until, "Stop after this many simulated seconds");

  auto* rep = app.add_subcommand("report", "Summarize a run directory");
  std::string dir;
  std::vector<std::string> columns;
  rep->add_option("dir", dir, "Run output directory")->required();
  rep->add_option("--columns", columns, "Print these timeseries columns as CSV instead")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInvalid;
  }

  if (*validate) return do_validate(file);
  if (*run) {
    shipcps::scenario::RunOptions options;
    if (*seed_opt) options.seed = seed;
    if (*out_opt) options.out_dir = out_dir;
    if (*until_opt) options.until_s = until;
    return do_run(file, options);
  }
  return do_report(dir, columns);
}
