#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nlw/acceptance.hpp"
#include "nlw/errors.hpp"
#include "nlw/experiment.hpp"
#include "nlw/grid.hpp"
#include "nlw/report.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitRuntime = 2;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw nlw::ConfigError({"cannot read experiment file " + path});
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int report_config_error(const nlw::ConfigError& e) {
  std::cerr << "invalid configuration:\n";
  for (const auto& p : e.problems()) std::cerr << "  " << p << "\n";
  return kExitInvalid;
}

int cmd_run(const std::string& file, std::optional<std::uint64_t> seed, const std::string& out) {
  nlw::ExperimentConfig config;
  try {
    config = nlw::parse_experiment(file);
    if (seed) nlw::apply_seed(config, *seed);
  } catch (const nlw::ConfigError& e) {
    return report_config_error(e);
  }
  try {
    const auto result = nlw::run_experiment(config, out);
    const auto& rows = result.report.rows;
    std::cout << "wrote " << (std::filesystem::path(out) / "report.csv").string() << " (" << rows.size()
              << " epochs";
    if (!rows.empty()) std::cout << ", final test_acc " << nlw::format_fixed(rows.back().test_acc);
    std::cout << ")\n";
    if (config.run.networks == nlw::NetworkMode::dual && !rows.empty()) {
      std::cout << "note: dual networks; test_acc averages both softmaxes (first network alone: "
                << nlw::format_fixed(rows.back().test_acc_first) << ")\n";
    }
  } catch (const nlw::ConfigError& e) {
    return report_config_error(e);
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) parts.push_back(item);
  return parts;
}

int cmd_grid(const std::string& file, const std::string& presets, const std::string& ratios,
             const std::string& seeds, int parallel, const std::string& out) {
  nlw::GridSpec spec;
  try {
    spec.base_text = read_text(file);
    spec.presets = split(presets);
    for (const auto& r : split(ratios)) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(r, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != r.size()) throw nlw::ConfigError({"bad noise ratio '" + r + "'"});
      spec.ratios.push_back(v);
    }
    spec.seeds = nlw::parse_seed_list(seeds);
  } catch (const nlw::ConfigError& e) {
    return report_config_error(e);
  } catch (const nlw::ArgumentError& e) {
    std::cerr << "invalid arguments: " << e.what() << "\n";
    return kExitInvalid;
  }
  spec.parallel = parallel;
  spec.out = out;
  try {
    const auto result = nlw::run_grid(spec);
    int failed = 0;
    for (const auto& c : result.cells) {
      if (!c.ok) {
        ++failed;
        std::cerr << c.run_id << " failed: " << c.error << "\n";
      }
    }
    std::cout << "wrote " << (spec.out / "summary.csv").string() << " (" << result.cells.size() << " runs, "
              << failed << " failed)\n";
    return failed == 0 ? kExitOk : kExitRuntime;
  } catch (const nlw::ConfigError& e) {
    return report_config_error(e);
  } catch (const std::exception& e) {
    std::cerr << "grid failed: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int cmd_verify(const std::vector<int>& only) {
  nlw::AcceptanceOptions options;
  options.only = only;
  const auto results = nlw::run_acceptance(options, std::cout);
  int failed = 0;
  for (const auto& r : results) failed += !r.pass;
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
  return failed == 0 ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy-label learning workbench"};
  app.require_subcommand(1);

  std::string run_file, run_out = "out";
  std::optional<std::uint64_t> run_seed;
  auto* run = app.add_subcommand("run", "Train one experiment and write report.csv");
  run->add_option("experiment", run_file, "Experiment file")->required();
  run->add_option("--seed", run_seed, "Override engine and noise seeds");
  run->add_option("--out", run_out, "Output directory")->capture_default_str();

  std::string grid_file, grid_presets, grid_ratios, grid_seeds = "0", grid_out = "out";
  int grid_parallel = 1;
  auto* grid = app.add_subcommand("grid", "Run presets x noise ratios x seeds and write summary.csv");
  grid->add_option("experiment", grid_file, "Base experiment file")->required();
  grid->add_option("--presets", grid_presets, "Comma-separated presets")->required();
  grid->add_option("--ratios", grid_ratios, "Comma-separated noise ratios")->required();
  grid->add_option("--seeds", grid_seeds, "Seed range a..b or list a,b,c")->capture_default_str();
  grid->add_option("--parallel", grid_parallel, "Cells run concurrently")->check(CLI::PositiveNumber)
      ->capture_default_str();
  grid->add_option("--out", grid_out, "Output directory")->capture_default_str();

  std::vector<int> verify_only;
  auto* verify = app.add_subcommand("verify", "Run the acceptance suite");
  verify->add_option("--only", verify_only, "Criterion ids to run")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  if (*run) return cmd_run(run_file, run_seed, run_out);
  if (*grid) return cmd_grid(grid_file, grid_presets, grid_ratios, grid_seeds, grid_parallel, grid_out);
  if (*verify) return cmd_verify(verify_only);
  return kExitInvalid;
}
