#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "scai/config.hpp"
#include "scai/network.hpp"
#include "scai/spectra.hpp"

namespace scai::cli {

/// Bad or missing user input; the CLI maps it to exit status 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::filesystem::path out_dir = "out";
  std::optional<std::filesystem::path> dataset;      // curve CSV; generated from the seed when absent
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> config_file;  // model/training JSON
  nlohmann::json overrides = nlohmann::json::object();
  std::optional<std::string> variant;                // scai, scai+, scai+nokd
  std::uint64_t seed = 1;                            // dataset, split and initialization
  std::size_t per_class = 100;

  std::optional<std::vector<double>> budgets;  // per-sample MACs; default grid when absent
  double q = 0.5;                              // exit distribution for simulate
  std::optional<std::filesystem::path> thresholds;
  std::optional<std::filesystem::path> scenario;
  std::optional<std::filesystem::path> grid;
};

/// Model/training settings after the config file, overrides, variant and seed.
ScaiConfig resolve_model_config(const RunConfig& run);

/// The dataset named by the run, or the default synthetic one.
data::Dataset resolve_dataset(const RunConfig& run, std::size_t width);

/// Each command writes into run.out_dir and returns the files it wrote.
std::vector<std::filesystem::path> cmd_gen(const RunConfig& run);
std::vector<std::filesystem::path> cmd_train(const RunConfig& run);
std::vector<std::filesystem::path> cmd_eval(const RunConfig& run);
std::vector<std::filesystem::path> cmd_curves(const RunConfig& run);
std::vector<std::filesystem::path> cmd_heatmap(const RunConfig& run);
std::vector<std::filesystem::path> cmd_simulate(const RunConfig& run);
std::vector<std::filesystem::path> cmd_sweep(const RunConfig& run);

/// Per-sample budgets from 5% to 100% of the full static cost.
std::vector<double> default_budget_grid(const ScaiModel& model);

}  // namespace scai::cli
