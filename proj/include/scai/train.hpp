#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "scai/config.hpp"
#include "scai/network.hpp"
#include "scai/spectra.hpp"
#include "scai/tensor.hpp"

namespace scai::train {

/// Per-exit supervision for one sample. `probs` holds y_1..y_L.
///
/// With distillation every intermediate exit is pulled towards a detached
/// teacher distribution (the last exit, or exit l+1 with Teacher::kNext)
/// and only the last exit sees the label. Without distillation every exit
/// gets cross-entropy against the label.
Tensor task_loss(const std::vector<Tensor>& probs, std::size_t label, const ScaiConfig& config);

/// task + gamma * sum(rho). Undefined entries in `rho` are skipped.
Tensor total_loss(const Tensor& task, const std::vector<Tensor>& rho, double gamma);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t exit = 0;   // 1-based
  std::string split;      // "train" or "valid"
  double accuracy = 0.0;
  double loss = 0.0;      // mean cross-entropy of this exit against the labels
};

struct TrainReport {
  std::vector<EpochRecord> records;
  std::size_t best_epoch = 0;      // restored parameters
  std::size_t improved_epoch = 0;  // last strict gain in final-exit accuracy
  double best_valid_accuracy = 0.0;
  std::size_t stop_epoch = 0;
  std::uint64_t seed = 0;
  double seconds = 0.0;

  /// Record for (epoch, exit, split), or nullptr.
  const EpochRecord* find(std::size_t epoch, std::size_t exit, const std::string& split) const;
  void write_csv(std::ostream& out) const;
  void save_csv(const std::filesystem::path& path) const;
};

struct Evaluation {
  std::vector<double> accuracy;  // per exit
  std::vector<double> loss;      // per exit mean cross-entropy
  std::vector<double> mean_rho;  // per block, empty without PA
  double mean_flops = 0.0;       // realized multiply-accumulates through the last exit
};

Evaluation evaluate(const ScaiModel& model, const data::Dataset& dataset);

struct TrainOptions {
  /// Called once per finished epoch with the records of that epoch.
  std::function<void(const TrainReport&)> on_epoch;
  /// When set, the best-validation parameters are saved here as they improve.
  std::optional<std::filesystem::path> checkpoint;
};

/// Adam over shuffled mini-batches with early stopping on final-exit
/// validation accuracy: training stops `patience` epochs after the last
/// strict improvement. The model ends holding the best-validation
/// parameters, accuracy ties going to the lower final-exit validation loss.
/// Deterministic in model.config().seed.
TrainReport train(ScaiModel& model, const data::Dataset& train_set, const data::Dataset& valid_set,
                  const TrainOptions& options = {});

/// Grid of config overrides: {"key": [v1, v2, ...], ...}. The cartesian
/// product is enumerated in key order, last key fastest.
std::vector<nlohmann::json> expand_grid(const nlohmann::json& grid);

struct SweepRow {
  nlohmann::json overrides;
  ScaiConfig config;
  TrainReport report;
  Evaluation test;
};

/// Trains one model per grid point from `base` (same seed for all) and
/// evaluates it on `test_set`.
std::vector<SweepRow> hyper_sweep(const ScaiConfig& base, const nlohmann::json& grid, const data::Dataset& train_set,
                                  const data::Dataset& valid_set, const data::Dataset& test_set);

/// One row per configuration: the override values, best epoch, mean
/// realized FLOPs and per-exit test accuracy.
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace scai::train
