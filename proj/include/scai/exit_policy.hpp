#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "scai/network.hpp"
#include "scai/spectra.hpp"

namespace scai::policy {

inline constexpr double kQMin = 0.001;
inline constexpr double kQTolerance = 1e-6;

class InfeasibleBudget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Geometric exit distribution q_l = z (1-q)^(l-1) q, normalized over L exits.
struct ExitProbabilities {
  std::vector<double> q;
  double z = 1.0;
};

ExitProbabilities exit_probabilities(double q, std::size_t exits);

/// sum_l M q_l C_l.
double expected_cost(std::span<const double> costs, std::size_t batch, double q);

/// Smallest q in [kQMin, 1] whose expected cost fits the budget (the cost
/// falls as q grows), by bisection to kQTolerance. Returns kQMin when even
/// that fits; throws InfeasibleBudget when q = 1 does not.
double solve_budget(std::span<const double> costs, std::size_t batch, double budget);

/// Per-sample confidences at every exit, [sample][exit].
using ConfidenceTable = std::vector<std::vector<double>>;

/// Thresholds theta_1..theta_L. Walking the exits in order, theta_l is set
/// so that round(M * cumsum(q)_l) samples have left by exit l, the most
/// confident remaining ones first (ties broken by sample index). theta_l is
/// 0 when every remaining sample must leave, +inf when none may, and
/// theta_L = 0.
std::vector<double> calibrate_thresholds(const ConfidenceTable& confidence, std::span<const double> q);

/// Everything needed to run one budgeted batch.
struct BudgetPlan {
  double q = 1.0;
  std::vector<double> q_l;
  double z = 1.0;
  std::vector<double> costs;  // static C_l
  std::vector<double> theta;
  double budget = 0.0;        // whole batch
  std::size_t batch = 0;      // M
};

/// Confidence of every exit on every sample, no early exiting.
ConfidenceTable exit_confidences(const ScaiModel& model, const data::Dataset& dataset);

/// Solves q for `budget` over a batch of `batch` samples and calibrates the
/// thresholds on the validation confidences.
BudgetPlan plan_budget(const ScaiModel& model, const ConfidenceTable& validation, std::size_t batch, double budget);

struct BatchResult {
  std::vector<ExitOutcome> outcomes;
  std::uint64_t total_flops = 0;
};

/// Each sample runs exit by exit and leaves at the first exit whose
/// confidence reaches its threshold.
BatchResult budgeted_batch_predict(const ScaiModel& model, const data::Dataset& batch, std::span<const double> theta);

/// Deepest exit whose static cumulative cost fits the budget. With no exit
/// affordable, exit 1 is returned and flagged over budget.
ExitOutcome anytime_predict(const ScaiModel& model, std::span<const double> curve, double budget);

/// Exit anytime_predict would choose for a budget, from the static costs.
std::size_t anytime_exit(std::span<const double> costs, double budget);

struct CurvePoint {
  std::string mode;
  double budget = 0.0;  // per sample
  double realized_flops_mean = 0.0;
  double accuracy = 0.0;
  std::vector<std::size_t> exit_histogram;
};

/// One point per budget in `budgets` (per-sample units; budgeted mode plans
/// for a total of budget * |test|). `validation` is only used by the
/// budgeted mode. Budgets that cannot be met are skipped.
std::vector<CurvePoint> accuracy_vs_budget_curve(const ScaiModel& model, const data::Dataset& validation,
                                                 const data::Dataset& test, const std::string& mode,
                                                 std::span<const double> budgets);

/// mode,budget,realized_flops_mean,accuracy,exit_histogram (histogram as
/// counts joined by ';').
void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& points);

/// exit_index,theta rows.
void save_thresholds(const std::vector<double>& theta, const std::filesystem::path& path);
std::vector<double> load_thresholds(const std::filesystem::path& path);

}  // namespace scai::policy
