#include "scai/exit_policy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace scai::policy {

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, end);
}

}  // namespace

ExitProbabilities exit_probabilities(double q, std::size_t exits) {
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("exit_probabilities: q must lie in (0, 1]");
  if (exits == 0) throw std::invalid_argument("exit_probabilities: need at least one exit");
  ExitProbabilities out;
  out.q.resize(exits);
  double w = q, total = 0.0;
  for (std::size_t l = 0; l < exits; ++l) {
    out.q[l] = w;
    total += w;
    w *= 1.0 - q;
  }
  out.z = 1.0 / total;
  for (double& v : out.q) v /= total;
  return out;
}

double expected_cost(std::span<const double> costs, std::size_t batch, double q) {
  const auto p = exit_probabilities(q, costs.size());
  double c = 0.0;
  for (std::size_t l = 0; l < costs.size(); ++l) c += p.q[l] * costs[l];
  return static_cast<double>(batch) * c;
}

double solve_budget(std::span<const double> costs, std::size_t batch, double budget) {
  if (costs.empty()) throw std::invalid_argument("solve_budget: empty cost table");
  if (batch == 0) throw std::invalid_argument("solve_budget: empty batch");
  if (expected_cost(costs, batch, 1.0) > budget) {
    throw InfeasibleBudget("budget " + format_double(budget) + " is below the all-exit-1 cost " +
                           format_double(expected_cost(costs, batch, 1.0)));
  }
  if (expected_cost(costs, batch, kQMin) <= budget) return kQMin;
  double lo = kQMin, hi = 1.0;  // cost(lo) > budget >= cost(hi)
  while (hi - lo > kQTolerance) {
    const double mid = 0.5 * (lo + hi);
    if (expected_cost(costs, batch, mid) <= budget) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

std::vector<double> calibrate_thresholds(const ConfidenceTable& confidence, std::span<const double> q) {
  const std::size_t exits = q.size();
  const std::size_t n = confidence.size();
  if (exits == 0) throw std::invalid_argument("calibrate_thresholds: no exits");
  if (n < exits) {
    throw std::invalid_argument("calibrate_thresholds: " + std::to_string(n) + " validation samples for " +
                                std::to_string(exits) + " exits");
  }
  for (const auto& row : confidence) {
    if (row.size() != exits) throw std::invalid_argument("calibrate_thresholds: confidence rows must cover every exit");
  }

  std::vector<double> theta(exits, 0.0);
  std::vector<std::size_t> remaining(n);
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  std::size_t gone = 0;
  double cum = 0.0;
  for (std::size_t l = 0; l + 1 < exits; ++l) {
    cum += q[l];
    const auto target = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(cum * static_cast<double>(n))));
    const std::size_t k = target > gone ? target - gone : 0;
    if (k == 0) {
      theta[l] = std::numeric_limits<double>::infinity();
      continue;
    }
    if (k >= remaining.size()) {
      theta[l] = 0.0;
      gone += remaining.size();
      remaining.clear();
      continue;
    }
    std::stable_sort(remaining.begin(), remaining.end(),
                     [&](std::size_t a, std::size_t b) { return confidence[a][l] > confidence[b][l]; });
    theta[l] = confidence[remaining[k - 1]][l];
    remaining.erase(remaining.begin(), remaining.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(remaining.begin(), remaining.end());
    gone += k;
  }
  theta[exits - 1] = 0.0;
  return theta;
}

ConfidenceTable exit_confidences(const ScaiModel& model, const data::Dataset& dataset) {
  Network net(model, false);
  ConfidenceTable table;
  table.reserve(dataset.size());
  for (const auto& c : dataset.curves) {
    auto stages = net.run_all(c.values);
    std::vector<double> row;
    for (const auto& st : stages) {
      const auto p = st.probs.data();
      row.push_back(*std::max_element(p.begin(), p.end()));
    }
    table.push_back(std::move(row));
  }
  return table;
}

BudgetPlan plan_budget(const ScaiModel& model, const ConfidenceTable& validation, std::size_t batch, double budget) {
  BudgetPlan plan;
  for (auto c : model.static_costs()) plan.costs.push_back(static_cast<double>(c));
  plan.batch = batch;
  plan.budget = budget;
  plan.q = solve_budget(plan.costs, batch, budget);
  const auto p = exit_probabilities(plan.q, plan.costs.size());
  plan.q_l = p.q;
  plan.z = p.z;
  plan.theta = calibrate_thresholds(validation, plan.q_l);
  return plan;
}

BatchResult budgeted_batch_predict(const ScaiModel& model, const data::Dataset& batch, std::span<const double> theta) {
  if (theta.size() != model.exits()) {
    throw std::invalid_argument("budgeted_batch_predict: " + std::to_string(theta.size()) + " thresholds for " +
                                std::to_string(model.exits()) + " exits");
  }
  Network net(model, false);
  BatchResult res;
  res.outcomes.reserve(batch.size());
  for (const auto& c : batch.curves) {
    Tensor x = curve_tensor(c.values);
    std::uint64_t flops = 0;
    std::vector<pa::HaltingTrace> traces;
    for (std::size_t l = 1; l <= model.exits(); ++l) {
      auto st = net.run_stage(l, x);
      flops += st.macs;
      if (model.config().pa_enabled) traces.push_back(std::move(st.trace));
      ExitOutcome o = make_outcome(l, st.probs, flops);
      if (o.confidence >= theta[l - 1] || l == model.exits()) {
        o.traces = std::move(traces);
        res.total_flops += flops;
        res.outcomes.push_back(std::move(o));
        break;
      }
      x = st.features;
    }
  }
  return res;
}

std::size_t anytime_exit(std::span<const double> costs, double budget) {
  std::size_t exit = 0;
  for (std::size_t l = 0; l < costs.size(); ++l) {
    if (costs[l] <= budget) exit = l + 1;
  }
  return exit;
}

ExitOutcome anytime_predict(const ScaiModel& model, std::span<const double> curve, double budget) {
  if (!(budget > 0.0)) throw std::invalid_argument("anytime_predict: budget must be positive");
  std::vector<double> costs;
  for (auto c : model.static_costs()) costs.push_back(static_cast<double>(c));
  const std::size_t exit = anytime_exit(costs, budget);
  ExitOutcome o = forward_to_exit(model, curve, exit == 0 ? 1 : exit);
  o.over_budget = exit == 0;
  return o;
}

std::vector<CurvePoint> accuracy_vs_budget_curve(const ScaiModel& model, const data::Dataset& validation,
                                                 const data::Dataset& test, const std::string& mode,
                                                 std::span<const double> budgets) {
  if (mode != "anytime" && mode != "budgeted") {
    throw std::invalid_argument("unknown policy mode '" + mode + "' (expected anytime or budgeted)");
  }
  std::vector<CurvePoint> points;
  if (budgets.empty() || test.empty()) return points;
  ConfidenceTable valid_conf;
  if (mode == "budgeted") valid_conf = exit_confidences(model, validation);

  for (double b : budgets) {
    std::vector<ExitOutcome> outcomes;
    if (mode == "anytime") {
      for (const auto& c : test.curves) outcomes.push_back(anytime_predict(model, c.values, b));
    } else {
      BudgetPlan plan;
      try {
        plan = plan_budget(model, valid_conf, test.size(), b * static_cast<double>(test.size()));
      } catch (const InfeasibleBudget&) {
        continue;
      }
      outcomes = budgeted_batch_predict(model, test, plan.theta).outcomes;
    }
    CurvePoint pt;
    pt.mode = mode;
    pt.budget = b;
    pt.exit_histogram.assign(model.exits(), 0);
    double flops = 0.0, correct = 0.0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      flops += static_cast<double>(outcomes[i].flops_used);
      correct += outcomes[i].predicted == test.curves[i].label ? 1.0 : 0.0;
      ++pt.exit_histogram[outcomes[i].exit_index - 1];
    }
    pt.realized_flops_mean = flops / static_cast<double>(outcomes.size());
    pt.accuracy = correct / static_cast<double>(outcomes.size());
    points.push_back(std::move(pt));
  }
  return points;
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& points) {
  out << "mode,budget,realized_flops_mean,accuracy,exit_histogram\n";
  for (const auto& p : points) {
    out << p.mode << ',' << format_double(p.budget) << ',' << format_double(p.realized_flops_mean) << ','
        << format_double(p.accuracy) << ',';
    for (std::size_t l = 0; l < p.exit_histogram.size(); ++l) out << (l ? ";" : "") << p.exit_histogram[l];
    out << '\n';
  }
}

void save_thresholds(const std::vector<double>& theta, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "exit_index,theta\n";
  for (std::size_t l = 0; l < theta.size(); ++l) out << (l + 1) << ',' << format_double(theta[l]) << '\n';
}

std::vector<double> load_thresholds(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || line.rfind("exit_index,theta", 0) != 0) {
    throw std::runtime_error(path.string() + ":1: expected header exit_index,theta");
  }
  std::vector<double> theta;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    std::size_t index = 0;
    double value = 0.0;
    const char* b = line.data();
    const char* e = line.data() + line.size();
    bool ok = comma != std::string::npos;
    if (ok) {
      auto r1 = std::from_chars(b, b + comma, index);
      auto r2 = std::from_chars(b + comma + 1, e, value);
      ok = r1.ec == std::errc() && r1.ptr == b + comma && r2.ec == std::errc() && r2.ptr == e;
    }
    if (!ok || index != theta.size() + 1) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad threshold row '" + line + "'");
    }
    theta.push_back(value);
  }
  return theta;
}

}  // namespace scai::policy
