#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "scai/exit_policy.hpp"
#include "scai/train.hpp"

using namespace scai;
using namespace scai::policy;

namespace {

// Per-exit median confidence of an (untrained) model on a dataset.
std::vector<double> median_thresholds(const ScaiModel& model, const data::Dataset& ds) {
  const auto table = exit_confidences(model, ds);
  std::vector<double> theta;
  for (std::size_t l = 0; l < model.exits(); ++l) {
    std::vector<double> col;
    for (const auto& row : table) col.push_back(row[l]);
    std::nth_element(col.begin(), col.begin() + static_cast<long>(col.size() / 2), col.end());
    theta.push_back(col[col.size() / 2]);
  }
  theta.back() = 0.0;
  return theta;
}

double brute_force_q(std::span<const double> costs, std::size_t batch, double budget, double& step) {
  const int grid = 10000;
  step = (1.0 - kQMin) / grid;
  for (int i = 0; i <= grid; ++i) {
    const double q = kQMin + step * i;
    if (expected_cost(costs, batch, q) <= budget) return q;
  }
  return -1.0;
}

}  // namespace

TEST_CASE("exit probabilities") {
  const auto all_first = exit_probabilities(1.0, 4);
  CHECK(all_first.q == std::vector<double>{1.0, 0.0, 0.0, 0.0});
  const auto half = exit_probabilities(0.5, 4);
  CHECK(half.q == std::vector<double>{8.0 / 15.0, 4.0 / 15.0, 2.0 / 15.0, 1.0 / 15.0});
  CHECK(half.z == doctest::Approx(16.0 / 15.0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1e-3, 1.0);
  for (int i = 0; i < 200; ++i) {
    const auto p = exit_probabilities(u(rng), 1 + i % 7);
    double s = 0.0;
    for (double v : p.q) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK_THROWS_AS(exit_probabilities(0.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(exit_probabilities(0.5, 0), std::invalid_argument);
}

TEST_CASE("budget solver examples") {
  const std::vector<double> c{1, 2, 3, 4};
  CHECK(solve_budget(c, 100, 400.0) == kQMin);
  CHECK(solve_budget(c, 100, 1e9) == kQMin);
  CHECK(solve_budget(c, 100, 100.0) == 1.0);
  const double q = solve_budget(c, 100, 250.0);
  CHECK(std::abs(expected_cost(c, 100, q) - 250.0) <= 1.0);
  CHECK(expected_cost(c, 100, q) <= 250.0);
  CHECK_THROWS_AS(solve_budget(c, 100, 99.0), InfeasibleBudget);
}

TEST_CASE("budget solver agrees with a grid scan") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> inc(0.1, 5.0), frac(0.0, 1.0);
  for (int table = 0; table < 50; ++table) {
    std::vector<double> c;
    double total = 0.0;
    for (int l = 0; l < 4; ++l) c.push_back(total += inc(rng));
    const double budget = 100 * (c.front() + frac(rng) * (c.back() - c.front()));
    double step = 0.0;
    const double scan = brute_force_q(c, 100, budget, step);
    const double q = solve_budget(c, 100, budget);
    REQUIRE(scan > 0.0);
    CHECK(std::abs(q - scan) <= step);
  }
}

TEST_CASE("threshold calibration edge cases") {
  ConfidenceTable conf(10, std::vector<double>{0.3, 0.6, 0.9});
  const std::vector<double> first{1.0, 0.0, 0.0};
  CHECK(calibrate_thresholds(conf, first)[0] == 0.0);
  const auto none_early = calibrate_thresholds(conf, std::vector<double>{0.0, 0.0, 1.0});
  CHECK(std::isinf(none_early[0]));
  CHECK(std::isinf(none_early[1]));
  CHECK(none_early[2] == 0.0);
  CHECK_THROWS_AS(calibrate_thresholds(ConfidenceTable(2, {0.5, 0.5, 0.5}), first), std::invalid_argument);

  // Identical confidences: the threshold sits on the tie, deterministically.
  const auto tied = calibrate_thresholds(conf, std::vector<double>{0.5, 0.3, 0.2});
  CHECK(tied[0] == 0.3);
  CHECK(tied[1] == 0.6);
  CHECK(tied == calibrate_thresholds(conf, std::vector<double>{0.5, 0.3, 0.2}));
}

TEST_CASE("calibrated thresholds reproduce the exit fractions") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto draw = [&](std::size_t n) {
    ConfidenceTable t(n, std::vector<double>(4));
    for (auto& row : t)
      for (double& v : row) v = u(rng);
    return t;
  };
  const std::vector<double> q(4, 0.25);
  auto fractions = [&](const ConfidenceTable& t, const std::vector<double>& theta) {
    std::vector<double> frac(4, 0.0);
    for (const auto& row : t) {
      for (std::size_t l = 0; l < 4; ++l) {
        if (row[l] >= theta[l]) {
          frac[l] += 1.0 / static_cast<double>(t.size());
          break;
        }
      }
    }
    return frac;
  };
  const auto calib = draw(1000);
  const auto theta = calibrate_thresholds(calib, q);
  CHECK(theta[3] == 0.0);
  const auto own = fractions(calib, theta);
  for (std::size_t l = 0; l < 4; ++l) CHECK(own[l] == doctest::Approx(q[l]).epsilon(1e-12));
  const auto fresh = fractions(draw(10000), theta);
  for (std::size_t l = 0; l < 4; ++l) CHECK(std::abs(fresh[l] - q[l]) <= 0.05);
}

TEST_CASE("budgeted batch prediction follows the thresholds") {
  const auto model = ScaiModel::build(fixtures::tiny_config());
  const auto& ds = fixtures::tiny_dataset();
  const auto costs = model.static_costs();

  const auto early = budgeted_batch_predict(model, ds, std::vector<double>(4, 0.0));
  std::uint64_t expect = 0;
  for (const auto& o : early.outcomes) {
    CHECK(o.exit_index == 1);
    expect += o.flops_used;
  }
  CHECK(early.total_flops == expect);
  CHECK(early.total_flops <= costs[0] * ds.size());

  const auto late = budgeted_batch_predict(model, ds, std::vector<double>{1.1, 1.1, 1.1, 0.0});
  for (const auto& o : late.outcomes) CHECK(o.exit_index == 4);

  // Costs never include blocks past the exit.
  const auto mid = budgeted_batch_predict(model, ds, median_thresholds(model, ds));
  std::vector<int> hist(4, 0);
  for (const auto& o : mid.outcomes) ++hist[o.exit_index - 1];
  CHECK(hist[0] > 0);
  CHECK(hist[3] > 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& o = mid.outcomes[i];
    CHECK(o.flops_used == forward_to_exit(model, ds.curves[i].values, o.exit_index).flops_used);
  }
}

TEST_CASE("lowering thresholds does not raise cost") {
  const auto model = ScaiModel::build(fixtures::tiny_config());
  const auto& ds = fixtures::tiny_dataset();
  auto theta = median_thresholds(model, ds);
  for (double& t : theta) t *= 1.002;
  std::uint64_t previous = std::numeric_limits<std::uint64_t>::max();
  for (int step = 0; step < 8; ++step) {
    const auto r = budgeted_batch_predict(model, ds, theta);
    CHECK(r.total_flops <= previous);
    previous = r.total_flops;
    for (double& t : theta) t *= 0.999;
  }
}

TEST_CASE("anytime prediction") {
  const auto model = ScaiModel::build(fixtures::tiny_config());
  const auto costs = model.static_costs();
  const auto& curve = fixtures::tiny_dataset().curves[5].values;

  const auto full = anytime_predict(model, curve, static_cast<double>(costs[3]) * 2);
  const auto direct = forward_to_exit(model, curve, 4);
  CHECK(full.exit_index == 4);
  CHECK(full.probs == direct.probs);
  CHECK(full.flops_used == direct.flops_used);
  CHECK_FALSE(full.over_budget);

  CHECK(anytime_predict(model, curve, static_cast<double>(costs[0])).exit_index == 1);
  CHECK(anytime_predict(model, curve, static_cast<double>(costs[2])).exit_index == 3);
  const auto starved = anytime_predict(model, curve, 1.0);
  CHECK(starved.exit_index == 1);
  CHECK(starved.over_budget);
  CHECK_THROWS_AS(anytime_predict(model, curve, 0.0), std::invalid_argument);
}

TEST_CASE("anytime exits under exponential budgets match the analytic buckets") {
  const std::vector<double> costs{1.0, 2.5, 4.0, 7.0};
  const double mean = 3.0;
  std::mt19937_64 rng(77);
  std::exponential_distribution<double> budget(1.0 / mean);
  std::vector<double> freq(5, 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) freq[anytime_exit(costs, budget(rng))] += 1.0 / n;
  auto survive = [&](double c) { return std::exp(-c / mean); };
  CHECK(freq[0] == doctest::Approx(1.0 - survive(costs[0])).epsilon(0.01));
  for (std::size_t l = 1; l < 4; ++l) {
    CHECK(std::abs(freq[l] - (survive(costs[l - 1]) - survive(costs[l]))) < 0.01);
  }
  CHECK(std::abs(freq[4] - survive(costs[3])) < 0.01);
}

TEST_CASE("accuracy curves") {
  const auto model = ScaiModel::build(fixtures::tiny_config());
  const auto sp = data::split(fixtures::tiny_dataset(), {8, 1, 1}, 2);
  CHECK(accuracy_vs_budget_curve(model, sp.valid, sp.test, "anytime", {}).empty());

  const double unlimited = 1e12;
  const auto any = accuracy_vs_budget_curve(model, sp.valid, sp.test, "anytime", std::vector<double>{unlimited});
  REQUIRE(any.size() == 1);
  CHECK(any[0].accuracy == train::evaluate(model, sp.test).accuracy.back());
  CHECK(any[0].exit_histogram == std::vector<std::size_t>{0, 0, 0, sp.test.size()});

  const auto costs = model.static_costs();
  const std::vector<double> grid{0.5 * static_cast<double>(costs[0]), static_cast<double>(costs[1]), unlimited};
  const auto bud = accuracy_vs_budget_curve(model, sp.valid, sp.test, "budgeted", grid);
  CHECK(bud.size() == 2);  // the first budget is infeasible
  CHECK_THROWS_AS(accuracy_vs_budget_curve(model, sp.valid, sp.test, "other", grid), std::invalid_argument);

  std::ostringstream out;
  write_curve_csv(out, any);
  CHECK(out.str().rfind("mode,budget,realized_flops_mean,accuracy,exit_histogram\nanytime,", 0) == 0);
  CHECK(out.str().find(",0;0;0;12\n") != std::string::npos);
}

TEST_CASE("threshold file round trip") {
  const std::vector<double> theta{0.91234567890123456, std::numeric_limits<double>::infinity(), 0.5, 0.0};
  const auto path = std::filesystem::temp_directory_path() / "scai_test_theta.csv";
  save_thresholds(theta, path);
  CHECK(load_thresholds(path) == theta);
  std::filesystem::remove(path);
}
