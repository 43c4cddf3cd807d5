#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "scai/exit_policy.hpp"
#include "scai/iot.hpp"

using namespace scai;
using namespace scai::iot;

namespace {

Scenario one_device(double b_max, double mean_budget, std::size_t workload) {
  Scenario s;
  DeviceProfile d;
  d.name = "edge";
  d.compute_rate = 2e5;
  d.b_max = b_max;
  d.bandwidth = 5e3;
  d.rtt_ms = 20.0;
  s.devices = {d};
  s.workload = workload;
  s.budget.kind = BudgetDistribution::Kind::kExponential;
  s.budget.mean = mean_budget;
  s.seed = 31;
  return s;
}

const ScaiModel& tiny_model() {
  static const ScaiModel m = ScaiModel::build(fixtures::tiny_config());
  return m;
}

// Confidence of the tiny model at every exit, used to give the thresholds
// a sensible spread.
std::vector<double> median_theta() {
  const auto table = policy::exit_confidences(tiny_model(), fixtures::tiny_dataset());
  std::vector<double> theta;
  for (std::size_t l = 0; l < 4; ++l) {
    std::vector<double> col;
    for (const auto& row : table) col.push_back(row[l]);
    std::sort(col.begin(), col.end());
    theta.push_back(col[col.size() / 2]);
  }
  theta[3] = 0.0;
  return theta;
}

}  // namespace

TEST_CASE("feature payload round trip is bit exact") {
  const auto x = Tensor::from({2, 3}, {1.0, -0.0, 3.5e-300, std::numeric_limits<double>::max(), 0.1, -7.25});
  const auto payload = serialize_features({2, x});
  CHECK(payload.size() == 8 + 12 + 6 * 8 + 4);
  const auto back = deserialize_features(payload);
  CHECK(back.block == 2);
  REQUIRE(back.features.shape() == x.shape());
  CHECK(std::memcmp(back.features.data().data(), x.data().data(), 6 * sizeof(double)) == 0);
}

TEST_CASE("damaged payloads fail the checksum") {
  const auto x = Tensor::from({1, 4}, {1.0, 2.0, 3.0, 4.0});
  const auto payload = serialize_features({0, x});
  for (std::size_t cut = 0; cut < payload.size(); cut += 3) {
    std::vector<std::uint8_t> truncated(payload.begin(), payload.begin() + static_cast<long>(cut));
    CHECK_THROWS_AS(deserialize_features(truncated), ChecksumError);
  }
  auto flipped = payload;
  flipped[25] ^= 0x10;
  CHECK_THROWS_AS(deserialize_features(flipped), ChecksumError);
}

TEST_CASE("split inference equals unsplit inference") {
  const auto& model = tiny_model();
  const auto& ds = fixtures::tiny_dataset();
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& curve = ds.curves[i * 5].values;
    const auto local = forward_to_exit(model, curve, 4);
    for (std::size_t l = 0; l < 4; ++l) {
      const auto remote = server_resume(model, offload_split(model, curve, l), 4);
      CHECK(remote.probs == local.probs);
    }
  }
  CHECK_THROWS_AS(offload_split(model, ds.curves[0].values, 4), std::out_of_range);
}

TEST_CASE("unbounded devices with zero thresholds never offload") {
  const auto r = simulate(tiny_model(), std::vector<double>(4, 0.0),
                          one_device(std::numeric_limits<double>::infinity(), 1e7, 50), fixtures::tiny_dataset());
  CHECK(r.samples.size() == 50);
  CHECK(r.offload_fraction() == 0.0);
}

TEST_CASE("zero on-device budget offloads the raw input") {
  const auto r = simulate(tiny_model(), median_theta(), one_device(0.0, 1e7, 40), fixtures::tiny_dataset());
  for (const auto& s : r.samples) {
    CHECK(s.offloaded);
    CHECK(s.split_block == 0);
    CHECK(s.flops_device == 0);
  }
}

TEST_CASE("offload fraction matches an independent re-simulation") {
  const auto& model = tiny_model();
  const auto& ds = fixtures::tiny_dataset();
  const auto costs = model.static_costs();
  const auto theta = median_theta();
  const double b_max = static_cast<double>(costs[2]);
  auto scenario = one_device(b_max, static_cast<double>(costs[1]), 1000);
  const auto result = simulate(model, theta, scenario, ds);

  // Re-simulation from the confidence table with a separate budget stream.
  const auto conf = policy::exit_confidences(model, ds);
  std::mt19937_64 rng(scenario.seed + 1000);
  std::exponential_distribution<double> budget(1.0 / scenario.budget.mean);
  std::size_t offloads = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    const double b = budget(rng);
    const double limit = std::min(b, b_max);
    bool resolved = false;
    std::size_t done = 0;
    for (std::size_t l = 0; l < 4 && static_cast<double>(costs[l]) <= limit; ++l) {
      done = l + 1;
      if (conf[i % ds.size()][l] >= theta[l] || l == 3) {
        resolved = true;
        break;
      }
    }
    const bool deeper = done == 0 || static_cast<double>(costs[done]) <= b;
    offloads += !resolved && b > b_max && deeper;
  }
  CHECK(std::abs(result.offload_fraction() - static_cast<double>(offloads) / 1000.0) <= 0.03);
}

TEST_CASE("raising the device cap does not raise offloading") {
  const auto costs = tiny_model().static_costs();
  const auto theta = median_theta();
  double previous = 1.1;
  for (double cap : {0.0, 0.5 * static_cast<double>(costs[0]), static_cast<double>(costs[0]),
                     static_cast<double>(costs[1]), static_cast<double>(costs[2]), static_cast<double>(costs[3])}) {
    const auto r = simulate(tiny_model(), theta, one_device(cap, static_cast<double>(costs[2]), 200),
                            fixtures::tiny_dataset());
    CHECK(r.offload_fraction() <= previous);
    previous = r.offload_fraction();
  }
}

TEST_CASE("corruption produces failures and conserves samples") {
  auto s = one_device(0.0, 1e7, 200);
  s.corruption_rate = 0.3;
  const auto r = simulate(tiny_model(), median_theta(), s, fixtures::tiny_dataset());
  CHECK(r.samples.size() == 200);
  CHECK(r.failed() > 20);
  CHECK(r.failed() < 100);
  for (const auto& rec : r.samples)
    if (rec.failed) CHECK(rec.offloaded);
}

TEST_CASE("latency accounting") {
  const auto costs = tiny_model().static_costs();
  auto s = one_device(static_cast<double>(costs[0]), static_cast<double>(costs[3]), 100);
  const auto theta = median_theta();
  const auto r = simulate(tiny_model(), theta, s, fixtures::tiny_dataset());
  const auto& dev = s.devices[0];
  for (const auto& rec : r.samples) {
    double lower = static_cast<double>(rec.flops_device) / dev.compute_rate;
    if (rec.offloaded) lower += dev.rtt_ms;
    CHECK(rec.latency_ms >= lower);
  }

  auto mean_offloaded = [](const SimResult& res) {
    double t = 0.0;
    int n = 0;
    for (const auto& rec : res.samples)
      if (rec.offloaded) {
        t += rec.latency_ms;
        ++n;
      }
    return n ? t / n : 0.0;
  };
  auto faster = s;
  faster.devices[0].bandwidth *= 10.0;
  CHECK(mean_offloaded(simulate(tiny_model(), theta, faster, fixtures::tiny_dataset())) <= mean_offloaded(r));
}

TEST_CASE("latency report") {
  std::ostringstream empty;
  latency_report(empty, SimResult{});
  CHECK(empty.str() ==
        "device,samples,failed,offloaded,offload_fraction,accuracy,mean_latency_ms,max_latency_ms,"
        "mean_device_flops,mean_server_flops\n");

  auto s = one_device(5e4, 1e5, 60);
  auto second = s.devices[0];
  second.name = "gateway";
  second.b_max = std::numeric_limits<double>::infinity();
  s.devices.push_back(second);
  auto run = [&] {
    std::ostringstream out;
    latency_report(out, simulate(tiny_model(), median_theta(), s, fixtures::tiny_dataset()));
    return out.str();
  };
  const auto a = run();
  CHECK(a == run());
  CHECK(a.find("\nedge,30,") != std::string::npos);
  CHECK(a.find("\ngateway,30,") != std::string::npos);
  CHECK(a.find("\nall,60,") != std::string::npos);
}

TEST_CASE("scenario validation and parsing") {
  Scenario s;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  const auto j = nlohmann::json::parse(R"({
    "devices": [{"name": "a", "compute_rate": 1e6, "b_max": "inf", "bandwidth": 100, "rtt_ms": 5}],
    "workload": 7,
    "budget": {"kind": "uniform", "lo": 1, "hi": 2},
    "seed": 9
  })");
  const auto parsed = j.get<Scenario>();
  CHECK(std::isinf(parsed.devices[0].b_max));
  CHECK(parsed.workload == 7);
  CHECK(parsed.budget.kind == BudgetDistribution::Kind::kUniform);
  parsed.validate();
  const auto again = nlohmann::json(parsed).get<Scenario>();
  CHECK(std::isinf(again.devices[0].b_max));
  CHECK_THROWS(nlohmann::json::parse(R"({"kind": "poisson", "mean": 1})").get<BudgetDistribution>());
}
