#include "scai/iot.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>

namespace scai::iot {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'A', 'I', 'F', 'E', 'A', 'T'};
constexpr std::size_t kHeader = sizeof kMagic + 3 * 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

double json_rate(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  // "inf" spells an unbounded cap in scenario files.
  if (v.is_string() && (v.get<std::string>() == "inf" || v.get<std::string>() == "infinity")) {
    return std::numeric_limits<double>::infinity();
  }
  return v.get<double>();
}

std::string fmt(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 10);
  return std::string(buf, end);
}

}  // namespace

void DeviceProfile::validate() const {
  if (!(compute_rate > 0.0) || !(bandwidth > 0.0) || rtt_ms < 0.0 || b_max < 0.0) {
    throw std::invalid_argument("device " + name + ": rates must be positive, rtt and b_max non-negative");
  }
}

double BudgetDistribution::sample(std::mt19937_64& rng) const {
  switch (kind) {
    case Kind::kExponential:
      return std::exponential_distribution<double>(1.0 / mean)(rng);
    case Kind::kFixed:
      return mean;
    case Kind::kUniform:
      return std::uniform_real_distribution<double>(lo, hi)(rng);
  }
  return mean;
}

void BudgetDistribution::validate() const {
  if (kind == Kind::kUniform) {
    if (!(lo > 0.0) || hi < lo) throw std::invalid_argument("uniform budget needs 0 < lo <= hi");
  } else if (!(mean > 0.0)) {
    throw std::invalid_argument("budget mean must be positive");
  }
}

void Scenario::validate() const {
  if (devices.empty()) throw std::invalid_argument("scenario has no devices");
  if (workload == 0) throw std::invalid_argument("scenario workload is empty");
  for (const auto& d : devices) d.validate();
  if (!(server.compute_rate > 0.0)) throw std::invalid_argument("server compute rate must be positive");
  budget.validate();
  if (corruption_rate < 0.0 || corruption_rate > 1.0) throw std::invalid_argument("corruption_rate outside [0, 1]");
}

void to_json(nlohmann::json& j, const DeviceProfile& d) {
  j = {{"name", d.name}, {"compute_rate", d.compute_rate}, {"bandwidth", d.bandwidth}, {"rtt_ms", d.rtt_ms}};
  if (std::isinf(d.b_max)) {
    j["b_max"] = "inf";
  } else {
    j["b_max"] = d.b_max;
  }
}

void from_json(const nlohmann::json& j, DeviceProfile& d) {
  d.name = j.value("name", std::string("device"));
  d.compute_rate = json_rate(j, "compute_rate", d.compute_rate);
  d.b_max = json_rate(j, "b_max", d.b_max);
  d.bandwidth = json_rate(j, "bandwidth", d.bandwidth);
  d.rtt_ms = json_rate(j, "rtt_ms", d.rtt_ms);
}

void to_json(nlohmann::json& j, const BudgetDistribution& b) {
  switch (b.kind) {
    case BudgetDistribution::Kind::kExponential:
      j = {{"kind", "exponential"}, {"mean", b.mean}};
      break;
    case BudgetDistribution::Kind::kFixed:
      j = {{"kind", "fixed"}, {"value", b.mean}};
      break;
    case BudgetDistribution::Kind::kUniform:
      j = {{"kind", "uniform"}, {"lo", b.lo}, {"hi", b.hi}};
      break;
  }
}

void from_json(const nlohmann::json& j, BudgetDistribution& b) {
  const auto kind = j.value("kind", std::string("exponential"));
  if (kind == "exponential") {
    b.kind = BudgetDistribution::Kind::kExponential;
    b.mean = j.at("mean").get<double>();
  } else if (kind == "fixed") {
    b.kind = BudgetDistribution::Kind::kFixed;
    b.mean = j.at("value").get<double>();
  } else if (kind == "uniform") {
    b.kind = BudgetDistribution::Kind::kUniform;
    b.lo = j.at("lo").get<double>();
    b.hi = j.at("hi").get<double>();
  } else {
    throw std::invalid_argument("unknown budget distribution '" + kind + "' (exponential, fixed or uniform)");
  }
}

void to_json(nlohmann::json& j, const Scenario& s) {
  j = {{"devices", s.devices},
       {"server", {{"compute_rate", s.server.compute_rate}}},
       {"workload", s.workload},
       {"budget", s.budget},
       {"corruption_rate", s.corruption_rate},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, Scenario& s) {
  j.at("devices").get_to(s.devices);
  if (j.contains("server")) s.server.compute_rate = json_rate(j.at("server"), "compute_rate", s.server.compute_rate);
  s.workload = j.value("workload", s.workload);
  if (j.contains("budget")) j.at("budget").get_to(s.budget);
  s.corruption_rate = j.value("corruption_rate", 0.0);
  s.seed = j.value("seed", s.seed);
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Scenario s;
  try {
    s = nlohmann::json::parse(in).get<Scenario>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  s.validate();
  return s;
}

std::vector<std::uint8_t> serialize_features(const FeatureMap& map) {
  const auto& x = map.features;
  if (x.rank() != 2) throw ShapeError("serialize_features: expected [C x W], got " + shape_str(x.shape()));
  std::vector<std::uint8_t> out(kMagic, kMagic + sizeof kMagic);
  out.reserve(kHeader + x.numel() * 8 + 4);
  put_u32(out, static_cast<std::uint32_t>(map.block));
  put_u32(out, static_cast<std::uint32_t>(x.dim(0)));
  put_u32(out, static_cast<std::uint32_t>(x.dim(1)));
  for (double v : x.data()) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  put_u32(out, crc_of(out.data(), out.size()));
  return out;
}

FeatureMap deserialize_features(std::span<const std::uint8_t> payload) {
  if (payload.size() < kHeader + 4) throw ChecksumError("feature payload truncated");
  const std::size_t body = payload.size() - 4;
  if (crc_of(payload.data(), body) != get_u32(payload.data() + body)) {
    throw ChecksumError("feature payload checksum mismatch");
  }
  if (!std::equal(kMagic, kMagic + sizeof kMagic, payload.begin())) throw ChecksumError("feature payload has bad magic");
  const std::uint8_t* p = payload.data() + sizeof kMagic;
  FeatureMap map;
  map.block = get_u32(p);
  const std::size_t c = get_u32(p + 4), w = get_u32(p + 8);
  if (kHeader + c * w * 8 != body) throw ChecksumError("feature payload length does not match its header");
  std::vector<double> values(c * w);
  const std::uint8_t* v = payload.data() + kHeader;
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(v[i * 8 + b]) << (8 * b);
    std::memcpy(&values[i], &bits, sizeof bits);
  }
  map.features = Tensor::from({c, w}, std::move(values));
  return map;
}

std::vector<std::uint8_t> offload_split(const ScaiModel& model, std::span<const double> curve, std::size_t l) {
  if (l >= model.exits()) {
    throw std::out_of_range("split point " + std::to_string(l) + " outside [0, " + std::to_string(model.exits()) + ")");
  }
  Network net(model, false);
  Tensor x = curve_tensor(curve);
  for (std::size_t k = 1; k <= l; ++k) x = net.run_stage(k, x).features;
  return serialize_features({l, x});
}

ExitOutcome server_resume(const ScaiModel& model, std::span<const std::uint8_t> payload, std::size_t exit) {
  FeatureMap map = deserialize_features(payload);
  if (exit <= map.block || exit > model.exits()) {
    throw std::out_of_range("cannot resume from block " + std::to_string(map.block) + " to exit " +
                            std::to_string(exit));
  }
  Network net(model, false);
  Tensor x = map.features;
  std::uint64_t flops = 0;
  Tensor probs;
  std::vector<pa::HaltingTrace> traces;
  for (std::size_t k = map.block + 1; k <= exit; ++k) {
    auto st = net.run_stage(k, x);
    flops += st.macs;
    if (model.config().pa_enabled) traces.push_back(std::move(st.trace));
    x = st.features;
    probs = st.probs;
  }
  ExitOutcome o = make_outcome(exit, probs, flops);
  o.traces = std::move(traces);
  return o;
}

double SimResult::mean_latency() const {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples)
    if (!s.failed) {
      total += s.latency_ms;
      ++n;
    }
  return n ? total / static_cast<double>(n) : 0.0;
}

double SimResult::accuracy() const {
  std::size_t ok = 0, n = 0;
  for (const auto& s : samples)
    if (!s.failed) {
      ok += s.correct;
      ++n;
    }
  return n ? static_cast<double>(ok) / static_cast<double>(n) : 0.0;
}

double SimResult::offload_fraction() const {
  if (samples.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& s : samples) n += s.offloaded;
  return static_cast<double>(n) / static_cast<double>(samples.size());
}

std::size_t SimResult::failed() const {
  return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.failed; }));
}

SimResult simulate(const ScaiModel& model, std::span<const double> theta, const Scenario& scenario,
                   const data::Dataset& dataset) {
  scenario.validate();
  if (dataset.empty()) throw std::invalid_argument("simulate: empty dataset");
  const std::size_t exits = model.exits();
  if (theta.size() != exits) {
    throw std::invalid_argument("simulate: " + std::to_string(theta.size()) + " thresholds for " +
                                std::to_string(exits) + " exits");
  }
  std::vector<double> costs;
  for (auto c : model.static_costs()) costs.push_back(static_cast<double>(c));

  std::mt19937_64 budget_rng(scenario.seed);
  std::mt19937_64 fault_rng(scenario.seed ^ 0xFA017ULL);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  Network net(model, false);

  SimResult res;
  for (const auto& d : scenario.devices) res.device_names.push_back(d.name);

  for (std::size_t i = 0; i < scenario.workload; ++i) {
    const auto& curve = dataset.curves[i % dataset.size()];
    const std::size_t dev_index = i % scenario.devices.size();
    const auto& dev = scenario.devices[dev_index];
    SampleRecord rec;
    rec.sample = i;
    rec.device = dev_index;
    rec.label = curve.label;
    rec.budget = scenario.budget.sample(budget_rng);

    // On device.
    const double limit = std::min(rec.budget, dev.b_max);
    Tensor x = curve_tensor(curve.values);
    std::size_t done_block = 0;
    std::optional<ExitOutcome> answer;
    bool resolved = false;
    for (std::size_t l = 1; l <= exits && costs[l - 1] <= limit; ++l) {
      auto st = net.run_stage(l, x);
      rec.flops_device += st.macs;
      x = st.features;
      done_block = l;
      answer = make_outcome(l, st.probs, rec.flops_device);
      if (answer->confidence >= theta[l - 1] || l == exits) {
        resolved = true;
        break;
      }
    }

    // Offload when the server can go deeper within B, or nothing answered yet.
    const bool deeper_fits = !answer || costs[done_block] <= rec.budget;
    if (!resolved && rec.budget > dev.b_max && deeper_fits) {
      rec.offloaded = true;
      rec.split_block = done_block;
      auto payload = serialize_features({done_block, x});
      rec.payload_bytes = payload.size();
      if (coin(fault_rng) < scenario.corruption_rate) {
        // Damaged in transit: cut at a random point.
        payload.resize(std::uniform_int_distribution<std::size_t>(0, payload.size() - 1)(fault_rng));
      }
      try {
        FeatureMap map = deserialize_features(payload);
        Tensor y = map.features;
        std::uint64_t cumulative = rec.flops_device;
        for (std::size_t l = map.block + 1; l <= exits; ++l) {
          if (costs[l - 1] > rec.budget && answer) break;
          auto st = net.run_stage(l, y);
          rec.flops_server += st.macs;
          cumulative += st.macs;
          y = st.features;
          answer = make_outcome(l, st.probs, cumulative);
          answer->over_budget = costs[l - 1] > rec.budget;
          if (answer->confidence >= theta[l - 1] || l == exits || answer->over_budget) break;
        }
      } catch (const ChecksumError&) {
        rec.failed = true;
      }
    } else if (!answer) {
      // Nothing fits the budget; answer from exit 1 anyway.
      auto st = net.run_stage(1, x);
      rec.flops_device += st.macs;
      answer = make_outcome(1, st.probs, rec.flops_device);
      answer->over_budget = true;
    }

    if (!rec.failed) {
      rec.exit_index = answer->exit_index;
      rec.predicted = answer->predicted;
      rec.correct = answer->predicted == curve.label;
      rec.over_budget = answer->over_budget;
    }
    rec.latency_ms = static_cast<double>(rec.flops_device) / dev.compute_rate;
    if (rec.offloaded) {
      rec.latency_ms += static_cast<double>(rec.payload_bytes) / dev.bandwidth + dev.rtt_ms +
                        static_cast<double>(rec.flops_server) / scenario.server.compute_rate;
    }
    res.samples.push_back(rec);
  }
  return res;
}

void latency_report(std::ostream& out, const SimResult& result) {
  out << "device,samples,failed,offloaded,offload_fraction,accuracy,mean_latency_ms,max_latency_ms,"
         "mean_device_flops,mean_server_flops\n";
  auto row = [&](const std::string& name, auto&& pick) {
    std::size_t n = 0, failed = 0, offloaded = 0, correct = 0, ok = 0;
    double latency = 0.0, max_latency = 0.0, dev_flops = 0.0, srv_flops = 0.0;
    for (const auto& s : result.samples) {
      if (!pick(s)) continue;
      ++n;
      failed += s.failed;
      offloaded += s.offloaded;
      dev_flops += static_cast<double>(s.flops_device);
      srv_flops += static_cast<double>(s.flops_server);
      if (!s.failed) {
        ++ok;
        correct += s.correct;
        latency += s.latency_ms;
        max_latency = std::max(max_latency, s.latency_ms);
      }
    }
    if (n == 0) return;
    const auto dn = static_cast<double>(n);
    out << name << ',' << n << ',' << failed << ',' << offloaded << ',' << fmt(static_cast<double>(offloaded) / dn)
        << ',' << fmt(ok ? static_cast<double>(correct) / static_cast<double>(ok) : 0.0) << ','
        << fmt(ok ? latency / static_cast<double>(ok) : 0.0) << ',' << fmt(max_latency) << ',' << fmt(dev_flops / dn)
        << ',' << fmt(srv_flops / dn) << '\n';
  };
  for (std::size_t d = 0; d < result.device_names.size(); ++d) {
    row(result.device_names[d], [d](const SampleRecord& s) { return s.device == d; });
  }
  row("all", [](const SampleRecord&) { return true; });
}

void write_samples_csv(std::ostream& out, const SimResult& result) {
  out << "sample,device,label,budget,exit,predicted,correct,offloaded,split_block,over_budget,failed,latency_ms,"
         "flops_device,flops_server,payload_bytes\n";
  for (const auto& s : result.samples) {
    out << s.sample << ',' << result.device_names[s.device] << ',' << s.label << ',' << fmt(s.budget) << ','
        << s.exit_index << ',' << s.predicted << ',' << s.correct << ',' << s.offloaded << ',';
    if (s.offloaded) out << s.split_block;
    out << ',' << s.over_budget << ',' << s.failed << ',' << fmt(s.latency_ms) << ',' << s.flops_device << ','
        << s.flops_server << ',' << s.payload_bytes << '\n';
  }
}

}  // namespace scai::iot
