#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "scai/network.hpp"
#include "scai/spectra.hpp"

namespace scai::iot {

/// An edge device. Rates are in multiply-accumulates and bytes per ms.
struct DeviceProfile {
  std::string name;
  double compute_rate = 1e6;
  double b_max = std::numeric_limits<double>::infinity();  // max on-device MACs per sample
  double bandwidth = 1e4;
  double rtt_ms = 10.0;

  void validate() const;
};

struct ServerProfile {
  double compute_rate = 1e8;
};

/// Per-sample compute budget distribution.
struct BudgetDistribution {
  enum class Kind { kExponential, kFixed, kUniform };
  Kind kind = Kind::kExponential;
  double mean = 1e7;  // exponential mean, or the fixed value
  double lo = 0.0;    // uniform range
  double hi = 0.0;

  double sample(std::mt19937_64& rng) const;
  void validate() const;
};

struct Scenario {
  std::vector<DeviceProfile> devices;
  ServerProfile server;
  std::size_t workload = 100;    // samples; taken round-robin from the dataset
  BudgetDistribution budget;
  double corruption_rate = 0.0;  // probability a shipped payload is damaged in transit
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const DeviceProfile& d);
void from_json(const nlohmann::json& j, DeviceProfile& d);
void to_json(nlohmann::json& j, const BudgetDistribution& b);
void from_json(const nlohmann::json& j, BudgetDistribution& b);
void to_json(nlohmann::json& j, const Scenario& s);
void from_json(const nlohmann::json& j, Scenario& s);
Scenario load_scenario(const std::filesystem::path& path);

class ChecksumError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Features x^l leaving the device after block l (l = 0: the raw curve).
struct FeatureMap {
  std::size_t block = 0;
  Tensor features;  // [C x W]
};

/// Little-endian layout: "SCAIFEAT", u32 block, u32 channels, u32 width,
/// channels*width float64 values, u32 CRC-32 of everything before it.
std::vector<std::uint8_t> serialize_features(const FeatureMap& map);
/// Throws ChecksumError on truncated or damaged payloads.
FeatureMap deserialize_features(std::span<const std::uint8_t> payload);

/// Runs blocks 1..l on the device and packages x^l. l = 0 ships the input.
std::vector<std::uint8_t> offload_split(const ScaiModel& model, std::span<const double> curve, std::size_t l);

/// Completes blocks l+1..exit from a payload and classifies at `exit`.
/// flops_used counts server-side work only.
ExitOutcome server_resume(const ScaiModel& model, std::span<const std::uint8_t> payload, std::size_t exit);

struct SampleRecord {
  std::size_t sample = 0;
  std::size_t device = 0;
  std::size_t label = 0;
  double budget = 0.0;
  std::size_t exit_index = 0;  // 0 when failed
  std::size_t predicted = 0;
  bool correct = false;
  bool offloaded = false;
  std::size_t split_block = 0;  // meaningful when offloaded
  bool over_budget = false;
  bool failed = false;
  double latency_ms = 0.0;
  std::uint64_t flops_device = 0;
  std::uint64_t flops_server = 0;
  std::size_t payload_bytes = 0;
};

struct SimResult {
  std::vector<SampleRecord> samples;
  std::vector<std::string> device_names;

  double mean_latency() const;
  double accuracy() const;  // over classified samples
  double offload_fraction() const;
  std::size_t failed() const;
};

/// Logical-time simulation. Each sample draws a budget B; its device runs
/// exits while the next exit's static cost fits min(B, B_max) and stops at
/// the first confident one. Unresolved samples with B > B_max ship x^l to
/// the server when it can reach a deeper exit within B (or the device had
/// no answer), and the server continues within B. Otherwise the deepest
/// finished exit answers (exit 1, over budget, if none fit).
SimResult simulate(const ScaiModel& model, std::span<const double> theta, const Scenario& scenario,
                   const data::Dataset& dataset);

/// Per-device rows in scenario order followed by an "all" row.
void latency_report(std::ostream& out, const SimResult& result);
/// One row per sample.
void write_samples_csv(std::ostream& out, const SimResult& result);

}  // namespace scai::iot
