#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "scai/config.hpp"
#include "scai/pa_resnet.hpp"
#include "scai/params.hpp"
#include "scai/tensor.hpp"

namespace scai {

/// Prediction at one exit for one sample.
struct ExitOutcome {
  std::size_t exit_index = 0;  // 1-based
  std::vector<double> probs;
  double confidence = 0.0;
  std::size_t predicted = 0;
  std::uint64_t flops_used = 0;  // cumulative multiply-accumulates
  std::vector<pa::HaltingTrace> traces;
  bool over_budget = false;
};

/// SCAI / SCAI+ early-exit network: a stem convolution, L blocks of
/// residual units (position-adaptive when pa_enabled), a downsampling
/// transfer with projection shortcut between consecutive blocks, and a
/// pool-linear-softmax classifier after every block.
///
/// Parameter names (l, s are 1-based):
///
///     stem.conv.weight [C1 x 1 x 3]        stem.conv.bias [C1]
///     transfer{l}.conv.weight [Cl x Cl-1 x 3]   transfer{l}.conv.bias [Cl]      (l >= 2)
///     transfer{l}.proj.weight [Cl x Cl-1 x 1]   transfer{l}.proj.bias [Cl]
///     block{l}.unit{s}.conv1.weight [Cl x Cl x 3]  block{l}.unit{s}.conv1.bias [Cl]
///     block{l}.unit{s}.halt.conv.weight [1 x Cl x 3]   (s < S, SCAI+ only)
///     block{l}.unit{s}.halt.conv.bias [1]
///     block{l}.unit{s}.halt.global.weight [1 x Cl]
///     head{l}.linear.weight [classes x Cl]  head{l}.linear.bias [classes]
class ScaiModel {
 public:
  struct UnitSlots {
    std::size_t conv_w, conv_b;
  };
  struct HaltSlots {
    std::size_t conv_w, conv_b, global_w;
  };
  struct BlockSlots {
    std::size_t entry_w, entry_b;  // stem (l=1) or transfer conv
    std::size_t proj_w = 0, proj_b = 0;
    bool has_proj = false;
    std::vector<UnitSlots> units;
    std::vector<HaltSlots> halts;
    std::size_t head_w, head_b;
    std::size_t channels, width;
  };

  /// Random initialization seeded from config.seed.
  static ScaiModel build(const ScaiConfig& config);

  const ScaiConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  std::size_t exits() const { return config_.blocks; }
  const BlockSlots& block(std::size_t l) const;

  /// Upper-bound cumulative cost C_l of reaching exit l, every position
  /// running every unit.
  std::vector<std::uint64_t> static_costs() const;

  void save(const std::filesystem::path& path) const;
  static ScaiModel load(const std::filesystem::path& path);

 private:
  ScaiModel(ScaiConfig config, ParameterStore params);
  void index_layout();

  ScaiConfig config_;
  ParameterStore params_;
  std::vector<BlockSlots> blocks_;
};

/// [1 x W] input tensor for a raw curve.
Tensor curve_tensor(std::span<const double> values);

/// pool -> linear -> softmax.
Tensor classifier_head(const Tensor& features, const Tensor& weight, const Tensor& bias);

/// A model's parameters bound as autodiff leaves for one or more passes.
/// Stages are run in order; a stage's input is the raw curve tensor for
/// l = 1 and the previous stage's features otherwise.
class Network {
 public:
  struct Stage {
    Tensor features;  // x^l
    Tensor probs;     // y_l
    Tensor ponder;    // rho^l, undefined without PA
    pa::HaltingTrace trace;
    std::uint64_t macs = 0;  // this stage only
  };

  Network(const ScaiModel& model, bool requires_grad);

  const ScaiModel& model() const { return *model_; }
  const std::vector<Tensor>& leaves() const { return leaves_; }

  Tensor entry(std::size_t l, const Tensor& input, std::uint64_t& macs) const;
  Stage run_stage(std::size_t l, const Tensor& input) const;
  /// Runs every stage; the prefix property makes stage l identical to a
  /// truncated run.
  std::vector<Stage> run_all(std::span<const double> curve) const;

 private:
  const ScaiModel* model_;
  std::vector<Tensor> leaves_;
};

ExitOutcome make_outcome(std::size_t exit_index, const Tensor& probs, std::uint64_t flops);

/// Runs blocks 1..l and classifies at exit l.
ExitOutcome forward_to_exit(const ScaiModel& model, std::span<const double> curve, std::size_t l);

}  // namespace scai
