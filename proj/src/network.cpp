#include "scai/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "scai/ops.hpp"

namespace scai {

namespace {

std::vector<double> gaussian(std::mt19937_64& rng, std::size_t n, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

std::string unit_prefix(std::size_t l, std::size_t s) {
  return "block" + std::to_string(l) + ".unit" + std::to_string(s);
}

}  // namespace

ScaiModel::ScaiModel(ScaiConfig config, ParameterStore params)
    : config_(std::move(config)), params_(std::move(params)) {
  index_layout();
}

ScaiModel ScaiModel::build(const ScaiConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  ParameterStore ps;
  const std::size_t c1 = config.channels[0];
  // He fan-in scaling; residual branches are further damped by 1/sqrt(S)
  // so the stacked sums stay O(1) without normalization layers.
  ps.add("stem.conv.weight", {c1, 1, 3}, gaussian(rng, c1 * 3, std::sqrt(2.0 / 3.0)));
  ps.add("stem.conv.bias", {c1}, std::vector<double>(c1, 0.0));
  for (std::size_t l = 1; l <= config.blocks; ++l) {
    const std::size_t c = config.channels[l - 1];
    const std::size_t depth = config.units[l - 1];
    if (l > 1) {
      const std::size_t cp = config.channels[l - 2];
      const std::string t = "transfer" + std::to_string(l);
      ps.add(t + ".conv.weight", {c, cp, 3}, gaussian(rng, c * cp * 3, std::sqrt(2.0 / (3.0 * cp))));
      ps.add(t + ".conv.bias", {c}, std::vector<double>(c, 0.0));
      ps.add(t + ".proj.weight", {c, cp, 1}, gaussian(rng, c * cp, std::sqrt(1.0 / cp)));
      ps.add(t + ".proj.bias", {c}, std::vector<double>(c, 0.0));
    }
    const double unit_std = std::sqrt(2.0 / (3.0 * c)) / std::sqrt(static_cast<double>(depth));
    for (std::size_t s = 1; s <= depth; ++s) {
      const std::string u = unit_prefix(l, s);
      ps.add(u + ".conv1.weight", {c, c, 3}, gaussian(rng, c * c * 3, unit_std));
      ps.add(u + ".conv1.bias", {c}, std::vector<double>(c, 0.0));
      if (config.pa_enabled && s < depth) {
        ps.add(u + ".halt.conv.weight", {1, c, 3}, std::vector<double>(c * 3, 0.0));
        ps.add(u + ".halt.conv.bias", {1}, {config.halt_bias_init});
        ps.add(u + ".halt.global.weight", {1, c}, std::vector<double>(c, 0.0));
      }
    }
    const std::string h = "head" + std::to_string(l);
    ps.add(h + ".linear.weight", {config.classes, c}, gaussian(rng, config.classes * c, 0.01));
    ps.add(h + ".linear.bias", {config.classes}, std::vector<double>(config.classes, 0.0));
  }
  return ScaiModel(config, std::move(ps));
}

void ScaiModel::index_layout() {
  config_.validate();
  blocks_.clear();
  for (std::size_t l = 1; l <= config_.blocks; ++l) {
    BlockSlots b;
    b.channels = config_.channels[l - 1];
    b.width = config_.block_width(l);
    if (l == 1) {
      b.entry_w = params_.index_of("stem.conv.weight");
      b.entry_b = params_.index_of("stem.conv.bias");
    } else {
      const std::string t = "transfer" + std::to_string(l);
      b.entry_w = params_.index_of(t + ".conv.weight");
      b.entry_b = params_.index_of(t + ".conv.bias");
      b.proj_w = params_.index_of(t + ".proj.weight");
      b.proj_b = params_.index_of(t + ".proj.bias");
      b.has_proj = true;
    }
    const std::size_t depth = config_.units[l - 1];
    for (std::size_t s = 1; s <= depth; ++s) {
      const std::string u = unit_prefix(l, s);
      b.units.push_back({params_.index_of(u + ".conv1.weight"), params_.index_of(u + ".conv1.bias")});
      if (config_.pa_enabled && s < depth) {
        b.halts.push_back({params_.index_of(u + ".halt.conv.weight"), params_.index_of(u + ".halt.conv.bias"),
                           params_.index_of(u + ".halt.global.weight")});
      }
    }
    const std::string h = "head" + std::to_string(l);
    b.head_w = params_.index_of(h + ".linear.weight");
    b.head_b = params_.index_of(h + ".linear.bias");
    blocks_.push_back(std::move(b));
  }
}

const ScaiModel::BlockSlots& ScaiModel::block(std::size_t l) const {
  if (l < 1 || l > blocks_.size()) {
    throw std::out_of_range("exit index " + std::to_string(l) + " outside [1, " + std::to_string(blocks_.size()) + "]");
  }
  return blocks_[l - 1];
}

std::vector<std::uint64_t> ScaiModel::static_costs() const {
  std::vector<std::uint64_t> costs;
  std::uint64_t total = 0;
  for (std::size_t l = 1; l <= config_.blocks; ++l) {
    const auto& b = block(l);
    const std::uint64_t c = b.channels, w = b.width;
    if (l == 1) {
      total += c * 3 * w;
    } else {
      const std::uint64_t cp = block(l - 1).channels;
      total += c * cp * 3 * w + c * cp * w;
    }
    const std::size_t depth = b.units.size();
    total += depth * pa::unit_macs(c, w);
    if (config_.pa_enabled) total += (depth - 1) * pa::halting_macs(c, w, w);
    total += c * w + c * config_.classes;
    costs.push_back(total);
  }
  return costs;
}

void ScaiModel::save(const std::filesystem::path& path) const {
  nlohmann::json j = config_;
  save_checkpoint(path, j.dump(), params_);
}

ScaiModel ScaiModel::load(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  ScaiConfig cfg;
  try {
    cfg = nlohmann::json::parse(ck.meta).get<ScaiConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": bad model config in checkpoint: " + e.what());
  }
  // Verifies layout against the config.
  ScaiModel reference = build(cfg);
  for (std::size_t i = 0; i < reference.params_.size(); ++i) {
    const auto& want = reference.params_[i];
    if (!ck.params.contains(want.name) || ck.params.get(want.name).shape != want.shape) {
      throw std::runtime_error(path.string() + ": checkpoint parameter " + want.name + " missing or misshapen");
    }
  }
  if (ck.params.size() != reference.params_.size()) {
    throw std::runtime_error(path.string() + ": checkpoint has unexpected extra parameters");
  }
  return ScaiModel(cfg, std::move(ck.params));
}

Tensor curve_tensor(std::span<const double> values) {
  return Tensor::from({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

Tensor classifier_head(const Tensor& features, const Tensor& weight, const Tensor& bias) {
  return ops::softmax(ops::linear(ops::global_avg_pool(features), weight, bias));
}

Network::Network(const ScaiModel& model, bool requires_grad)
    : model_(&model), leaves_(model.params().bind(requires_grad)) {}

Tensor Network::entry(std::size_t l, const Tensor& input, std::uint64_t& macs) const {
  const auto& b = model_->block(l);
  const auto& P = leaves_;
  if (l == 1) {
    if (input.rank() != 2 || input.dim(0) != 1 || input.dim(1) != b.width) {
      throw ShapeError("network input must be [1 x " + std::to_string(b.width) + "], got " +
                       shape_str(input.shape()));
    }
    macs += static_cast<std::uint64_t>(b.channels) * 3 * b.width;
    return ops::conv1d(input, P[b.entry_w], P[b.entry_b], 1, 1);
  }
  const std::uint64_t cp = input.dim(0);
  macs += static_cast<std::uint64_t>(b.channels) * cp * 3 * b.width + static_cast<std::uint64_t>(b.channels) * cp * b.width;
  Tensor trans = ops::conv1d(ops::relu(input), P[b.entry_w], P[b.entry_b], 2, 1);
  Tensor proj = ops::conv1d(input, P[b.proj_w], P[b.proj_b], 2, 0);
  return ops::add(trans, proj);
}

Network::Stage Network::run_stage(std::size_t l, const Tensor& input) const {
  const auto& b = model_->block(l);
  const auto& P = leaves_;
  Stage st;
  Tensor x0 = entry(l, input, st.macs);

  std::vector<pa::ResidualUnit> units;
  units.reserve(b.units.size());
  for (const auto& u : b.units) units.push_back({P[u.conv_w], P[u.conv_b]});

  if (model_->config().pa_enabled) {
    std::vector<pa::HaltingParams> halts;
    halts.reserve(b.halts.size());
    for (const auto& h : b.halts) halts.push_back({P[h.conv_w], P[h.conv_b], P[h.global_w]});
    pa::BlockResult r = pa::pa_block_forward(x0, units, halts, model_->config().epsilon);
    st.features = r.output;
    st.ponder = r.ponder;
    st.trace = std::move(r.trace);
    st.macs += r.macs;
  } else {
    pa::PlainResult r = pa::plain_block_forward(x0, units);
    st.features = r.output;
    st.macs += r.macs;
  }
  st.probs = classifier_head(st.features, P[b.head_w], P[b.head_b]);
  st.macs += static_cast<std::uint64_t>(b.channels) * b.width +
             static_cast<std::uint64_t>(b.channels) * model_->config().classes;
  return st;
}

std::vector<Network::Stage> Network::run_all(std::span<const double> curve) const {
  std::vector<Stage> stages;
  Tensor x = curve_tensor(curve);
  for (std::size_t l = 1; l <= model_->exits(); ++l) {
    stages.push_back(run_stage(l, x));
    x = stages.back().features;
  }
  return stages;
}

ExitOutcome make_outcome(std::size_t exit_index, const Tensor& probs, std::uint64_t flops) {
  ExitOutcome o;
  o.exit_index = exit_index;
  o.probs.assign(probs.data().begin(), probs.data().end());
  auto it = std::max_element(o.probs.begin(), o.probs.end());
  o.predicted = static_cast<std::size_t>(it - o.probs.begin());
  o.confidence = *it;
  o.flops_used = flops;
  return o;
}

ExitOutcome forward_to_exit(const ScaiModel& model, std::span<const double> curve, std::size_t l) {
  if (l < 1 || l > model.exits()) {
    throw std::out_of_range("exit index " + std::to_string(l) + " outside [1, " + std::to_string(model.exits()) + "]");
  }
  Network net(model, false);
  Tensor x = curve_tensor(curve);
  std::uint64_t flops = 0;
  std::vector<pa::HaltingTrace> traces;
  Tensor probs;
  for (std::size_t k = 1; k <= l; ++k) {
    auto st = net.run_stage(k, x);
    flops += st.macs;
    if (model.config().pa_enabled) traces.push_back(std::move(st.trace));
    x = st.features;
    probs = st.probs;
  }
  ExitOutcome o = make_outcome(l, probs, flops);
  o.traces = std::move(traces);
  return o;
}

}  // namespace scai
