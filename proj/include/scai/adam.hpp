#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scai/params.hpp"

namespace scai {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// One bias-corrected Adam update of `param` in place. Advances
/// state.step. Elements whose gradient is exactly zero keep their value and
/// moments, so a zero gradient never moves a parameter.
void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state, const AdamConfig& cfg);

/// Adam over every buffer of a ParameterStore.
class Adam {
 public:
  Adam(ParameterStore& params, AdamConfig cfg = {});

  /// grads[i] matches params[i] element for element.
  void step(const std::vector<std::vector<double>>& grads);

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return states_.empty() ? 0 : states_.front().step; }

 private:
  ParameterStore* params_;
  AdamConfig cfg_;
  std::vector<AdamState> states_;
};

}  // namespace scai
