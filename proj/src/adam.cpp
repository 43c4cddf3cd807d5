#include "scai/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace scai {

void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state, const AdamConfig& cfg) {
  if (param.size() != grad.size()) throw ShapeError("adam_step: gradient length does not match parameter");
  if (state.m.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  if (state.m.size() != param.size() || state.v.size() != param.size()) {
    throw ShapeError("adam_step: moment buffers do not match parameter");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    if (g == 0.0) continue;
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

Adam::Adam(ParameterStore& params, AdamConfig cfg) : params_(&params), cfg_(cfg), states_(params.size()) {}

void Adam::step(const std::vector<std::vector<double>>& grads) {
  if (grads.size() != params_->size()) throw std::invalid_argument("Adam::step: gradient count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    adam_step(*(*params_)[i].values, grads[i], states_[i], cfg_);
  }
}

}  // namespace scai
