#include "scai/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "scai/ops.hpp"

namespace scai {

std::string GradCheckResult::describe() const {
  std::ostringstream os;
  os << "max relative error " << max_rel_error << " at input " << worst_input << " element " << worst_index
     << " (analytic " << analytic << ", numeric " << numeric << ")";
  return os.str();
}

namespace {

Tensor contract(const Tensor& out) {
  if (out.numel() == 1) return ops::reshape(out, {1});
  std::mt19937_64 rng(0x5CA1u);
  std::uniform_real_distribution<double> dist(0.5, 1.5);
  std::vector<double> w(out.numel());
  for (double& v : w) v = dist(rng);
  return ops::sum(ops::mul(ops::reshape(out, {out.numel()}), Tensor::from({out.numel()}, std::move(w))));
}

}  // namespace

GradCheckResult grad_check(const GradCheckFn& fn, const std::vector<Tensor>& inputs, double rel_tol, double step) {
  for (Tensor in : inputs) in.zero_grad();
  contract(fn(inputs)).backward();

  GradCheckResult result;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    Tensor in = inputs[a];
    if (!in.requires_grad()) continue;
    const std::vector<double> analytic = in.grad().empty() ? std::vector<double>(in.numel(), 0.0)
                                                           : std::vector<double>(in.grad().begin(), in.grad().end());
    auto data = in.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + step;
      const double plus = contract(fn(inputs)).item();
      data[i] = orig - step;
      const double minus = contract(fn(inputs)).item();
      data[i] = orig;
      const double numeric = (plus - minus) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-4});
      const double err = std::abs(analytic[i] - numeric) / denom;
      if (err >= result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_input = a;
        result.worst_index = i;
        result.analytic = analytic[i];
        result.numeric = numeric;
      }
    }
  }
  result.passed = result.max_rel_error < rel_tol;
  return result;
}

}  // namespace scai
