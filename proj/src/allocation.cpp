#include "scai/allocation.hpp"

#include <cmath>
#include <ostream>
#include <string>

namespace scai::analysis {
namespace {

void require_pa(const ScaiModel& model) {
  if (!model.config().pa_enabled) {
    throw std::invalid_argument(
        "allocation heatmap needs a position-adaptive model; this checkpoint runs every unit at every position");
  }
}

}  // namespace

double AllocationMap::overall_mean() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& row : mean_layers) {
    for (double v : row) sum += v;
    n += row.size();
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

AllocationMap allocation_map(const ScaiModel& model, const data::Dataset& dataset) {
  require_pa(model);
  AllocationMap map;
  for (std::size_t l = 1; l <= model.exits(); ++l) map.mean_layers.emplace_back(model.block(l).width, 0.0);
  if (dataset.empty()) return map;

  Network net(model, false);
  for (const auto& c : dataset.curves) {
    const auto stages = net.run_all(c.values);
    for (std::size_t l = 0; l < stages.size(); ++l) {
      const auto& n = stages[l].trace.n;
      for (std::size_t j = 0; j < n.size(); ++j) map.mean_layers[l][j] += static_cast<double>(n[j]);
    }
  }
  map.samples = dataset.size();
  for (auto& row : map.mean_layers)
    for (double& v : row) v /= static_cast<double>(map.samples);
  return map;
}

void write_heatmap_csv(std::ostream& out, const AllocationMap& map) {
  out << "block,position,mean_layers\n";
  out.precision(10);
  for (std::size_t l = 0; l < map.mean_layers.size(); ++l)
    for (std::size_t j = 0; j < map.mean_layers[l].size(); ++j)
      out << l + 1 << ',' << j << ',' << map.mean_layers[l][j] << '\n';
}

std::vector<BlockContrast> allocation_contrast(const ScaiModel& model, const data::Dataset& dataset,
                                               const std::vector<data::ClassRecipe>& recipes, double margin) {
  require_pa(model);
  if (margin < 0.0) throw std::invalid_argument("allocation_contrast: margin must be non-negative");
  const std::size_t blocks = model.exits();
  std::vector<BlockContrast> out(blocks);
  std::vector<double> peak_sum(blocks, 0.0), bg_sum(blocks, 0.0);
  for (std::size_t l = 0; l < blocks; ++l) out[l].block = l + 1;

  Network net(model, false);
  for (const auto& c : dataset.curves) {
    if (c.label >= recipes.size()) {
      throw std::out_of_range("allocation_contrast: label " + std::to_string(c.label) + " has no recipe");
    }
    const auto bands = data::realized_band_positions(recipes[c.label], c.seed, dataset.width);
    const auto stages = net.run_all(c.values);
    for (std::size_t l = 0; l < blocks; ++l) {
      const double span = std::ldexp(1.0, static_cast<int>(l));
      const auto& n = stages[l].trace.n;
      for (std::size_t j = 0; j < n.size(); ++j) {
        const double lo = static_cast<double>(j) * span, hi = lo + span;
        bool peak = false;
        double nearest = INFINITY;
        for (std::size_t b : bands) {
          const double x = static_cast<double>(b);
          peak |= x >= lo && x < hi;
          nearest = std::min(nearest, x < lo ? lo - x : (x >= hi ? x - hi + 1.0 : 0.0));
        }
        if (peak) {
          peak_sum[l] += static_cast<double>(n[j]);
          ++out[l].peak_count;
        } else if (nearest > margin) {
          bg_sum[l] += static_cast<double>(n[j]);
          ++out[l].background_count;
        }
      }
    }
  }
  for (std::size_t l = 0; l < blocks; ++l) {
    if (out[l].peak_count) out[l].peak_mean = peak_sum[l] / static_cast<double>(out[l].peak_count);
    if (out[l].background_count) out[l].background_mean = bg_sum[l] / static_cast<double>(out[l].background_count);
  }
  return out;
}

}  // namespace scai::analysis
