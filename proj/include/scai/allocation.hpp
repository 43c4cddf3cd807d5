#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "scai/network.hpp"
#include "scai/spectra.hpp"

namespace scai::analysis {

/// Mean number of residual units executed at each position of every block.
struct AllocationMap {
  std::vector<std::vector<double>> mean_layers;  // [block][position]
  std::size_t samples = 0;

  /// Mean over every position of every block.
  double overall_mean() const;
};

/// Throws std::invalid_argument for models without position-adaptive blocks.
AllocationMap allocation_map(const ScaiModel& model, const data::Dataset& dataset);

/// "block,position,mean_layers" rows, block and position 1- and 0-based.
void write_heatmap_csv(std::ostream& out, const AllocationMap& map);

/// Layers spent at band positions versus positions far from every band.
struct BlockContrast {
  std::size_t block = 0;
  double peak_mean = 0.0;
  double background_mean = 0.0;
  std::size_t peak_count = 0;
  std::size_t background_count = 0;
};

/// Bands are the peak centres each curve was actually drawn with, replayed
/// from its seed. A block-l position j covers inputs [j*2^(l-1), (j+1)*2^(l-1));
/// it counts as a peak position if a band falls inside that span and as
/// background if its span is more than `margin` inputs from every band.
std::vector<BlockContrast> allocation_contrast(const ScaiModel& model, const data::Dataset& dataset,
                                               const std::vector<data::ClassRecipe>& recipes, double margin);

}  // namespace scai::analysis
