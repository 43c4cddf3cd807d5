#pragma once

#include "scai/config.hpp"
#include "scai/network.hpp"
#include "scai/spectra.hpp"

namespace fixtures {

// Small network over 40-wide curves; fast enough for many forward passes.
inline scai::ScaiConfig tiny_config(std::uint64_t seed = 1) {
  scai::ScaiConfig c;
  c.width = 40;
  c.channels = {4, 8, 8, 8};
  c.units = {2, 2, 2, 2};
  c.seed = seed;
  return c;
}

inline const scai::data::Dataset& tiny_dataset() {
  static const auto ds = scai::data::build_dataset(scai::data::default_recipes(40), 10, 40, 99);
  return ds;
}

}  // namespace fixtures
