#include <sstream>
#include <string>

#include "doctest.h"
#include "fixtures.hpp"
#include "scai/allocation.hpp"

using namespace scai;

TEST_CASE("untrained model allocates the same layers everywhere") {
  const auto model = ScaiModel::build(fixtures::tiny_config());
  const auto map = analysis::allocation_map(model, fixtures::tiny_dataset());
  REQUIRE(map.mean_layers.size() == 4);
  CHECK(map.samples == 120);
  // sigma(0) = 0.5 at every unit: the running total crosses 1 - eps at unit 2.
  for (std::size_t l = 0; l < 4; ++l) {
    CHECK(map.mean_layers[l].size() == model.block(l + 1).width);
    for (double v : map.mean_layers[l]) CHECK(v == 2.0);
  }
  CHECK(map.overall_mean() == 2.0);
}

TEST_CASE("heatmap csv spans every block position") {
  const auto model = ScaiModel::build(fixtures::tiny_config());
  data::Dataset few = fixtures::tiny_dataset();
  few.curves.resize(3);
  const auto map = analysis::allocation_map(model, few);
  std::ostringstream out;
  analysis::write_heatmap_csv(out, map);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "block,position,mean_layers");
  std::size_t rows = 0, expected = 0;
  while (std::getline(in, line)) ++rows;
  for (std::size_t l = 1; l <= 4; ++l) expected += model.block(l).width;
  CHECK(rows == expected);
}

TEST_CASE("plain models have no allocation to report") {
  auto cfg = fixtures::tiny_config();
  cfg.set_variant("scai");
  const auto model = ScaiModel::build(cfg);
  CHECK_THROWS_AS(analysis::allocation_map(model, fixtures::tiny_dataset()), std::invalid_argument);
  CHECK_THROWS_AS(analysis::allocation_contrast(model, fixtures::tiny_dataset(), data::default_recipes(40), 2.0),
                  std::invalid_argument);
}

TEST_CASE("contrast partitions positions into peak and background") {
  const auto model = ScaiModel::build(fixtures::tiny_config());
  const auto contrast =
      analysis::allocation_contrast(model, fixtures::tiny_dataset(), data::default_recipes(40), 0.0);
  REQUIRE(contrast.size() == 4);
  for (std::size_t l = 0; l < 4; ++l) {
    CHECK(contrast[l].block == l + 1);
    CHECK(contrast[l].peak_count > 0);
    // With no margin every position is one or the other.
    CHECK(contrast[l].peak_count + contrast[l].background_count == 120 * model.block(l + 1).width);
    CHECK(contrast[l].peak_mean == 2.0);
    CHECK(contrast[l].background_mean == 2.0);
  }
}
