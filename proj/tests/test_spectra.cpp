#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "scai/spectra.hpp"

using namespace scai::data;

namespace {

ClassRecipe single_peak(double center, double width, double amplitude) {
  ClassRecipe r;
  r.name = "single";
  r.peaks = {{center, width, amplitude}};
  r.background = {200.0, 50.0, 0.0};
  return r;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("scai_test_" + name);
}

}  // namespace

TEST_CASE("synth_curve is deterministic in the generator state") {
  auto r = default_recipes(400)[3];
  r.noise_level = 0.0;
  r.jitter_lo = r.jitter_hi = 1.0;
  std::mt19937_64 a(42), b(42);
  CHECK(synth_curve(r, 400, a).values == synth_curve(r, 400, b).values);
}

TEST_CASE("single peak recipe peaks at its center") {
  std::mt19937_64 rng(1);
  const auto c = synth_curve(single_peak(200.0, 5.0, 1.0), 400, rng);
  const auto it = std::max_element(c.values.begin(), c.values.end());
  const auto pos = static_cast<long>(it - c.values.begin());
  CHECK(std::abs(pos - 200) <= 1);
  CHECK(*it == doctest::Approx(1.0));
  CHECK(*std::min_element(c.values.begin(), c.values.end()) >= 0.0);
}

TEST_CASE("zero amplitude recipe is rejected as degenerate") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(synth_curve(single_peak(200.0, 5.0, 0.0), 400, rng), DegenerateCurveError);
}

TEST_CASE("recipe validation") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(synth_curve(single_peak(400.0, 5.0, 1.0), 400, rng), std::invalid_argument);
  CHECK_THROWS_AS(synth_curve(single_peak(-1.0, 5.0, 1.0), 400, rng), std::invalid_argument);
  CHECK_THROWS_AS(synth_curve(single_peak(10.0, 0.0, 1.0), 400, rng), std::invalid_argument);
}

TEST_CASE("normalization maps to [0, 1] and is idempotent") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> d(3.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(64);
    for (double& v : x) v = d(rng);
    const auto n1 = normalize(x);
    const auto n2 = normalize(n1);
    CHECK(*std::max_element(n1.begin(), n1.end()) == 1.0);
    CHECK(*std::min_element(n1.begin(), n1.end()) == 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(n2[i] == doctest::Approx(n1[i]).epsilon(1e-15));
  }
  CHECK_THROWS_AS(normalize(std::vector<double>(5, 2.0)), DegenerateCurveError);
  CHECK_THROWS_AS(normalize(std::vector<double>{}), DegenerateCurveError);
}

TEST_CASE("default recipes share dominant bands and differ in minor ones") {
  const auto recipes = default_recipes(400);
  REQUIRE(recipes.size() == 12);
  std::set<std::string> names;
  for (const auto& r : recipes) {
    names.insert(r.name);
    REQUIRE(r.peaks.size() > 4);
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(r.peaks[k].center == recipes[0].peaks[k].center);
      CHECK(r.peaks[k].amplitude == recipes[0].peaks[k].amplitude);
    }
    for (const auto& p : r.peaks) {
      CHECK(p.center >= 0.0);
      CHECK(p.center < 400.0);
      CHECK(p.amplitude > 0.0);
    }
  }
  CHECK(names.size() == 12);
  // Group backgrounds: 3 + 3 + 6.
  CHECK(recipes[0].background.center == recipes[2].background.center);
  CHECK(recipes[3].background.center == recipes[5].background.center);
  CHECK(recipes[6].background.center == recipes[11].background.center);
  CHECK(recipes[0].background.center != recipes[3].background.center);
  CHECK(recipes[3].background.center != recipes[6].background.center);
}

TEST_CASE("build_dataset counts and determinism") {
  const auto recipes = default_recipes(400);
  const auto ds = build_dataset(recipes, 100, 400, 11);
  CHECK(ds.size() == 1200);
  std::vector<int> per(12, 0);
  for (const auto& c : ds.curves) {
    ++per[c.label];
    CHECK(c.values.size() == 400);
    CHECK(*std::max_element(c.values.begin(), c.values.end()) == 1.0);
    CHECK(*std::min_element(c.values.begin(), c.values.end()) >= 0.0);
  }
  for (int n : per) CHECK(n == 100);

  CHECK(build_dataset(recipes, 1, 400, 11).size() == 12);
  CHECK(to_csv(build_dataset(recipes, 5, 400, 3)) == to_csv(build_dataset(recipes, 5, 400, 3)));
  CHECK(to_csv(build_dataset(recipes, 5, 400, 3)) != to_csv(build_dataset(recipes, 5, 400, 4)));
}

TEST_CASE("stratified split") {
  const auto ds = build_dataset(default_recipes(400), 100, 400, 5);
  const auto sp = split(ds, {8, 1, 1}, 1);
  CHECK(sp.train.size() == 960);
  CHECK(sp.valid.size() == 120);
  CHECK(sp.test.size() == 120);
  for (const auto* part : {&sp.train, &sp.valid, &sp.test}) {
    std::vector<int> per(12, 0);
    for (const auto& c : part->curves) ++per[c.label];
    const int want = static_cast<int>(part->size() / 12);
    for (int n : per) CHECK(n == want);
  }
  std::set<std::uint64_t> ids;
  for (const auto* part : {&sp.train, &sp.valid, &sp.test}) {
    for (const auto& c : part->curves) CHECK(ids.insert(c.sample_id).second);
  }
  CHECK(ids.size() == ds.size());

  const auto other = split(ds, {8, 1, 1}, 2);
  CHECK(other.test.size() == sp.test.size());
  bool differs = false;
  for (std::size_t i = 0; i < sp.test.size(); ++i) differs |= sp.test.curves[i].sample_id != other.test.curves[i].sample_id;
  CHECK(differs);

  CHECK_THROWS_AS(split(build_dataset(default_recipes(400), 7, 400, 5), {8, 1, 1}, 1), std::invalid_argument);
}

TEST_CASE("csv round trip is lossless") {
  const auto ds = build_dataset(default_recipes(400), 3, 400, 21);
  const auto path = temp_file("roundtrip.csv");
  save_csv(ds, path);
  const auto back = load_csv(path);
  REQUIRE(back.size() == ds.size());
  CHECK(back.width == ds.width);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.curves[i].values == ds.curves[i].values);
    CHECK(back.curves[i].label == ds.curves[i].label);
    CHECK(back.curves[i].sample_id == ds.curves[i].sample_id);
  }
  std::filesystem::remove(path);
}

TEST_CASE("empty dataset writes a header-only file") {
  Dataset ds;
  ds.width = 3;
  CHECK(to_csv(ds) == "sample_id,label,v_0,v_1,v_2\n");
  const auto back = parse_csv(to_csv(ds));
  CHECK(back.width == 3);
  CHECK(back.empty());
}

TEST_CASE("malformed csv names the line") {
  const std::string text = "sample_id,label,v_0,v_1\n0,1,0.5,0.25\n1,2,0.5\n";
  try {
    parse_csv(text, "bad.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("bad.csv:3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_csv("sample_id,label,v_0\n0,x,1\n"), ParseError);
  CHECK_THROWS_AS(parse_csv("id,label,v_0\n"), ParseError);
}

TEST_CASE("recipe json round trip") {
  const auto recipes = default_recipes(400);
  const auto path = temp_file("recipes.json");
  save_recipes(recipes, path);
  const auto back = load_recipes(path);
  REQUIRE(back.size() == recipes.size());
  std::mt19937_64 a(3), b(3);
  CHECK(synth_curve(recipes[7], 400, a).values == synth_curve(back[7], 400, b).values);
  std::filesystem::remove(path);
}

TEST_CASE("realized band positions replay the drawn drift") {
  ClassRecipe r;
  r.name = "drifting";
  r.peaks = {{150.0, 3.0, 1.0}};
  r.background = {200.0, 50.0, 0.0};
  r.noise_level = 0.0;
  r.drift = 25.0;
  r.shift_jitter = 4.0;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    std::mt19937_64 rng(seed);
    const auto c = synth_curve(r, 400, rng);
    const auto peak = static_cast<std::size_t>(std::max_element(c.values.begin(), c.values.end()) - c.values.begin());
    const auto pos = realized_band_positions(r, seed, 400);
    REQUIRE(pos.size() == 1);
    CHECK(std::abs(static_cast<long>(pos[0]) - static_cast<long>(peak)) <= 1);
  }
}
