#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace scai::data {

/// Gaussian band: amplitude * exp(-(x - center)^2 / (2 width^2)).
struct Peak {
  double center = 0.0;  // position index, may be fractional
  double width = 1.0;
  double amplitude = 0.0;
};

/// Generative description of one class of curves.
struct ClassRecipe {
  std::string name;
  std::vector<Peak> peaks;     // shared ethanol bands followed by class-specific minor bands
  Peak background;             // broad fluorescence hump
  double noise_level = 0.0;    // white noise stddev before normalization
  double jitter_lo = 1.0;      // global intensity scale range
  double jitter_hi = 1.0;
  double amplitude_jitter = 0.0;  // relative per-peak amplitude spread
  double shift_jitter = 0.0;      // +- positions each peak may move on its own
  double drift = 0.0;             // +- positions the whole curve may move per sample
};

struct SpectralCurve {
  std::vector<double> values;
  std::size_t label = 0;
  std::uint64_t sample_id = 0;
  std::uint64_t seed = 0;
};

struct Dataset {
  std::size_t width = 0;
  std::vector<SpectralCurve> curves;

  std::size_t size() const { return curves.size(); }
  bool empty() const { return curves.empty(); }
};

class DegenerateCurveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-curve min-max scaling to [0, 1]. Throws DegenerateCurveError on a
/// constant curve.
std::vector<double> normalize(std::span<const double> values);

/// Draws one normalized curve of the given width. Label, id and seed are
/// left for the caller.
SpectralCurve synth_curve(const ClassRecipe& recipe, std::size_t width, std::mt19937_64& rng);

/// The twelve built-in classes: three flavour groups of 3, 3 and 6 classes
/// sharing ethanol bands, each group with its own fluorescence background,
/// each class with its own minor bands. Positions scale with `width`.
std::vector<ClassRecipe> default_recipes(std::size_t width);

/// Positions (rounded centers) of every recipe band, shared and minor.
std::vector<std::size_t> band_positions(const std::vector<ClassRecipe>& recipes, std::size_t width);

/// Peak centres actually drawn for the curve synthesised from `seed`.
std::vector<std::size_t> realized_band_positions(const ClassRecipe& recipe, std::uint64_t seed, std::size_t width);

/// Seed of the k-th curve of a class, derived from the master seed.
std::uint64_t curve_seed(std::uint64_t master, std::size_t label, std::size_t k);

/// per_class curves for each recipe; label = recipe index.
Dataset build_dataset(const std::vector<ClassRecipe>& recipes, std::size_t per_class, std::size_t width,
                      std::uint64_t seed);

struct Split {
  Dataset train, valid, test;
};

/// Stratified split. Each class must divide exactly by the ratio sum (for
/// 8:1:1 a multiple of 10), otherwise std::invalid_argument.
Split split(const Dataset& dataset, std::array<std::size_t, 3> ratios, std::uint64_t seed);

/// CSV with header sample_id,label,v_0..v_{W-1}; 17 significant digits.
void save_csv(const Dataset& dataset, const std::filesystem::path& path);
/// ParseError names the offending line on malformed input.
Dataset load_csv(const std::filesystem::path& path);
std::string to_csv(const Dataset& dataset);
Dataset parse_csv(const std::string& text, const std::string& source = "<memory>");

void to_json(nlohmann::json& j, const Peak& p);
void from_json(const nlohmann::json& j, Peak& p);
void to_json(nlohmann::json& j, const ClassRecipe& r);
void from_json(const nlohmann::json& j, ClassRecipe& r);

void save_recipes(const std::vector<ClassRecipe>& recipes, const std::filesystem::path& path);
std::vector<ClassRecipe> load_recipes(const std::filesystem::path& path);

}  // namespace scai::data
