#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace scai {

/// Which exit supervises intermediate classifiers during self-distillation.
enum class Teacher {
  kFinal,  // every intermediate exit learns from the deepest exit
  kNext,   // exit l learns from exit l+1
};

/// Architecture, halting and training hyperparameters.
struct ScaiConfig {
  // architecture
  std::size_t blocks = 4;
  std::vector<std::size_t> units{4, 4, 4, 4};
  std::size_t width = 400;
  std::vector<std::size_t> channels{16, 32, 64, 128};
  std::size_t classes = 12;

  // halting
  bool pa_enabled = true;
  double epsilon = 0.02;
  double gamma = 1e-5;
  double halt_bias_init = 0.0;

  // training
  bool distill_enabled = true;
  Teacher teacher = Teacher::kFinal;
  bool intermediate_hard_labels = false;  // adds CE on every intermediate exit
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 500;
  std::size_t patience = 50;

  std::uint64_t seed = 1;

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;

  /// Input width of block l (1-based).
  std::size_t block_width(std::size_t l) const;

  /// "scai", "scai+" or "scai+nokd".
  std::string variant() const;
  /// Applies a variant name to pa_enabled/distill_enabled.
  void set_variant(const std::string& name);
};

void to_json(nlohmann::json& j, const ScaiConfig& c);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, ScaiConfig& c);

}  // namespace scai
