#include "scai/config.hpp"

#include <stdexcept>

#include "scai/ops.hpp"

namespace scai {

void ScaiConfig::validate() const {
  auto bad = [](const std::string& what) { throw std::invalid_argument("invalid config: " + what); };
  if (blocks < 1) bad("blocks must be >= 1");
  if (units.size() != blocks) bad("units must list one entry per block");
  if (channels.size() != blocks) bad("channels must list one entry per block");
  for (auto s : units)
    if (s < 1) bad("every block needs at least one unit");
  for (auto c : channels)
    if (c < 1) bad("channel counts must be positive");
  if (width < 1) bad("width must be positive");
  if (classes < 1) bad("classes must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) bad("epsilon must lie in (0, 1)");
  if (!(gamma >= 0.0)) bad("gamma must be >= 0");
  if (!(lr > 0.0)) bad("lr must be positive");
  if (batch_size < 1) bad("batch_size must be positive");
}

std::size_t ScaiConfig::block_width(std::size_t l) const {
  if (l < 1 || l > blocks) throw std::out_of_range("block index " + std::to_string(l) + " outside [1, blocks]");
  std::size_t w = width;
  for (std::size_t i = 1; i < l; ++i) w = ops::conv1d_out_width(w, 3, 2, 1);
  return w;
}

std::string ScaiConfig::variant() const {
  if (!pa_enabled) return "scai";
  return distill_enabled ? "scai+" : "scai+nokd";
}

void ScaiConfig::set_variant(const std::string& name) {
  if (name == "scai") {
    pa_enabled = false;
    distill_enabled = true;
  } else if (name == "scai+") {
    pa_enabled = true;
    distill_enabled = true;
  } else if (name == "scai+nokd") {
    pa_enabled = true;
    distill_enabled = false;
  } else {
    throw std::invalid_argument("unknown variant '" + name + "' (expected scai, scai+ or scai+nokd)");
  }
}

void to_json(nlohmann::json& j, const ScaiConfig& c) {
  j = nlohmann::json{{"blocks", c.blocks},
                     {"units", c.units},
                     {"width", c.width},
                     {"channels", c.channels},
                     {"classes", c.classes},
                     {"pa_enabled", c.pa_enabled},
                     {"epsilon", c.epsilon},
                     {"gamma", c.gamma},
                     {"halt_bias_init", c.halt_bias_init},
                     {"distill_enabled", c.distill_enabled},
                     {"teacher", c.teacher == Teacher::kFinal ? "final" : "next"},
                     {"intermediate_hard_labels", c.intermediate_hard_labels},
                     {"lr", c.lr},
                     {"batch_size", c.batch_size},
                     {"max_epochs", c.max_epochs},
                     {"patience", c.patience},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ScaiConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("blocks", c.blocks);
  get("units", c.units);
  get("width", c.width);
  get("channels", c.channels);
  get("classes", c.classes);
  get("pa_enabled", c.pa_enabled);
  get("epsilon", c.epsilon);
  get("gamma", c.gamma);
  get("halt_bias_init", c.halt_bias_init);
  get("distill_enabled", c.distill_enabled);
  if (j.contains("teacher")) {
    const auto t = j.at("teacher").get<std::string>();
    if (t == "final") {
      c.teacher = Teacher::kFinal;
    } else if (t == "next") {
      c.teacher = Teacher::kNext;
    } else {
      throw std::invalid_argument("unknown teacher '" + t + "' (expected final or next)");
    }
  }
  get("intermediate_hard_labels", c.intermediate_hard_labels);
  get("lr", c.lr);
  get("batch_size", c.batch_size);
  get("max_epochs", c.max_epochs);
  get("patience", c.patience);
  get("seed", c.seed);
  // A bare block count with default-length lists: trim or extend them.
  if (j.contains("blocks") && !j.contains("units")) c.units.resize(c.blocks, c.units.empty() ? 4 : c.units.back());
  if (j.contains("blocks") && !j.contains("channels")) {
    const std::size_t old = c.channels.size();
    c.channels.resize(c.blocks);
    for (std::size_t i = old; i < c.blocks; ++i) c.channels[i] = i ? c.channels[i - 1] * 2 : 16;
  }
}

}  // namespace scai
