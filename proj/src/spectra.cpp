#include "scai/spectra.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace scai::data {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void validate(const ClassRecipe& r, std::size_t width) {
  const auto w = static_cast<double>(width);
  for (const auto& p : r.peaks) {
    if (!(p.center >= 0.0 && p.center < w)) {
      throw std::invalid_argument("recipe " + r.name + ": peak center " + std::to_string(p.center) +
                                  " outside [0, " + std::to_string(width) + ")");
    }
    if (!(p.width > 0.0)) throw std::invalid_argument("recipe " + r.name + ": peak width must be positive");
    if (p.amplitude < 0.0) throw std::invalid_argument("recipe " + r.name + ": negative peak amplitude");
  }
  if (r.background.amplitude < 0.0 || !(r.background.width > 0.0)) {
    throw std::invalid_argument("recipe " + r.name + ": bad background");
  }
  if (r.noise_level < 0.0 || r.amplitude_jitter < 0.0 || r.amplitude_jitter >= 1.0 || r.shift_jitter < 0.0 ||
      r.drift < 0.0) {
    throw std::invalid_argument("recipe " + r.name + ": bad noise or jitter setting");
  }
  if (!(r.jitter_lo > 0.0) || r.jitter_hi < r.jitter_lo) {
    throw std::invalid_argument("recipe " + r.name + ": intensity jitter range must satisfy 0 < lo <= hi");
  }
}

void add_gaussian(std::vector<double>& v, double center, double width, double amplitude) {
  const double inv = 1.0 / (2.0 * width * width);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = static_cast<double>(i) - center;
    v[i] += amplitude * std::exp(-d * d * inv);
  }
}

void append_double(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  out.append(buf, end);
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
  throw ParseError(source + ":" + std::to_string(line) + ": " + what);
}

template <typename T>
T parse_number(std::string_view tok, const std::string& source, std::size_t line) {
  T v{};
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    fail(source, line, "bad number '" + std::string(tok) + "'");
  }
  return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::vector<double> normalize(std::span<const double> values) {
  if (values.empty()) throw DegenerateCurveError("cannot normalize an empty curve");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0) || !std::isfinite(range)) {
    throw DegenerateCurveError("degenerate curve: constant or non-finite intensities");
  }
  std::vector<double> out(values.size());
  const double base = *lo;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - base) / range;
  return out;
}

SpectralCurve synth_curve(const ClassRecipe& recipe, std::size_t width, std::mt19937_64& rng) {
  validate(recipe, width);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<double> v(width, 0.0);
  const double drift = recipe.drift * unit(rng);
  for (const auto& p : recipe.peaks) {
    const double shift = drift + recipe.shift_jitter * unit(rng);
    const double amp = p.amplitude * (1.0 + recipe.amplitude_jitter * unit(rng));
    add_gaussian(v, p.center + shift, p.width, amp);
  }
  {
    const auto& b = recipe.background;
    const double amp = b.amplitude * (1.0 + recipe.amplitude_jitter * unit(rng));
    add_gaussian(v, b.center + drift, b.width, amp);
  }
  if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) {
    throw DegenerateCurveError("recipe " + recipe.name + " produces an all-zero curve");
  }
  if (recipe.noise_level > 0.0) {
    for (double& x : v) x += recipe.noise_level * noise(rng);
  }
  const double scale =
      recipe.jitter_hi > recipe.jitter_lo
          ? std::uniform_real_distribution<double>(recipe.jitter_lo, recipe.jitter_hi)(rng)
          : recipe.jitter_lo;
  for (double& x : v) x *= scale;

  SpectralCurve c;
  c.values = normalize(v);
  return c;
}

std::vector<ClassRecipe> default_recipes(std::size_t width) {
  if (width < 40) throw std::invalid_argument("default recipes need width >= 40");
  const double f = static_cast<double>(width) / 400.0;

  // Dominant bands shared by every class.
  const std::vector<Peak> ethanol = {
      {88 * f, 4 * f, 1.0}, {176 * f, 5 * f, 0.55}, {232 * f, 3.5 * f, 0.75}, {300 * f, 6 * f, 0.35}};
  const Peak group_bg[3] = {{160 * f, 90 * f, 0.5}, {220 * f, 80 * f, 0.45}, {260 * f, 100 * f, 0.35}};
  const std::size_t group_size[3] = {3, 3, 6};
  const char* group_name[3] = {"sauce", "strong", "light"};

  // Minor bands are drawn once from a fixed generator and then frozen.
  std::mt19937_64 rng(0x5EC7A);
  // Each class has its own minor band width, so the class shows locally as
  // well as through band positions.
  std::uniform_real_distribution<double> pos(20.0, 380.0), wid(0.9, 1.1), amp(0.6, 1.0);
  auto clear_of_ethanol = [&](double c) {
    return std::all_of(ethanol.begin(), ethanol.end(), [&](const Peak& p) { return std::abs(p.center / f - c) > 12.0; });
  };

  std::vector<ClassRecipe> out;
  std::size_t index = 0;
  for (std::size_t g = 0; g < 3; ++g) {
    for (std::size_t k = 0; k < group_size[g]; ++k) {
      ClassRecipe r;
      r.name = std::string(group_name[g]) + "-" + std::to_string(k + 1);
      r.peaks = ethanol;
      for (int m = 0; m < 5; ++m) {
        double c;
        do c = pos(rng);
        while (!clear_of_ethanol(c));
        r.peaks.push_back({c * f, (1.5 + 0.5 * static_cast<double>(index)) * wid(rng) * f, amp(rng)});
      }
      r.background = group_bg[g];
      r.noise_level = 0.03;
      r.jitter_lo = 0.8;
      r.jitter_hi = 1.2;
      r.amplitude_jitter = 0.25;
      r.shift_jitter = 3.0 * f;
      r.drift = 20.0 * f;
      out.push_back(std::move(r));
      ++index;
    }
  }
  return out;
}

std::vector<std::size_t> band_positions(const std::vector<ClassRecipe>& recipes, std::size_t width) {
  std::vector<std::size_t> out;
  for (const auto& r : recipes) {
    for (const auto& p : r.peaks) {
      const auto i = static_cast<std::size_t>(std::lround(p.center));
      if (i < width) out.push_back(i);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::size_t> realized_band_positions(const ClassRecipe& recipe, std::uint64_t seed, std::size_t width) {
  // Same draw order as synth_curve.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double drift = recipe.drift * unit(rng);
  std::vector<std::size_t> out;
  for (const auto& p : recipe.peaks) {
    const double c = std::round(p.center + drift + recipe.shift_jitter * unit(rng));
    unit(rng);
    if (c >= 0.0 && c < static_cast<double>(width)) out.push_back(static_cast<std::size_t>(c));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::uint64_t curve_seed(std::uint64_t master, std::size_t label, std::size_t k) {
  return splitmix64(splitmix64(master ^ (static_cast<std::uint64_t>(label) << 32)) + k);
}

Dataset build_dataset(const std::vector<ClassRecipe>& recipes, std::size_t per_class, std::size_t width,
                      std::uint64_t seed) {
  if (recipes.empty()) throw std::invalid_argument("build_dataset: no recipes");
  if (width == 0) throw std::invalid_argument("build_dataset: width must be positive");
  Dataset ds;
  ds.width = width;
  ds.curves.reserve(recipes.size() * per_class);
  std::uint64_t id = 0;
  for (std::size_t label = 0; label < recipes.size(); ++label) {
    for (std::size_t k = 0; k < per_class; ++k) {
      const std::uint64_t s = curve_seed(seed, label, k);
      std::mt19937_64 rng(s);
      SpectralCurve c = synth_curve(recipes[label], width, rng);
      c.label = label;
      c.sample_id = id++;
      c.seed = s;
      ds.curves.push_back(std::move(c));
    }
  }
  return ds;
}

Split split(const Dataset& dataset, std::array<std::size_t, 3> ratios, std::uint64_t seed) {
  const std::size_t total = ratios[0] + ratios[1] + ratios[2];
  if (total == 0) throw std::invalid_argument("split: ratios sum to zero");
  std::size_t classes = 0;
  for (const auto& c : dataset.curves) classes = std::max(classes, c.label + 1);
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < dataset.curves.size(); ++i) by_class[dataset.curves[i].label].push_back(i);

  Split out;
  out.train.width = out.valid.width = out.test.width = dataset.width;
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> picks(3);
  for (std::size_t label = 0; label < classes; ++label) {
    auto& idx = by_class[label];
    if (idx.size() % total != 0) {
      throw std::invalid_argument("split: class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                                  " samples, not divisible by ratio sum " + std::to_string(total));
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t unit = idx.size() / total;
    std::size_t at = 0;
    for (std::size_t part = 0; part < 3; ++part) {
      for (std::size_t k = 0; k < ratios[part] * unit; ++k) picks[part].push_back(idx[at++]);
    }
  }
  Dataset* parts[3] = {&out.train, &out.valid, &out.test};
  for (std::size_t part = 0; part < 3; ++part) {
    std::sort(picks[part].begin(), picks[part].end());
    for (auto i : picks[part]) parts[part]->curves.push_back(dataset.curves[i]);
  }
  return out;
}

std::string to_csv(const Dataset& dataset) {
  std::string out = "sample_id,label";
  for (std::size_t i = 0; i < dataset.width; ++i) out += ",v_" + std::to_string(i);
  out += '\n';
  for (const auto& c : dataset.curves) {
    if (c.values.size() != dataset.width) {
      throw std::invalid_argument("to_csv: curve " + std::to_string(c.sample_id) + " has width " +
                                  std::to_string(c.values.size()) + ", dataset width " + std::to_string(dataset.width));
    }
    out += std::to_string(c.sample_id);
    out += ',';
    out += std::to_string(c.label);
    for (double v : c.values) {
      out += ',';
      append_double(out, v);
    }
    out += '\n';
  }
  return out;
}

Dataset parse_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) fail(source, lineno, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  if (header.size() < 2 || header[0] != "sample_id" || header[1] != "label") {
    fail(source, lineno, "header must start with sample_id,label");
  }
  Dataset ds;
  ds.width = header.size() - 2;
  for (std::size_t i = 0; i < ds.width; ++i) {
    if (header[i + 2] != "v_" + std::to_string(i)) fail(source, lineno, "unexpected column '" + std::string(header[i + 2]) + "'");
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      fail(source, lineno, "expected " + std::to_string(header.size()) + " columns, got " + std::to_string(cells.size()));
    }
    SpectralCurve c;
    c.sample_id = parse_number<std::uint64_t>(cells[0], source, lineno);
    c.label = parse_number<std::size_t>(cells[1], source, lineno);
    c.values.reserve(ds.width);
    for (std::size_t i = 2; i < cells.size(); ++i) c.values.push_back(parse_number<double>(cells[i], source, lineno));
    ds.curves.push_back(std::move(c));
  }
  return ds;
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_csv(dataset);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), path.string());
}

void to_json(nlohmann::json& j, const Peak& p) {
  j = {{"center", p.center}, {"width", p.width}, {"amplitude", p.amplitude}};
}

void from_json(const nlohmann::json& j, Peak& p) {
  j.at("center").get_to(p.center);
  j.at("width").get_to(p.width);
  j.at("amplitude").get_to(p.amplitude);
}

void to_json(nlohmann::json& j, const ClassRecipe& r) {
  j = {{"name", r.name},
       {"peaks", r.peaks},
       {"background", r.background},
       {"noise_level", r.noise_level},
       {"intensity_jitter", {r.jitter_lo, r.jitter_hi}},
       {"amplitude_jitter", r.amplitude_jitter},
       {"shift_jitter", r.shift_jitter},
       {"drift", r.drift}};
}

void from_json(const nlohmann::json& j, ClassRecipe& r) {
  j.at("name").get_to(r.name);
  j.at("peaks").get_to(r.peaks);
  j.at("background").get_to(r.background);
  r.noise_level = j.value("noise_level", 0.0);
  if (j.contains("intensity_jitter")) {
    const auto& jit = j.at("intensity_jitter");
    if (!jit.is_array() || jit.size() != 2) throw std::invalid_argument("recipe " + r.name + ": intensity_jitter must be [lo, hi]");
    r.jitter_lo = jit[0].get<double>();
    r.jitter_hi = jit[1].get<double>();
  }
  r.amplitude_jitter = j.value("amplitude_jitter", 0.0);
  r.shift_jitter = j.value("shift_jitter", 0.0);
  r.drift = j.value("drift", 0.0);
}

void save_recipes(const std::vector<ClassRecipe>& recipes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << nlohmann::json{{"classes", recipes}}.dump(2) << '\n';
}

std::vector<ClassRecipe> load_recipes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in).at("classes").get<std::vector<ClassRecipe>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace scai::data
