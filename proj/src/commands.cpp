#include "scai/commands.hpp"

#include <fstream>
#include <sstream>

#include "scai/allocation.hpp"
#include "scai/exit_policy.hpp"
#include "scai/iot.hpp"
#include "scai/train.hpp"

namespace scai::cli {
namespace fs = std::filesystem;
namespace {

void require_file(const std::optional<fs::path>& path, const char* what) {
  if (!path) throw UsageError(std::string("missing required ") + what);
  if (!fs::is_regular_file(*path)) throw UsageError(std::string(what) + " not found: " + path->string());
}

fs::path output(const RunConfig& run, const char* name) {
  fs::create_directories(run.out_dir);
  return run.out_dir / name;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

ScaiModel load_model(const RunConfig& run) {
  require_file(run.checkpoint, "checkpoint");
  return ScaiModel::load(*run.checkpoint);
}

data::Split split_for(const RunConfig& run, std::size_t width) {
  return data::split(resolve_dataset(run, width), {8, 1, 1}, run.seed);
}

}  // namespace

ScaiConfig resolve_model_config(const RunConfig& run) {
  ScaiConfig cfg;
  if (run.config_file) {
    require_file(run.config_file, "config file");
    std::ifstream in(*run.config_file);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(run.config_file->string() + ": " + e.what());
    }
    from_json(j, cfg);
  }
  from_json(run.overrides, cfg);
  if (run.variant) cfg.set_variant(*run.variant);
  cfg.seed = run.seed;
  cfg.validate();
  return cfg;
}

data::Dataset resolve_dataset(const RunConfig& run, std::size_t width) {
  if (!run.dataset) return data::build_dataset(data::default_recipes(width), run.per_class, width, run.seed);
  require_file(run.dataset, "dataset");
  auto ds = data::load_csv(*run.dataset);
  if (ds.width != width) {
    throw UsageError("dataset " + run.dataset->string() + " has width " + std::to_string(ds.width) +
                     ", model expects " + std::to_string(width));
  }
  return ds;
}

std::vector<double> default_budget_grid(const ScaiModel& model) {
  const double full = static_cast<double>(model.static_costs().back());
  std::vector<double> grid;
  for (int i = 1; i <= 20; ++i) grid.push_back(full * 0.05 * i);
  return grid;
}

std::vector<fs::path> cmd_gen(const RunConfig& run) {
  const auto cfg = resolve_model_config(run);
  const auto recipes = data::default_recipes(cfg.width);
  const auto ds = data::build_dataset(recipes, run.per_class, cfg.width, run.seed);
  const auto curves = output(run, "dataset.csv"), rec = output(run, "recipes.json");
  data::save_csv(ds, curves);
  data::save_recipes(recipes, rec);
  return {curves, rec};
}

std::vector<fs::path> cmd_train(const RunConfig& run) {
  const auto cfg = resolve_model_config(run);
  const auto sp = split_for(run, cfg.width);
  auto model = ScaiModel::build(cfg);
  const auto report = train::train(model, sp.train, sp.valid);
  const auto ckpt = output(run, "model.ckpt"), csv = output(run, "train_report.csv");
  model.save(ckpt);
  report.save_csv(csv);
  return {ckpt, csv};
}

std::vector<fs::path> cmd_eval(const RunConfig& run) {
  const auto model = load_model(run);
  const auto sp = split_for(run, model.config().width);
  const auto ev = train::evaluate(model, sp.test);
  const auto costs = model.static_costs();
  const auto path = output(run, "eval.csv");
  auto out = open_out(path);
  out.precision(10);
  out << "exit,accuracy,loss,mean_rho,static_flops\n";
  for (std::size_t l = 0; l < ev.accuracy.size(); ++l) {
    out << l + 1 << ',' << ev.accuracy[l] << ',' << ev.loss[l] << ',';
    if (l < ev.mean_rho.size()) out << ev.mean_rho[l];
    out << ',' << costs[l] << '\n';
  }
  return {path};
}

std::vector<fs::path> cmd_curves(const RunConfig& run) {
  const auto model = load_model(run);
  const auto sp = split_for(run, model.config().width);
  const auto grid = run.budgets ? *run.budgets : default_budget_grid(model);
  std::vector<fs::path> written;
  for (const char* mode : {"anytime", "budgeted"}) {
    const auto points = policy::accuracy_vs_budget_curve(model, sp.valid, sp.test, mode, grid);
    const auto path = output(run, mode == std::string("anytime") ? "curve_anytime.csv" : "curve_budgeted.csv");
    auto out = open_out(path);
    policy::write_curve_csv(out, points);
    written.push_back(path);
  }
  return written;
}

std::vector<fs::path> cmd_heatmap(const RunConfig& run) {
  const auto model = load_model(run);
  if (!model.config().pa_enabled) {
    throw UsageError("heatmap needs a scai+ checkpoint; " + run.checkpoint->string() +
                     " runs every unit at every position");
  }
  const auto sp = split_for(run, model.config().width);
  const auto map = analysis::allocation_map(model, sp.test);
  const auto path = output(run, "heatmap.csv");
  auto out = open_out(path);
  analysis::write_heatmap_csv(out, map);
  return {path};
}

std::vector<fs::path> cmd_simulate(const RunConfig& run) {
  require_file(run.scenario, "scenario");
  const auto model = load_model(run);
  const auto scenario = iot::load_scenario(*run.scenario);
  const auto sp = split_for(run, model.config().width);

  std::vector<double> theta;
  if (run.thresholds) {
    require_file(run.thresholds, "thresholds file");
    theta = policy::load_thresholds(*run.thresholds);
    if (theta.size() != model.exits()) {
      throw UsageError("thresholds file has " + std::to_string(theta.size()) + " exits, model has " +
                       std::to_string(model.exits()));
    }
  } else {
    const auto q = policy::exit_probabilities(run.q, model.exits()).q;
    theta = policy::calibrate_thresholds(policy::exit_confidences(model, sp.valid), q);
  }

  const auto result = iot::simulate(model, theta, scenario, sp.test);
  const auto th = output(run, "thresholds.csv"), report = output(run, "latency.csv"),
             samples = output(run, "samples.csv");
  policy::save_thresholds(theta, th);
  {
    auto out = open_out(report);
    iot::latency_report(out, result);
  }
  {
    auto out = open_out(samples);
    iot::write_samples_csv(out, result);
  }
  return {th, report, samples};
}

std::vector<fs::path> cmd_sweep(const RunConfig& run) {
  require_file(run.grid, "grid file");
  nlohmann::json grid;
  {
    std::ifstream in(*run.grid);
    try {
      in >> grid;
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(run.grid->string() + ": " + e.what());
    }
  }
  const auto base = resolve_model_config(run);
  const auto sp = split_for(run, base.width);
  const auto rows = train::hyper_sweep(base, grid, sp.train, sp.valid, sp.test);
  const auto path = output(run, "sweep.csv");
  auto out = open_out(path);
  train::write_sweep_csv(out, rows);
  return {path};
}

}  // namespace scai::cli
