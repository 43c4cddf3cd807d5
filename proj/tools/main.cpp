#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "scai/commands.hpp"

namespace {

using scai::cli::RunConfig;

// key=value; the value is read as JSON when it parses, otherwise as a string.
void apply_set(RunConfig& run, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw scai::cli::UsageError("--set expects key=value, got '" + kv + "'");
  const auto key = kv.substr(0, eq), value = kv.substr(eq + 1);
  auto parsed = nlohmann::json::parse(value, nullptr, false);
  run.overrides[key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Early-exit spectral classifier: data, training, evaluation and edge simulation"};
  app.require_subcommand(1);

  RunConfig run;
  if (const char* env = std::getenv("SCAI_OUT_DIR"); env && *env) run.out_dir = env;

  std::string out_dir, dataset, checkpoint, config, variant, thresholds, scenario, grid;
  std::vector<std::string> sets;
  std::vector<double> budgets;
  bool no_budgets = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("-o,--out", out_dir, "Output directory (default: $SCAI_OUT_DIR or ./out)");
    sub->add_option("--seed", run.seed, "Master seed for data, split and initialization")->capture_default_str();
    sub->add_option("--data", dataset, "Curve CSV (default: generate the synthetic set from --seed)");
    sub->add_option("--per-class", run.per_class, "Curves per class when generating")->capture_default_str();
  };
  auto model_opts = [&](CLI::App* sub) {
    sub->add_option("--config", config, "Model/training JSON");
    sub->add_option("--set", sets, "Override a config key, e.g. --set gamma=1e-4");
    sub->add_option("--variant", variant, "scai, scai+ or scai+nokd")
        ->check(CLI::IsMember({"scai", "scai+", "scai+nokd"}));
  };
  auto needs_checkpoint = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", checkpoint, "Trained model")->required();
  };

  auto* gen = app.add_subcommand("gen", "Write the synthetic dataset and its recipes");
  common(gen);
  model_opts(gen);

  auto* tr = app.add_subcommand("train", "Train a model; writes model.ckpt and train_report.csv");
  common(tr);
  model_opts(tr);

  auto* ev = app.add_subcommand("eval", "Per-exit test accuracy of a checkpoint");
  common(ev);
  needs_checkpoint(ev);

  auto* cu = app.add_subcommand("curves", "Accuracy against per-sample budget, anytime and budgeted");
  common(cu);
  needs_checkpoint(cu);
  cu->add_option("--budgets", budgets, "Per-sample budgets in MACs (default: 5%..100% of the full cost)");
  cu->add_flag("--no-budgets", no_budgets, "Use an empty budget grid");

  auto* hm = app.add_subcommand("heatmap", "Mean layers executed per block position");
  common(hm);
  needs_checkpoint(hm);

  auto* si = app.add_subcommand("simulate", "Edge/server offloading simulation");
  common(si);
  needs_checkpoint(si);
  si->add_option("--scenario", scenario, "Scenario JSON")->required();
  si->add_option("--thresholds", thresholds, "Exit thresholds CSV (default: calibrate on the validation split)");
  si->add_option("--q", run.q, "Exit distribution parameter used for calibration")->capture_default_str();

  auto* sw = app.add_subcommand("sweep", "Train one model per grid point");
  common(sw);
  model_opts(sw);
  sw->add_option("--grid", grid, "Grid JSON, e.g. {\"blocks\": [1, 2, 3, 4]}")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (!out_dir.empty()) run.out_dir = out_dir;
    if (!dataset.empty()) run.dataset = dataset;
    if (!checkpoint.empty()) run.checkpoint = checkpoint;
    if (!config.empty()) run.config_file = config;
    if (!variant.empty()) run.variant = variant;
    if (!thresholds.empty()) run.thresholds = thresholds;
    if (!scenario.empty()) run.scenario = scenario;
    if (!grid.empty()) run.grid = grid;
    if (no_budgets) {
      run.budgets = std::vector<double>{};
    } else if (!budgets.empty()) {
      run.budgets = budgets;
    }
    for (const auto& kv : sets) apply_set(run, kv);

    std::vector<std::filesystem::path> written;
    if (gen->parsed()) written = scai::cli::cmd_gen(run);
    if (tr->parsed()) written = scai::cli::cmd_train(run);
    if (ev->parsed()) written = scai::cli::cmd_eval(run);
    if (cu->parsed()) written = scai::cli::cmd_curves(run);
    if (hm->parsed()) written = scai::cli::cmd_heatmap(run);
    if (si->parsed()) written = scai::cli::cmd_simulate(run);
    if (sw->parsed()) written = scai::cli::cmd_sweep(run);
    for (const auto& p : written) std::cout << p.string() << '\n';
  } catch (const scai::cli::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
