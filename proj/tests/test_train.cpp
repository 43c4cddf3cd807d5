#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "scai/ops.hpp"
#include "scai/train.hpp"

using namespace scai;

namespace {

Tensor probs_from(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::from({n}, std::move(v));
}

std::vector<double> uniform(std::size_t n) { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

// Two classes, one peak each, far apart.
data::Dataset toy_two_class(std::size_t per_class) {
  std::vector<data::ClassRecipe> recipes(2);
  for (std::size_t k = 0; k < 2; ++k) {
    recipes[k].name = "toy" + std::to_string(k);
    recipes[k].peaks = {{k == 0 ? 10.0 : 30.0, 2.0, 1.0}};
    recipes[k].background = {20.0, 20.0, 0.1};
    recipes[k].noise_level = 0.01;
  }
  return data::build_dataset(recipes, per_class, 40, 5);
}

ScaiConfig toy_config() {
  ScaiConfig c;
  c.blocks = 2;
  c.units = {1, 2};
  c.channels = {4, 4};
  c.width = 40;
  c.classes = 2;
  c.lr = 1e-2;
  c.batch_size = 8;
  c.max_epochs = 200;
  c.patience = 200;
  return c;
}

}  // namespace

TEST_CASE("task loss with a single exit is cross-entropy") {
  ScaiConfig cfg;
  const auto p = probs_from({0.2, 0.5, 0.3});
  CHECK(train::task_loss({p}, 1, cfg).item() == doctest::Approx(-std::log(0.5)));
}

TEST_CASE("identical exits contribute no distillation loss") {
  ScaiConfig cfg;
  const std::vector<double> v{0.1, 0.7, 0.2};
  const auto loss = train::task_loss({probs_from(v), probs_from(v), probs_from(v)}, 2, cfg);
  CHECK(loss.item() == doctest::Approx(-std::log(0.2)).epsilon(1e-12));
}

TEST_CASE("distillation from a one-hot teacher to a uniform student") {
  ScaiConfig cfg;
  std::vector<double> onehot(12, 0.0);
  onehot[0] = 1.0;
  const auto loss = train::task_loss({probs_from(uniform(12)), probs_from(onehot)}, 0, cfg);
  CHECK(loss.item() == doctest::Approx(std::log(12.0)).epsilon(1e-9));
  CHECK(loss.item() == doctest::Approx(2.4849).epsilon(1e-4));
}

TEST_CASE("ablation sums cross-entropy over every exit") {
  ScaiConfig cfg;
  cfg.distill_enabled = false;
  const auto a = probs_from({0.25, 0.75}), b = probs_from({0.5, 0.5}), c = probs_from({0.9, 0.1});
  CHECK(train::task_loss({a, b, c}, 0, cfg).item() ==
        doctest::Approx(-std::log(0.25) - std::log(0.5) - std::log(0.9)));
}

TEST_CASE("next-exit teacher and intermediate hard labels") {
  ScaiConfig cfg;
  const auto a = probs_from({0.25, 0.75}), b = probs_from({0.5, 0.5}), c = probs_from({0.9, 0.1});
  auto kl = [](const Tensor& t, const Tensor& s) { return ops::kl_div(t, s).item(); };
  cfg.teacher = Teacher::kNext;
  CHECK(train::task_loss({a, b, c}, 0, cfg).item() == doctest::Approx(kl(b, a) + kl(c, b) - std::log(0.9)));
  cfg.teacher = Teacher::kFinal;
  cfg.intermediate_hard_labels = true;
  CHECK(train::task_loss({a, b, c}, 0, cfg).item() ==
        doctest::Approx(kl(c, a) + kl(c, b) - std::log(0.25) - std::log(0.5) - std::log(0.9)));
}

TEST_CASE("task loss rejects bad labels") {
  ScaiConfig cfg;
  CHECK_THROWS_AS(train::task_loss({probs_from({0.5, 0.5})}, 2, cfg), std::out_of_range);
}

TEST_CASE("task loss is non-negative and the teacher gets no distillation gradient") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> d(0.0, 2.0);
  ScaiConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> logits, probs;
    for (int l = 0; l < 4; ++l) {
      std::vector<double> v(5);
      for (double& x : v) x = d(rng);
      logits.push_back(Tensor::from({5}, v, true));
      probs.push_back(ops::softmax(logits.back()));
    }
    const auto loss = train::task_loss(probs, 3, cfg);
    CHECK(loss.item() >= 0.0);
    loss.backward();

    // The last exit's gradient must equal that of its cross-entropy alone.
    auto solo_logits = Tensor::from({5}, std::vector<double>(logits[3].data().begin(), logits[3].data().end()), true);
    ops::cross_entropy(ops::softmax(solo_logits), 3).backward();
    for (std::size_t i = 0; i < 5; ++i) CHECK(logits[3].grad()[i] == doctest::Approx(solo_logits.grad()[i]));
  }
}

TEST_CASE("total loss adds the ponder cost") {
  const auto task = Tensor::scalar(1.0);
  std::vector<Tensor> rho(4, Tensor::scalar(2.0));
  CHECK(train::total_loss(task, rho, 0.0).item() == 1.0);
  CHECK(train::total_loss(task, rho, 1e-5).item() == doctest::Approx(1.00008).epsilon(1e-12));
  CHECK(train::total_loss(task, {Tensor(), Tensor()}, 1e-5).item() == 1.0);
  CHECK(train::total_loss(task, rho, 1e-5).item() >= task.item());
}

TEST_CASE("separable toy problem is learned") {
  const auto ds = toy_two_class(20);
  const auto sp = data::split(ds, {8, 1, 1}, 3);
  auto model = ScaiModel::build(toy_config());
  const auto report = train::train(model, sp.train, sp.valid);
  bool reached = false;
  for (const auto& r : report.records) reached |= r.split == "train" && r.exit == 2 && r.accuracy == 1.0;
  CHECK(reached);
  CHECK(train::evaluate(model, sp.train).accuracy.back() == 1.0);
}

TEST_CASE("early stopping honours patience and restores the best parameters") {
  auto cfg = fixtures::tiny_config();
  cfg.max_epochs = 40;
  cfg.patience = 3;
  const auto sp = data::split(fixtures::tiny_dataset(), {8, 1, 1}, 1);
  auto model = ScaiModel::build(cfg);
  const auto report = train::train(model, sp.train, sp.valid);
  CHECK(report.improved_epoch <= report.best_epoch);
  CHECK(report.best_epoch <= report.stop_epoch);
  CHECK(report.stop_epoch <= cfg.max_epochs);
  if (report.stop_epoch < cfg.max_epochs) CHECK(report.stop_epoch - report.improved_epoch == cfg.patience);
  const auto* best = report.find(report.best_epoch, cfg.blocks, "valid");
  REQUIRE(best != nullptr);
  const auto restored = train::evaluate(model, sp.valid);
  CHECK(restored.accuracy.back() == best->accuracy);
  CHECK(restored.loss.back() == best->loss);
  CHECK(report.best_valid_accuracy == best->accuracy);
  // Nothing seen beats the restored epoch on accuracy, or on loss at equal accuracy.
  for (const auto& r : report.records) {
    if (r.split != "valid" || r.exit != cfg.blocks) continue;
    CHECK(r.accuracy <= best->accuracy);
    if (r.accuracy == best->accuracy) CHECK(r.loss >= best->loss);
  }
}

TEST_CASE("training is deterministic") {
  auto cfg = fixtures::tiny_config(4);
  cfg.max_epochs = 3;
  const auto sp = data::split(fixtures::tiny_dataset(), {8, 1, 1}, 1);
  auto a = ScaiModel::build(cfg), b = ScaiModel::build(cfg);
  const auto ra = train::train(a, sp.train, sp.valid);
  const auto rb = train::train(b, sp.train, sp.valid);
  std::ostringstream sa, sb;
  ra.write_csv(sa);
  rb.write_csv(sb);
  CHECK(sa.str() == sb.str());
  CHECK(a.params() == b.params());
}

TEST_CASE("training rejects empty splits") {
  auto model = ScaiModel::build(fixtures::tiny_config());
  data::Dataset empty;
  empty.width = 40;
  CHECK_THROWS_AS(train::train(model, empty, fixtures::tiny_dataset()), std::invalid_argument);
  CHECK_THROWS_AS(train::train(model, fixtures::tiny_dataset(), empty), std::invalid_argument);
}

TEST_CASE("report csv layout") {
  train::TrainReport r;
  r.records.push_back({1, 2, "valid", 0.5, 1.25});
  std::ostringstream out;
  r.write_csv(out);
  CHECK(out.str() == "epoch,exit,split,accuracy,loss\n1,2,valid,0.5,1.25\n");
}

TEST_CASE("grid expansion") {
  CHECK(train::expand_grid(nlohmann::json::object()).empty());
  CHECK(train::expand_grid(nullptr).empty());
  const auto blocks = train::expand_grid({{"blocks", {1, 2, 3, 4}}});
  REQUIRE(blocks.size() == 4);
  CHECK(blocks[2]["blocks"] == 3);
  const auto eps = train::expand_grid({{"epsilon", {0.01, 0.02, 0.05, 0.1, 0.2}}, {"gamma", {1e-5, 1e-4}}});
  CHECK(eps.size() == 10);
  CHECK(eps[1]["epsilon"] == 0.01);
  CHECK(eps[1]["gamma"] == 1e-4);
  CHECK_THROWS_AS(train::expand_grid({{"epsilon", 0.1}}), std::invalid_argument);
}

TEST_CASE("sweep over block counts") {
  auto base = fixtures::tiny_config();
  base.max_epochs = 1;
  const auto sp = data::split(fixtures::tiny_dataset(), {8, 1, 1}, 1);
  const auto rows = train::hyper_sweep(base, {{"blocks", {1, 2, 3, 4}}}, sp.train, sp.valid, sp.test);
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(rows[i].test.accuracy.size() == i + 1);
  std::ostringstream out;
  train::write_sweep_csv(out, rows);
  std::string header;
  std::istringstream in(out.str());
  std::getline(in, header);
  CHECK(header == "blocks,best_epoch,stop_epoch,mean_flops,test_acc_1,test_acc_2,test_acc_3,test_acc_4");
  CHECK(train::hyper_sweep(base, nlohmann::json::object(), sp.train, sp.valid, sp.test).empty());
}

TEST_CASE("stronger ponder regularization does not raise depth") {
  const auto sp = data::split(fixtures::tiny_dataset(), {8, 1, 1}, 1);
  double low = 0.0, high = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (double gamma : {1e-6, 1e-3}) {
      auto cfg = fixtures::tiny_config(seed);
      cfg.max_epochs = 10;
      cfg.gamma = gamma;
      auto model = ScaiModel::build(cfg);
      train::train(model, sp.train, sp.valid);
      double rho = 0.0;
      for (double r : train::evaluate(model, sp.train).mean_rho) rho += r;
      (gamma < 1e-4 ? low : high) += rho;
    }
  }
  CHECK(high <= low);
}
