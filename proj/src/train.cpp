#include "scai/train.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "scai/adam.hpp"
#include "scai/ops.hpp"

namespace scai::train {

namespace {

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double label_ce(const Tensor& probs, std::size_t label) {
  return -std::log(std::max(probs.at(label), ops::kProbClamp));
}

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5AFEu};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

// Running per-exit tallies for one split.
struct Tally {
  std::vector<double> correct, loss;
  std::size_t count = 0;

  explicit Tally(std::size_t exits) : correct(exits, 0.0), loss(exits, 0.0) {}

  void add(const std::vector<Tensor>& probs, std::size_t label) {
    for (std::size_t l = 0; l < probs.size(); ++l) {
      if (argmax(probs[l].data()) == label) correct[l] += 1.0;
      loss[l] += label_ce(probs[l], label);
    }
    ++count;
  }

  void emit(TrainReport& report, std::size_t epoch, const std::string& split) const {
    for (std::size_t l = 0; l < correct.size(); ++l) {
      report.records.push_back({epoch, l + 1, split, correct[l] / static_cast<double>(count),
                                loss[l] / static_cast<double>(count)});
    }
  }
};

void check_split(const data::Dataset& ds, const ScaiConfig& cfg, const char* what) {
  if (ds.empty()) throw std::invalid_argument(std::string("train: empty ") + what + " split");
  if (ds.width != cfg.width) {
    throw std::invalid_argument(std::string("train: ") + what + " curves have width " + std::to_string(ds.width) +
                                ", model expects " + std::to_string(cfg.width));
  }
  for (const auto& c : ds.curves) {
    if (c.label >= cfg.classes) {
      throw std::out_of_range(std::string("train: ") + what + " label " + std::to_string(c.label) +
                              " outside [0, " + std::to_string(cfg.classes) + ")");
    }
  }
}

}  // namespace

Tensor task_loss(const std::vector<Tensor>& probs, std::size_t label, const ScaiConfig& config) {
  if (probs.empty()) throw std::invalid_argument("task_loss: no exits");
  const std::size_t last = probs.size() - 1;
  Tensor loss = ops::cross_entropy(probs[last], label);
  for (std::size_t l = 0; l < last; ++l) {
    Tensor term;
    if (config.distill_enabled) {
      const Tensor& teacher = config.teacher == Teacher::kNext ? probs[l + 1] : probs[last];
      term = ops::kl_div(teacher.detach(), probs[l]);
      if (config.intermediate_hard_labels) term = ops::add(term, ops::cross_entropy(probs[l], label));
    } else {
      term = ops::cross_entropy(probs[l], label);
    }
    loss = ops::add(loss, term);
  }
  return loss;
}

Tensor total_loss(const Tensor& task, const std::vector<Tensor>& rho, double gamma) {
  if (gamma < 0.0) throw std::invalid_argument("total_loss: gamma must be non-negative");
  Tensor out = task;
  if (gamma == 0.0) return out;
  for (const auto& r : rho) {
    if (r.defined()) out = ops::add(out, ops::scale(r, gamma));
  }
  return out;
}

const EpochRecord* TrainReport::find(std::size_t epoch, std::size_t exit, const std::string& split) const {
  for (const auto& r : records) {
    if (r.epoch == epoch && r.exit == exit && r.split == split) return &r;
  }
  return nullptr;
}

void TrainReport::write_csv(std::ostream& out) const {
  out << "epoch,exit,split,accuracy,loss\n";
  const auto old = out.precision(10);
  for (const auto& r : records) {
    out << r.epoch << ',' << r.exit << ',' << r.split << ',' << r.accuracy << ',' << r.loss << '\n';
  }
  out.precision(old);
}

void TrainReport::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_csv(out);
}

Evaluation evaluate(const ScaiModel& model, const data::Dataset& dataset) {
  const std::size_t exits = model.exits();
  Evaluation ev;
  ev.accuracy.assign(exits, 0.0);
  ev.loss.assign(exits, 0.0);
  if (model.config().pa_enabled) ev.mean_rho.assign(exits, 0.0);
  if (dataset.empty()) return ev;

  Network net(model, false);
  Tally tally(exits);
  double flops = 0.0;
  for (const auto& c : dataset.curves) {
    auto stages = net.run_all(c.values);
    std::vector<Tensor> probs;
    for (std::size_t l = 0; l < exits; ++l) {
      probs.push_back(stages[l].probs);
      flops += static_cast<double>(stages[l].macs);
      if (!ev.mean_rho.empty()) ev.mean_rho[l] += stages[l].trace.mean_rho();
    }
    tally.add(probs, c.label);
  }
  const auto n = static_cast<double>(dataset.size());
  for (std::size_t l = 0; l < exits; ++l) {
    ev.accuracy[l] = tally.correct[l] / n;
    ev.loss[l] = tally.loss[l] / n;
  }
  for (double& r : ev.mean_rho) r /= n;
  ev.mean_flops = flops / n;
  return ev;
}

TrainReport train(ScaiModel& model, const data::Dataset& train_set, const data::Dataset& valid_set,
                  const TrainOptions& options) {
  const ScaiConfig& cfg = model.config();
  check_split(train_set, cfg, "training");
  check_split(valid_set, cfg, "validation");

  const auto started = std::chrono::steady_clock::now();
  TrainReport report;
  report.seed = cfg.seed;

  const std::size_t exits = model.exits();
  Adam adam(model.params(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  Network net(model, true);
  const auto& leaves = net.leaves();
  std::vector<std::vector<double>> grads(leaves.size());
  for (std::size_t i = 0; i < leaves.size(); ++i) grads[i].resize(leaves[i].numel());

  std::vector<std::size_t> order(train_set.size());
  ParameterStore best = model.params().clone();
  double best_acc = -1.0, best_loss = 0.0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(epoch_seed(cfg.seed, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    Tally train_tally(exits);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      for (Tensor leaf : leaves) leaf.zero_grad();

      for (std::size_t k = start; k < stop; ++k) {
        const auto& sample = train_set.curves[order[k]];
        auto stages = net.run_all(sample.values);
        std::vector<Tensor> probs, rho;
        for (auto& st : stages) {
          probs.push_back(st.probs);
          rho.push_back(st.ponder);
        }
        train_tally.add(probs, sample.label);
        Tensor loss = total_loss(task_loss(probs, sample.label, cfg), rho, cfg.pa_enabled ? cfg.gamma : 0.0);
        ops::scale(loss, inv_batch).backward();
      }

      for (std::size_t i = 0; i < leaves.size(); ++i) {
        const auto g = leaves[i].grad();
        if (g.empty()) {
          std::fill(grads[i].begin(), grads[i].end(), 0.0);
        } else {
          std::copy(g.begin(), g.end(), grads[i].begin());
        }
      }
      adam.step(grads);
    }
    train_tally.emit(report, epoch, "train");

    const Evaluation ev = evaluate(model, valid_set);
    for (std::size_t l = 0; l < exits; ++l) {
      report.records.push_back({epoch, l + 1, "valid", ev.accuracy[l], ev.loss[l]});
    }
    report.stop_epoch = epoch;

    // Only a strictly higher accuracy resets patience; ties still move the
    // restore point when the final exit's loss is lower.
    const double acc = ev.accuracy.back(), loss = ev.loss.back();
    if (acc > best_acc) report.improved_epoch = epoch;
    if (acc > best_acc || (acc == best_acc && loss < best_loss)) {
      best_acc = acc;
      best_loss = loss;
      report.best_epoch = epoch;
      best.assign_values(model.params());
      if (options.checkpoint) model.save(*options.checkpoint);
    }
    if (options.on_epoch) options.on_epoch(report);
    if (epoch - report.improved_epoch >= cfg.patience) break;
  }

  model.params().assign_values(best);
  report.best_valid_accuracy = best_acc;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

std::vector<nlohmann::json> expand_grid(const nlohmann::json& grid) {
  std::vector<nlohmann::json> points;
  if (grid.is_null() || grid.empty()) return points;
  if (!grid.is_object()) throw std::invalid_argument("sweep grid must be an object of value lists");
  points.push_back(nlohmann::json::object());
  for (const auto& [key, values] : grid.items()) {
    if (!values.is_array() || values.empty()) {
      throw std::invalid_argument("sweep grid entry '" + key + "' must be a non-empty list");
    }
    std::vector<nlohmann::json> next;
    for (const auto& p : points) {
      for (const auto& v : values) {
        nlohmann::json q = p;
        q[key] = v;
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }
  return points;
}

std::vector<SweepRow> hyper_sweep(const ScaiConfig& base, const nlohmann::json& grid, const data::Dataset& train_set,
                                  const data::Dataset& valid_set, const data::Dataset& test_set) {
  std::vector<SweepRow> rows;
  for (const auto& point : expand_grid(grid)) {
    SweepRow row;
    row.overrides = point;
    row.config = base;
    from_json(point, row.config);
    row.config.validate();
    ScaiModel model = ScaiModel::build(row.config);
    row.report = train(model, train_set, valid_set);
    row.test = evaluate(model, test_set);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  std::vector<std::string> keys;
  std::size_t max_exits = 0;
  for (const auto& r : rows) {
    for (const auto& [k, v] : r.overrides.items()) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
    max_exits = std::max(max_exits, r.test.accuracy.size());
  }
  for (const auto& k : keys) out << k << ',';
  out << "best_epoch,stop_epoch,mean_flops";
  for (std::size_t l = 1; l <= max_exits; ++l) out << ",test_acc_" << l;
  out << '\n';
  const auto old = out.precision(10);
  for (const auto& r : rows) {
    for (const auto& k : keys) {
      if (r.overrides.contains(k)) {
        const auto& v = r.overrides.at(k);
        if (v.is_string()) {
          out << v.get<std::string>();
        } else {
          std::string s = v.dump();
          std::replace(s.begin(), s.end(), ',', ';');
          out << s;
        }
      }
      out << ',';
    }
    out << r.report.best_epoch << ',' << r.report.stop_epoch << ',' << r.test.mean_flops;
    for (std::size_t l = 0; l < max_exits; ++l) {
      out << ',';
      if (l < r.test.accuracy.size()) out << r.test.accuracy[l];
    }
    out << '\n';
  }
  out.precision(old);
}

}  // namespace scai::train
