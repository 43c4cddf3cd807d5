#include "scai/pa_resnet.hpp"

#include <numeric>
#include <ostream>
#include <stdexcept>

namespace scai::pa {

namespace {

Tensor unit_forward(const ResidualUnit& unit, const Tensor& x, ops::ColumnMask active) {
  return ops::conv1d(ops::relu(x), unit.conv_weight, unit.conv_bias, 1, 1, active);
}

Tensor mask_tensor(const std::vector<std::uint8_t>& m) {
  std::vector<double> v(m.begin(), m.end());
  return Tensor::from({m.size()}, std::move(v));
}

}  // namespace

std::uint64_t unit_macs(std::size_t channels, std::size_t positions) {
  return static_cast<std::uint64_t>(channels) * channels * 3 * positions;
}

std::uint64_t halting_macs(std::size_t channels, std::size_t width, std::size_t positions) {
  // local 3-tap conv on evaluated positions + global pool + global linear
  return static_cast<std::uint64_t>(channels) * 3 * positions + static_cast<std::uint64_t>(channels) * width +
         channels;
}

Tensor halting_score(const Tensor& x, const HaltingParams& params, ops::ColumnMask active) {
  if (x.rank() != 2) throw ShapeError("halting_score: expected [C x W] input, got " + shape_str(x.shape()));
  const std::size_t c = x.dim(0), w = x.dim(1);
  if (params.conv_weight.rank() != 3 || params.conv_weight.dim(1) != c) {
    throw ShapeError("halting_score: conv weight " + shape_str(params.conv_weight.shape()) +
                     " does not match input channels " + std::to_string(c));
  }
  if (params.global_weight.rank() != 2 || params.global_weight.dim(1) != c) {
    throw ShapeError("halting_score: global weight " + shape_str(params.global_weight.shape()) +
                     " does not match input channels " + std::to_string(c));
  }
  Tensor local = ops::conv1d(x, params.conv_weight, params.bias, 1, 1, active);          // [1 x W]
  Tensor global = ops::linear(ops::global_avg_pool(x), params.global_weight, Tensor());  // [1]
  return ops::reshape(ops::sigmoid(ops::add_broadcast(local, global)), {w});
}

Schedule halting_schedule(std::span<const double> h, double epsilon) {
  if (h.empty()) throw std::invalid_argument("halting_schedule: no layers");
  Schedule s;
  s.p.assign(h.size(), 0.0);
  double cumulative = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double before = cumulative;
    cumulative += h[i];
    if (cumulative < 1.0 - epsilon && i + 1 < h.size()) {
      s.p[i] = h[i];
    } else {
      s.n = i + 1;
      s.r = 1.0 - before;
      s.p[i] = s.r;
      break;
    }
  }
  return s;
}

double HaltingTrace::mean_rho() const {
  if (rho.empty()) return 0.0;
  return std::accumulate(rho.begin(), rho.end(), 0.0) / static_cast<double>(rho.size());
}

double HaltingTrace::mean_layers() const {
  if (n.empty()) return 0.0;
  double total = 0.0;
  for (auto v : n) total += static_cast<double>(v);
  return total / static_cast<double>(n.size());
}

double ponder_cost_block(const HaltingTrace& trace) { return trace.mean_rho(); }

void write_trace_csv(std::ostream& out, const HaltingTrace& trace) {
  out << "position";
  for (std::size_t s = 0; s < trace.units; ++s) out << ",p_" << (s + 1);
  out << ",n,r,rho\n";
  for (std::size_t i = 0; i < trace.width; ++i) {
    out << i;
    for (std::size_t s = 0; s < trace.units; ++s) out << ',' << trace.p_at(i, s);
    out << ',' << trace.n[i] << ',' << trace.r[i] << ',' << trace.rho[i] << '\n';
  }
}

BlockResult pa_block_forward(const Tensor& x_in, std::span<const ResidualUnit> units,
                             std::span<const HaltingParams> halts, double epsilon) {
  const std::size_t depth = units.size();
  if (depth == 0) throw std::invalid_argument("pa_block_forward: block needs at least one unit");
  if (halts.size() + 1 != depth) {
    throw std::invalid_argument("pa_block_forward: expected " + std::to_string(depth - 1) + " halting branches, got " +
                                std::to_string(halts.size()));
  }
  if (x_in.rank() != 2) throw ShapeError("pa_block_forward: expected [C x W] input, got " + shape_str(x_in.shape()));
  const std::size_t channels = x_in.dim(0), width = x_in.dim(1);

  BlockResult res;
  HaltingTrace& tr = res.trace;
  tr.width = width;
  tr.units = depth;
  tr.h.assign(width * depth, 0.0);
  tr.p.assign(width * depth, 0.0);
  tr.n.assign(width, 0);
  tr.r.assign(width, 0.0);
  tr.rho.assign(width, 0.0);

  std::vector<std::uint8_t> active(width, 1);
  std::vector<double> cumulative(width, 0.0);
  std::size_t active_count = width;

  Tensor xhat = x_in;
  Tensor output;
  Tensor spent = Tensor::zeros({width});  // differentiable running sum of continuing scores
  Tensor rho = Tensor::zeros({width});

  for (std::size_t s = 0; s < depth; ++s) {
    if (active_count == 0) break;
    ++tr.layers_run;

    // Features: F(x)+x at active positions, copy elsewhere.
    Tensor f = unit_forward(units[s], xhat, active);
    Tensor x = ops::where_columns(active, ops::add(xhat, f), xhat);
    res.macs += unit_macs(channels, active_count);

    // Scores.
    Tensor h;
    if (s + 1 < depth) {
      h = halting_score(x, halts[s], active);
      res.macs += halting_macs(channels, width, active_count);
    } else {
      h = Tensor::full({width}, 1.0);
    }
    const auto hv = h.data();

    // Halting decisions.
    std::vector<std::uint8_t> cont(width, 0), halt(width, 0), was_active = active;
    for (std::size_t i = 0; i < width; ++i) {
      if (!active[i]) continue;
      tr.h[i * depth + s] = hv[i];
      const double before = cumulative[i];
      cumulative[i] += hv[i];
      tr.rho[i] += 1.0;
      if (cumulative[i] < 1.0 - epsilon && s + 1 < depth) {
        cont[i] = 1;
        tr.p[i * depth + s] = hv[i];
      } else {
        halt[i] = 1;
        tr.r[i] = 1.0 - before;
        tr.p[i * depth + s] = tr.r[i];
        tr.rho[i] += tr.r[i];
        tr.n[i] = s + 1;
        active[i] = 0;
        --active_count;
      }
    }

    const Tensor cont_t = mask_tensor(cont), halt_t = mask_tensor(halt);
    const Tensor h_cont = ops::mul(h, cont_t);
    const Tensor retainer = ops::add_scalar(ops::scale(spent, -1.0), 1.0);
    const Tensor r_halt = ops::mul(retainer, halt_t);
    const Tensor weight = ops::add(h_cont, r_halt);
    const Tensor contrib = ops::mul_columns(x, weight);
    output = output.defined() ? ops::add(output, contrib) : contrib;
    rho = ops::add(rho, ops::add(mask_tensor(was_active), r_halt));
    spent = ops::add(spent, h_cont);
    res.layers.push_back(x);
    xhat = x;
  }

  res.output = output;
  res.ponder = ops::mean(rho);
  return res;
}

PlainResult plain_block_forward(const Tensor& x_in, std::span<const ResidualUnit> units) {
  if (x_in.rank() != 2) throw ShapeError("plain_block_forward: expected [C x W] input, got " + shape_str(x_in.shape()));
  PlainResult res;
  Tensor x = x_in;
  for (const auto& u : units) {
    x = ops::add(x, unit_forward(u, x, {}));
    res.macs += unit_macs(x_in.dim(0), x_in.dim(1));
  }
  res.output = x;
  return res;
}

}  // namespace scai::pa
