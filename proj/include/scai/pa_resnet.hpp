#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "scai/ops.hpp"
#include "scai/tensor.hpp"

namespace scai::pa {

/// Residual unit F(x) = conv3(relu(x)), channel-preserving.
struct ResidualUnit {
  Tensor conv_weight;  // [C x C x 3]
  Tensor conv_bias;    // [C]
};

/// Halting branch of one residual unit: a single-output 3-tap convolution
/// for local context plus a linear map of the globally pooled features.
struct HaltingParams {
  Tensor conv_weight;    // [1 x C x 3]
  Tensor bias;           // [1]
  Tensor global_weight;  // [1 x C]
};

/// sigma(conv3(x) + global . pool(x) + b) per position -> [W].
///
/// With a non-empty `active` mask only selected positions get the local
/// term; the others carry sigma(global + 0) and must not be consumed.
Tensor halting_score(const Tensor& x, const HaltingParams& params, ops::ColumnMask active = {});

struct Schedule {
  std::size_t n = 0;          // layers executed, 1-based
  double r = 0.0;             // retainer
  std::vector<double> p;      // per-layer weight, sums to 1
};

/// Layer count, retainer and weight distribution for one position given its
/// per-layer halting scores. The last score is expected to be 1; a running
/// total that never reaches 1 - epsilon halts on the last layer anyway.
Schedule halting_schedule(std::span<const double> h, double epsilon);

/// Per-position record of one block's halting behaviour. Position-major
/// [W x S] layout for h and p.
struct HaltingTrace {
  std::size_t width = 0;
  std::size_t units = 0;
  std::size_t layers_run = 0;  // units executed before the block broke out
  std::vector<double> h;
  std::vector<double> p;
  std::vector<std::size_t> n;
  std::vector<double> r;
  std::vector<double> rho;

  double h_at(std::size_t pos, std::size_t unit) const { return h[pos * units + unit]; }
  double p_at(std::size_t pos, std::size_t unit) const { return p[pos * units + unit]; }
  double mean_rho() const;
  double mean_layers() const;
};

/// Mean over positions of rho = N + R.
double ponder_cost_block(const HaltingTrace& trace);

/// Writes "position,p_1,...,p_S,n,r,rho" rows.
void write_trace_csv(std::ostream& out, const HaltingTrace& trace);

struct BlockResult {
  Tensor output;      // [C x W]
  Tensor ponder;      // [1], differentiable mean rho
  HaltingTrace trace;
  std::uint64_t macs = 0;
  std::vector<Tensor> layers;  // running features x_s of each executed unit
};

/// Position-adaptive block. `halts` holds one entry per unit except the
/// last, whose score is fixed at 1. Active positions receive F(x) + x; halted
/// positions are copied unchanged; the block stops early once every
/// position has halted.
BlockResult pa_block_forward(const Tensor& x_in, std::span<const ResidualUnit> units,
                             std::span<const HaltingParams> halts, double epsilon);

struct PlainResult {
  Tensor output;
  std::uint64_t macs = 0;
};

/// Halting-free residual stack: x <- F_s(x) + x for every unit.
PlainResult plain_block_forward(const Tensor& x_in, std::span<const ResidualUnit> units);

/// Multiply-accumulates of one residual unit applied to `positions` columns.
std::uint64_t unit_macs(std::size_t channels, std::size_t positions);
/// Multiply-accumulates of one halting branch evaluation.
std::uint64_t halting_macs(std::size_t channels, std::size_t width, std::size_t positions);

}  // namespace scai::pa
