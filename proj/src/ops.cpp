#include "scai/ops.hpp"

#include <algorithm>
#include <cblas.h>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>

namespace scai::ops {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

// Builds the result node; the backward closure is attached only when some
// parent needs a gradient.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<NodePtr> parents,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::make_shared<std::vector<double>>(std::move(values));
  const bool needs = std::any_of(parents.begin(), parents.end(), [](const NodePtr& p) { return p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward);
  }
  Tensor out(std::move(node));
#ifndef NDEBUG
  check_finite(out, "op output");
#endif
  return out;
}

std::vector<double>* grad_of(const NodePtr& p) {
  if (!p->requires_grad) return nullptr;
  p->ensure_grad();
  return &p->grad;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* arg) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// C = alpha * op(A) . op(B) + beta * C, row-major.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double beta, double* c, std::size_t ldc) {
  static std::once_flag single_thread;
  // Results must not depend on how the BLAS splits work across threads.
  std::call_once(single_thread, [] { openblas_set_num_threads(1); });
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

Tensor conv1d_gather(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
                     std::size_t padding, ColumnMask out_mask, std::size_t wout) {
  const std::size_t cin = input.dim(0), width = input.dim(1);
  const std::size_t cout = kernel.dim(0), ksize = kernel.dim(2);
  // Selected output columns, compacted.
  std::vector<std::size_t> cols;
  cols.reserve(wout);
  for (std::size_t j = 0; j < wout; ++j)
    if (out_mask.empty() || out_mask[j]) cols.push_back(j);
  const std::size_t n = cols.size();
  const std::size_t rows = cin * ksize;

  // im2col: patches[(ci, k), t] = input[ci, cols[t] * stride + k - padding], zero outside.
  auto patches = std::make_shared<std::vector<double>>(rows * n, 0.0);
  const double* x = input.data().data();
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t k = 0; k < ksize; ++k) {
      double* prow = patches->data() + (ci * ksize + k) * n;
      for (std::size_t t = 0; t < n; ++t) {
        const std::size_t pos = cols[t] * stride + k;
        if (pos >= padding && pos - padding < width) prow[t] = x[ci * width + pos - padding];
      }
    }

  std::vector<double> compact(cout * n, 0.0);
  if (bias.defined())
    for (std::size_t co = 0; co < cout; ++co) std::fill_n(compact.data() + co * n, n, bias.data()[co]);
  if (n > 0) {
    gemm(false, false, cout, n, rows, 1.0, kernel.data().data(), rows, patches->data(), n, 1.0, compact.data(), n);
  }
  std::vector<double> out(cout * wout, 0.0);
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t t = 0; t < n; ++t) out[co * wout + cols[t]] = compact[co * n + t];

  std::vector<NodePtr> parents{input.node(), kernel.node()};
  if (bias.defined()) parents.push_back(bias.node());
  auto in_node = input.node(), k_node = kernel.node();
  auto b_node = bias.defined() ? bias.node() : nullptr;
  return make_result(
      {cout, wout}, std::move(out), std::move(parents),
      [=, cols = std::move(cols)](Node& self) {
        if (n == 0) return;
        std::vector<double> g(cout * n);
        for (std::size_t co = 0; co < cout; ++co)
          for (std::size_t t = 0; t < n; ++t) g[co * n + t] = self.grad[co * wout + cols[t]];
        if (auto* gb = b_node ? grad_of(b_node) : nullptr) {
          for (std::size_t co = 0; co < cout; ++co) {
            double acc = 0.0;
            for (std::size_t t = 0; t < n; ++t) acc += g[co * n + t];
            (*gb)[co] += acc;
          }
        }
        if (auto* gw = grad_of(k_node)) {
          gemm(false, true, cout, rows, n, 1.0, g.data(), n, patches->data(), n, 1.0, gw->data(), rows);
        }
        if (auto* gx = grad_of(in_node)) {
          std::vector<double> gpatch(rows * n, 0.0);
          gemm(true, false, rows, n, cout, 1.0, k_node->value->data(), rows, g.data(), n, 0.0, gpatch.data(), n);
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t k = 0; k < ksize; ++k) {
              const double* prow = gpatch.data() + (ci * ksize + k) * n;
              for (std::size_t t = 0; t < n; ++t) {
                const std::size_t pos = cols[t] * stride + k;
                if (pos >= padding && pos - padding < width) (*gx)[ci * width + pos - padding] += prow[t];
              }
            }
        }
      });
}


// out[:, j] = b + sum_k W_k . x[:, j + k - padding], one gemm per tap on
// column-shifted views of the input. Columns outside the mask are zeroed.
Tensor conv1d_shifted(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t padding,
                      ColumnMask out_mask, std::size_t wout) {
  const std::size_t cin = input.dim(0), width = input.dim(1);
  const std::size_t cout = kernel.dim(0), ksize = kernel.dim(2);

  // Per-tap weight matrices [ksize][cout x cin].
  auto taps = std::make_shared<std::vector<double>>(ksize * cout * cin);
  const double* kv = kernel.data().data();
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t k = 0; k < ksize; ++k) (*taps)[(k * cout + co) * cin + ci] = kv[(co * cin + ci) * ksize + k];

  // Output columns j with 0 <= j + k - padding < width.
  auto span_of = [=](std::size_t k) {
    const std::size_t lo = padding > k ? padding - k : 0;
    const std::size_t hi = std::min(wout, width + padding - k);
    return std::pair{lo, hi > lo ? hi : lo};
  };

  std::vector<double> out(cout * wout, 0.0);
  if (bias.defined())
    for (std::size_t co = 0; co < cout; ++co) std::fill_n(out.data() + co * wout, wout, bias.data()[co]);
  const double* x = input.data().data();
  for (std::size_t k = 0; k < ksize; ++k) {
    const auto [lo, hi] = span_of(k);
    if (hi == lo) continue;
    gemm(false, false, cout, hi - lo, cin, 1.0, taps->data() + k * cout * cin, cin, x + lo + k - padding, width, 1.0,
         out.data() + lo, wout);
  }
  std::vector<std::uint8_t> mask(out_mask.begin(), out_mask.end());
  if (!mask.empty())
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t j = 0; j < wout; ++j)
        if (!mask[j]) out[co * wout + j] = 0.0;

  std::vector<NodePtr> parents{input.node(), kernel.node()};
  if (bias.defined()) parents.push_back(bias.node());
  auto in_node = input.node(), k_node = kernel.node();
  auto b_node = bias.defined() ? bias.node() : nullptr;
  return make_result(
      {cout, wout}, std::move(out), std::move(parents),
      [=, mask = std::move(mask)](Node& self) {
        const double* g = self.grad.data();
        std::vector<double> masked;
        if (!mask.empty()) {
          masked = self.grad;
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t j = 0; j < wout; ++j)
              if (!mask[j]) masked[co * wout + j] = 0.0;
          g = masked.data();
        }
        if (auto* gb = b_node ? grad_of(b_node) : nullptr) {
          for (std::size_t co = 0; co < cout; ++co) {
            double acc = 0.0;
            for (std::size_t j = 0; j < wout; ++j) acc += g[co * wout + j];
            (*gb)[co] += acc;
          }
        }
        const double* xv = in_node->value->data();
        auto* gw = grad_of(k_node);
        auto* gx = grad_of(in_node);
        std::vector<double> gtap(gw ? cout * cin : 0);
        for (std::size_t k = 0; k < ksize; ++k) {
          const auto [lo, hi] = span_of(k);
          if (hi == lo) continue;
          if (gw) {
            gemm(false, true, cout, cin, hi - lo, 1.0, g + lo, wout, xv + lo + k - padding, width, 0.0, gtap.data(),
                 cin);
            for (std::size_t co = 0; co < cout; ++co)
              for (std::size_t ci = 0; ci < cin; ++ci) (*gw)[(co * cin + ci) * ksize + k] += gtap[co * cin + ci];
          }
          if (gx) {
            gemm(true, false, cin, hi - lo, cout, 1.0, taps->data() + k * cout * cin, cin, g + lo, wout, 1.0,
                 gx->data() + lo + k - padding, width);
          }
        }
      });
}

}  // namespace

std::size_t conv1d_out_width(std::size_t width, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw std::invalid_argument("conv1d: stride must be positive");
  if (kernel == 0 || kernel > width + 2 * padding) {
    throw ShapeError("conv1d: kernel width " + std::to_string(kernel) + " exceeds padded input width " +
                     std::to_string(width + 2 * padding));
  }
  return (width + 2 * padding - kernel) / stride + 1;
}

Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding, ColumnMask out_mask) {
  require_rank(input, 2, "conv1d", "input");
  require_rank(kernel, 3, "conv1d", "kernel");
  const std::size_t cin = input.dim(0), width = input.dim(1);
  const std::size_t cout = kernel.dim(0), ksize = kernel.dim(2);
  if (kernel.dim(1) != cin) {
    throw ShapeError("conv1d: kernel input-channel dimension " + std::to_string(kernel.dim(1)) +
                     " does not match input channels " + std::to_string(cin));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw ShapeError("conv1d: bias dimension " + shape_str(bias.shape()) + " does not match output channels " +
                     std::to_string(cout));
  }
  const std::size_t wout = conv1d_out_width(width, ksize, stride, padding);
  if (!out_mask.empty() && out_mask.size() != wout) {
    throw ShapeError("conv1d: mask width " + std::to_string(out_mask.size()) + " does not match output width " +
                     std::to_string(wout));
  }

  std::size_t active = 0;
  for (std::size_t j = 0; j < wout; ++j) active += out_mask.empty() || out_mask[j];
  // Mostly-dense stride-1 convolutions read the input in place; sparse or
  // strided ones gather patches of the selected columns only.
  if (stride == 1 && 2 * active >= wout) return conv1d_shifted(input, kernel, bias, padding, out_mask, wout);
  return conv1d_gather(input, kernel, bias, stride, padding, out_mask, wout);
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 1, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  const std::size_t d = input.dim(0), o = weight.dim(0);
  if (weight.dim(1) != d) {
    throw ShapeError("linear: weight input dimension " + std::to_string(weight.dim(1)) +
                     " does not match input dimension " + std::to_string(d));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != o)) {
    throw ShapeError("linear: bias dimension " + shape_str(bias.shape()) + " does not match output dimension " +
                     std::to_string(o));
  }
  const auto x = input.data();
  const auto w = weight.data();
  std::vector<double> out(o);
  for (std::size_t r = 0; r < o; ++r) {
    double acc = bias.defined() ? bias.data()[r] : 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += w[r * d + c] * x[c];
    out[r] = acc;
  }
  std::vector<NodePtr> parents{input.node(), weight.node()};
  if (bias.defined()) parents.push_back(bias.node());
  auto in_node = input.node(), w_node = weight.node();
  auto b_node = bias.defined() ? bias.node() : nullptr;
  return make_result({o}, std::move(out), std::move(parents), [=](Node& self) {
    const auto& g = self.grad;
    const auto& xv = *in_node->value;
    const auto& wv = *w_node->value;
    auto* gx = grad_of(in_node);
    auto* gw = grad_of(w_node);
    auto* gb = b_node ? grad_of(b_node) : nullptr;
    for (std::size_t r = 0; r < o; ++r) {
      if (gb) (*gb)[r] += g[r];
      for (std::size_t c = 0; c < d; ++c) {
        if (gw) (*gw)[r * d + c] += g[r] * xv[c];
        if (gx) (*gx)[c] += g[r] * wv[r * d + c];
      }
    }
  });
}

Tensor relu(const Tensor& x) {
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), {xn}, [xn](Node& self) {
    auto& gx = *grad_of(xn);
    const auto& xv = *xn->value;
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xv[i] > 0.0) gx[i] += self.grad[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-v[i]));
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), {xn}, [xn](Node& self) {
    auto& gx = *grad_of(xn);
    const auto& y = *self.value;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * y[i] * (1.0 - y[i]);
  });
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 1 && x.rank() != 2) throw ShapeError("global_avg_pool: expected rank 1 or 2, got " + shape_str(x.shape()));
  const std::size_t c = x.rank() == 2 ? x.dim(0) : 1;
  const std::size_t w = x.rank() == 2 ? x.dim(1) : x.dim(0);
  if (w == 0) throw ShapeError("global_avg_pool: empty width");
  const auto v = x.data();
  std::vector<double> out(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t i = 0; i < w; ++i) acc += v[ch * w + i];
    out[ch] = acc / static_cast<double>(w);
  }
  auto xn = x.node();
  return make_result({c}, std::move(out), {xn}, [xn, c, w](Node& self) {
    auto& gx = *grad_of(xn);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double g = self.grad[ch] / static_cast<double>(w);
      for (std::size_t i = 0; i < w; ++i) gx[ch * w + i] += g;
    }
  });
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 1, "softmax", "logits");
  const auto v = logits.data();
  if (v.empty()) throw ShapeError("softmax: empty input");
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) total += out[i] = std::exp(v[i] - mx);
  for (double& o : out) o /= total;
  auto xn = logits.node();
  return make_result(logits.shape(), std::move(out), {xn}, [xn](Node& self) {
    auto& gx = *grad_of(xn);
    const auto& y = *self.value;
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += self.grad[i] * y[i];
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] += y[i] * (self.grad[i] - dot);
  });
}

Tensor cross_entropy(const Tensor& probs, std::size_t label) {
  require_rank(probs, 1, "cross_entropy", "probs");
  if (label >= probs.dim(0)) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                            std::to_string(probs.dim(0)) + ")");
  }
  const double p = probs.data()[label];
  const double pc = std::max(p, kProbClamp);
  auto pn = probs.node();
  return make_result({1}, {-std::log(pc)}, {pn}, [pn, label, clamped = p < kProbClamp](Node& self) {
    if (clamped) return;
    auto& gp = *grad_of(pn);
    gp[label] -= self.grad[0] / (*pn->value)[label];
  });
}

Tensor kl_div(const Tensor& teacher, const Tensor& student) {
  require_same(teacher, student, "kl_div");
  const auto t = teacher.data();
  const auto s = student.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double tc = std::max(t[i], kProbClamp);
    const double sc = std::max(s[i], kProbClamp);
    acc += tc * (std::log(tc) - std::log(sc));
  }
  auto sn = student.node();
  auto tv = teacher.node()->value;
  return make_result({1}, {acc}, {sn}, [sn, tv](Node& self) {
    auto& gs = *grad_of(sn);
    const auto& sv = *sn->value;
    for (std::size_t i = 0; i < gs.size(); ++i) {
      if (sv[i] < kProbClamp) continue;
      gs[i] -= self.grad[0] * std::max((*tv)[i], kProbClamp) / sv[i];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  const auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  auto an = a.node(), bn = b.node();
  return make_result(a.shape(), std::move(out), {an, bn}, [an, bn](Node& self) {
    if (auto* ga = grad_of(an))
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i];
    if (auto* gb = grad_of(bn))
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  const auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  auto an = a.node(), bn = b.node();
  return make_result(a.shape(), std::move(out), {an, bn}, [an, bn](Node& self) {
    if (auto* ga = grad_of(an))
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i];
    if (auto* gb = grad_of(bn))
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  const auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto an = a.node(), bn = b.node();
  return make_result(a.shape(), std::move(out), {an, bn}, [an, bn](Node& self) {
    if (auto* ga = grad_of(an))
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i] * (*bn->value)[i];
    if (auto* gb = grad_of(bn))
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += self.grad[i] * (*an->value)[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {an}, [an, s](Node& self) {
    auto& ga = *grad_of(an);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * s;
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + s;
  auto an = a.node();
  return make_result(a.shape(), std::move(out), {an}, [an](Node& self) {
    auto& ga = *grad_of(an);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  auto an = a.node();
  return make_result({1}, {acc}, {an}, [an](Node& self) {
    auto& ga = *grad_of(an);
    for (double& g : ga) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor add_broadcast(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw ShapeError("add_broadcast: expected single-element operand, got " + shape_str(s.shape()));
  const auto av = a.data();
  const double sv = s.data()[0];
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + sv;
  auto an = a.node(), sn = s.node();
  return make_result(a.shape(), std::move(out), {an, sn}, [an, sn](Node& self) {
    if (auto* ga = grad_of(an))
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i];
    if (auto* gs = grad_of(sn)) {
      double acc = 0.0;
      for (double g : self.grad) acc += g;
      (*gs)[0] += acc;
    }
  });
}

Tensor mul_columns(const Tensor& x, const Tensor& w) {
  require_rank(x, 2, "mul_columns", "x");
  require_rank(w, 1, "mul_columns", "w");
  const std::size_t c = x.dim(0), width = x.dim(1);
  if (w.dim(0) != width) {
    throw ShapeError("mul_columns: weight width " + std::to_string(w.dim(0)) + " does not match feature width " +
                     std::to_string(width));
  }
  const auto xv = x.data(), wv = w.data();
  std::vector<double> out(xv.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < width; ++i) out[ch * width + i] = xv[ch * width + i] * wv[i];
  auto xn = x.node(), wn = w.node();
  return make_result(x.shape(), std::move(out), {xn, wn}, [xn, wn, c, width](Node& self) {
    auto* gx = grad_of(xn);
    auto* gw = grad_of(wn);
    const auto& xv2 = *xn->value;
    const auto& wv2 = *wn->value;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < width; ++i) {
        const double g = self.grad[ch * width + i];
        if (gx) (*gx)[ch * width + i] += g * wv2[i];
        if (gw) (*gw)[i] += g * xv2[ch * width + i];
      }
    }
  });
}

Tensor where_columns(ColumnMask mask, const Tensor& a, const Tensor& b) {
  require_same(a, b, "where_columns");
  require_rank(a, 2, "where_columns", "a");
  const std::size_t c = a.dim(0), width = a.dim(1);
  if (mask.size() != width) {
    throw ShapeError("where_columns: mask width " + std::to_string(mask.size()) + " does not match feature width " +
                     std::to_string(width));
  }
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  const auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < width; ++i) out[ch * width + i] = m[i] ? av[ch * width + i] : bv[ch * width + i];
  auto an = a.node(), bn = b.node();
  return make_result(a.shape(), std::move(out), {an, bn}, [an, bn, m = std::move(m), c, width](Node& self) {
    auto* ga = grad_of(an);
    auto* gb = grad_of(bn);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < width; ++i) {
        const double g = self.grad[ch * width + i];
        if (m[i]) {
          if (ga) (*ga)[ch * width + i] += g;
        } else if (gb) {
          (*gb)[ch * width + i] += g;
        }
      }
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (scai::numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto an = a.node();
  return make_result(std::move(shape), std::move(out), {an}, [an](Node& self) {
    auto& ga = *grad_of(an);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
  });
}

}  // namespace scai::ops
