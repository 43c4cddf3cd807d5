#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace scai {

using Shape = std::vector<std::size_t>;

/// Thrown when operand extents do not line up. The message names the
/// offending dimension.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

struct Node {
  Shape shape;
  // Shared so that parameter leaves can alias the optimizer-owned storage
  // without copying; nothing writes through a leaf during forward/backward.
  std::shared_ptr<std::vector<double>> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this->grad into parents' grads.
  std::function<void(Node&)> backward_fn;

  void ensure_grad();
};

}  // namespace detail

/// Dense row-major tensor of doubles with reverse-mode autodiff.
///
/// A Tensor is a cheap handle; copies share the underlying node. Operations
/// that receive at least one operand with requires_grad() record a backward
/// closure, so a forward pass over constants builds no graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Leaf aliasing external storage. Shape must match the buffer length.
  static Tensor alias(Shape shape, std::shared_ptr<std::vector<double>> storage,
                      bool requires_grad);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  /// Gradient buffer; empty until backward() has reached this tensor.
  std::span<const double> grad() const;
  void zero_grad();

  /// Seeds d(this)/d(this) = 1 and propagates through the recorded graph.
  /// Only valid on single-element tensors.
  void backward() const;

  /// Same values, cut from the graph.
  Tensor detach() const;

  /// Internal: construct from a computed node.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Throws std::domain_error when any value is NaN or infinite.
void check_finite(const Tensor& t, const char* where);

}  // namespace scai
