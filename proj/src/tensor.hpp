#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace wdistill {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct Node;
using BackwardFn = std::function<void(Node&)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
  const char* op = "leaf";

  std::vector<double>& grad_buffer();
  bool is_leaf() const { return inputs.empty(); }
};

}  // namespace detail

// Dense row-major tensor of doubles with reverse-mode autodiff.
//
// A Tensor is a cheap handle; copies share the underlying node. Values of
// non-leaf tensors are never modified after creation. Leaves may be updated
// in place through mutable_data() (optimizers, checkpoint loading).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Populates grads of every requires_grad leaf reachable from this scalar.
  void backward() const;

  // New leaf holding a copy of the values, disconnected from any graph.
  Tensor detach(bool requires_grad = false) const;

  const char* op_name() const;

  // Internal: used by the op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Grad recording is on by default and tracked per thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

// Builds an op result. Records the backward closure only when grad mode is on
// and at least one input requires grad. Throws NumericError on non-finite
// output values.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   const char* op, BackwardFn backward);

}  // namespace detail

}  // namespace wdistill
