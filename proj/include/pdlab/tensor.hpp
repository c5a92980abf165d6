#pragma once

#include <Eigen/Dense>

#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace pdlab {

using ArrayX = Eigen::ArrayXd;
using Index = Eigen::Index;
using Shape = std::vector<Index>;

// Row-major matrix views over flat tensor storage.
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using ConstMapRM = Eigen::Map<const MatRM>;

Index numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] void throw_shape_error(const std::string& op, const Shape& a, const Shape& b);

class TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// Routes one backward pass's gradient flow from consumers into their inputs.
// Flow only enters nodes that require grad; everything else is skipped.
class GradFlow {
 public:
  void push(const NodePtr& parent, ArrayX g);
  // Moves the accumulated flow for n out of the map; false if none arrived.
  bool take(TensorNode* n, ArrayX& out);
  void seed(TensorNode* n, ArrayX g) { flow_[n] = std::move(g); }

 private:
  std::unordered_map<TensorNode*, ArrayX> flow_;
};

using BackpropFn = std::function<void(const ArrayX& upstream, GradFlow& sink)>;

// One node on the tape. Values and gradients live in flat row-major storage;
// ops view them as matrices through Eigen maps.
class TensorNode {
 public:
  Shape shape;
  ArrayX value;
  ArrayX grad;  // size 0 until a backward pass first reaches this node
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackpropFn backprop;

  Index size() const { return value.size(); }
  void accumulate(const ArrayX& g) {
    if (grad.size() == 0) grad = ArrayX::Zero(value.size());
    grad += g;
  }
};

// While a guard is alive, ops compute values only: results carry no parents
// and no backprop closures, so intermediates free as they go out of scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// Value-semantics handle to a tape node. Copies share the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_array(Shape shape, ArrayX data, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::initializer_list<double> vals,
                            bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index size() const { return node_->value.size(); }
  bool is_scalar() const { return size() == 1; }

  // Rank <= 2 matrix geometry: a scalar is 1x1, a rank-1 tensor is one row.
  Index rows() const;
  Index cols() const;

  const ArrayX& array() const { return node_->value; }
  ArrayX& mutable_array() { return node_->value; }
  ConstMapRM mat() const { return ConstMapRM(node_->value.data(), rows(), cols()); }
  MapRM mutable_mat() { return MapRM(node_->value.data(), rows(), cols()); }

  double item() const;
  double at(Index i) const { return node_->value(i); }
  double at(Index r, Index c) const { return node_->value(r * cols() + c); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  bool has_grad() const { return node_->grad.size() > 0; }
  const ArrayX& grad() const;
  ConstMapRM grad_mat() const;
  void zero_grad() { node_->grad.resize(0); }

  // Leaf copy of the value, cut off from the tape.
  Tensor detach() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// Reverse pass from a scalar loss. Each call propagates a fresh unit seed and
// adds the result into every reachable requires_grad node, so repeated calls
// without zeroing accumulate.
void backward(const Tensor& loss);

}  // namespace pdlab
