#include "pdlab/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace pdlab {

Index numel(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << "]";
  return os.str();
}

void throw_shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw TensorError(op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void GradFlow::push(const NodePtr& parent, ArrayX g) {
  if (!parent->requires_grad) return;
  auto it = flow_.find(parent.get());
  if (it == flow_.end()) {
    flow_.emplace(parent.get(), std::move(g));
  } else {
    it->second += g;
  }
}

bool GradFlow::take(TensorNode* n, ArrayX& out) {
  auto it = flow_.find(n);
  if (it == flow_.end()) return false;
  out = std::move(it->second);
  flow_.erase(it);
  return true;
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->value = ArrayX::Zero(numel(shape));
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->value = ArrayX::Constant(numel(shape), v);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return full({}, v, requires_grad);
}

Tensor Tensor::from_array(Shape shape, ArrayX data, bool requires_grad) {
  if (data.size() != numel(shape)) {
    throw TensorError("from_array: " + std::to_string(data.size()) +
                      " values do not fill shape " + shape_str(shape));
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_values(Shape shape, std::initializer_list<double> vals, bool requires_grad) {
  ArrayX a(static_cast<Index>(vals.size()));
  Index i = 0;
  for (double v : vals) a(i++) = v;
  return from_array(std::move(shape), std::move(a), requires_grad);
}

Index Tensor::rows() const {
  const Shape& s = node_->shape;
  if (s.size() >= 3) {
    throw TensorError("rows: rank-" + std::to_string(s.size()) + " tensor has no matrix view");
  }
  return s.size() == 2 ? s[0] : 1;
}

Index Tensor::cols() const {
  const Shape& s = node_->shape;
  if (s.size() >= 3) {
    throw TensorError("cols: rank-" + std::to_string(s.size()) + " tensor has no matrix view");
  }
  if (s.size() == 2) return s[1];
  if (s.size() == 1) return s[0];
  return 1;
}

double Tensor::item() const {
  if (size() != 1) {
    throw TensorError("item: tensor of shape " + shape_str(node_->shape) + " is not a scalar");
  }
  return node_->value(0);
}

const ArrayX& Tensor::grad() const {
  if (!has_grad()) {
    throw TensorError("grad: no gradient present (shape " + shape_str(node_->shape) + ")");
  }
  return node_->grad;
}

ConstMapRM Tensor::grad_mat() const {
  return ConstMapRM(grad().data(), rows(), cols());
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<TensorNode>();
  node->shape = node_->shape;
  node->value = node_->value;
  node->requires_grad = false;
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw TensorError("backward: undefined tensor");
  if (loss.size() != 1) {
    throw TensorError("backward: loss of shape " + shape_str(loss.shape()) + " is not scalar");
  }
  TensorNode* root = loss.node().get();
  if (!root->requires_grad) return;  // constant loss: nothing reachable

  // Iterative post-order DFS over parent edges; reversed, it orders every
  // consumer before the nodes it reads.
  std::vector<TensorNode*> topo;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  visited.insert(root);
  stack.push_back({root, 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next_parent++].get();
      if (visited.insert(p).second) stack.push_back({p, 0});
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  GradFlow flow;
  flow.seed(root, ArrayX::Ones(1));
  ArrayX g;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    TensorNode* n = *it;
    if (!flow.take(n, g)) continue;  // no grad path from the loss through this node
    n->accumulate(g);
    if (n->backprop) n->backprop(g, flow);
  }
}

}  // namespace pdlab
