#include "repose/ad/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace repose::ad {

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, double fill, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value.assign(static_cast<size_t>(numel(shape)), fill);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> data,
                         bool requires_grad) {
  if (static_cast<int64_t>(data.size()) != numel(shape))
    throw std::invalid_argument("from_data: " + std::to_string(data.size()) +
                                " values for shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

int Tensor::dim(int i) const {
  const auto& s = node().shape;
  if (i < 0) i += static_cast<int>(s.size());
  if (i < 0 || i >= static_cast<int>(s.size()))
    throw std::invalid_argument("dim index out of range");
  return s[static_cast<size_t>(i)];
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item() on non-scalar tensor");
  return node().value[0];
}

void Tensor::set_requires_grad(bool v) {
  Node& n = node();
  if (!n.is_leaf && v) throw std::logic_error("set_requires_grad on non-leaf");
  n.requires_grad = v;
}

void Tensor::zero_grad() {
  Node& n = node();
  n.grad.assign(n.value.size(), 0.0);
}

namespace {
bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(Node&)> backward_fn) {
  if (static_cast<int64_t>(value.size()) != numel(shape))
    throw std::logic_error("make_op: value size mismatch for " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->is_leaf = false;
  bool need = false;
  for (const auto& p : parents) need = need || p.node().requires_grad;
  need = need && grad_enabled();
  n->requires_grad = need;
  if (need) {
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.ptr());
    n->backward_fn = std::move(backward_fn);
  }
  // When no parent needs grads the op is a pure value: parents are dropped so
  // long constant chains (data pipelines) don't pin memory.
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
  Node* root = &loss.node();
  if (!root->requires_grad) return;

  // Iterative DFS post-order over the parent DAG.
  std::vector<Node*> order;
  std::unordered_set<Node*> done;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root, 0);
  std::unordered_set<Node*> on_stack{root};
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !done.count(p) && !on_stack.count(p)) {
        stack.emplace_back(p, 0);
        on_stack.insert(p);
      }
    } else {
      order.push_back(node);
      done.insert(node);
      on_stack.erase(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      for (auto& p : n->parents)
        if (p->requires_grad) p->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

}  // namespace repose::ad
