#pragma once

// Reverse-mode autodiff on dense double tensors.
//
// Design: every op builds a Node holding the forward value and a closure that
// scatters the output gradient into its parents. Tensors are cheap handles
// (shared_ptr to Node); the graph is freed when the loss handle goes out of
// scope, while leaf parameters are kept alive by their owners. Everything is
// double precision and single-threaded, so results are bit-reproducible.

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace repose::ad {

using Shape = std::vector<int>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily; same length as value
  bool requires_grad = false;
  bool is_leaf = true;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into parents' grads. Null for leaves and
  // for ops with no differentiable ancestor.
  std::function<void(Node&)> backward_fn;

  void ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  // Leaf constructors.
  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double fill, bool requires_grad = false);
  static Tensor from_data(const Shape& shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  int dim(int i) const;
  int ndim() const { return static_cast<int>(node().shape.size()); }
  int64_t size() const { return static_cast<int64_t>(node().value.size()); }

  const std::vector<double>& value() const { return node().value; }
  std::vector<double>& value() { return node().value; }
  const std::vector<double>& grad() const { return node().grad; }

  double item() const;
  double at(int64_t i) const { return node().value[static_cast<size_t>(i)]; }

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool v);
  const std::string& name() const { return node().name; }
  void set_name(std::string name) { node().name = std::move(name); }

  void zero_grad();

  std::shared_ptr<Node> ptr() const { return n_; }
  Node& node() const {
    if (!n_) throw std::logic_error("use of undefined Tensor");
    return *n_;
  }

 private:
  std::shared_ptr<Node> n_;
};

// Runs reverse-mode accumulation from a scalar loss. Gradients accumulate
// into every reachable node with requires_grad; caller zeroes param grads
// between steps (Adam::zero_grad or Tensor::zero_grad).
void backward(const Tensor& loss);

// While a NoGradGuard is alive, ops record no graph even for parameters with
// requires_grad — inference renders stay flat in memory. Not reentrancy-safe
// across threads (the flag is global, like everything else here).
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Helper used by op implementations: builds the output node, wires parents,
// and installs the backward closure only when some parent needs gradients.
Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(Node&)> backward_fn);

void check(bool cond, const std::string& msg);

}  // namespace repose::ad
